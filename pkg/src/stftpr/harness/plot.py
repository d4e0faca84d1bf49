"""Dependency-free SVG line charts for result tables."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .experiment import ExperimentTable

PANEL_W, PANEL_H = 320, 240
MARGIN = dict(left=48, right=12, top=28, bottom=36)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
_AXES = ("L", "K", "snr_db")


def _varying(table: ExperimentTable) -> list[str]:
    return [a for a in _AXES if len({getattr(r.cell, a) for r in table.rows}) > 1]


def _label(axis: str, v) -> str:
    if axis == "snr_db":
        return "noiseless" if math.isinf(v) else f"SNR {v:g} dB"
    return f"{axis}={v}"


def panels_svg(table: ExperimentTable, value: str | None = None, group_by: str | None = None) -> str:
    varying = _varying(table)
    if group_by is None:
        group_by = "L" if "L" in varying else ("snr_db" if "snr_db" in varying else
                                                (varying[0] if varying else "L"))
    if value is None:
        value = "success_rate" if group_by == "L" else "mean_nmse"
    log_y = value in ("mean_nmse", "median_nmse")
    other = [a for a in varying if a != group_by]

    groups = sorted({getattr(r.cell, group_by) for r in table.rows})
    ks = sorted({r.cell.k for r in table.rows})
    vals = np.array([getattr(r, value) for r in table.rows], dtype=float)
    finite = vals[np.isfinite(vals) & ((vals > 0) if log_y else True)]
    if log_y:
        lo = math.floor(math.log10(finite.min())) if finite.size else -6
        hi = math.ceil(math.log10(finite.max())) if finite.size else 0
        if hi == lo:
            hi = lo + 1
    else:
        lo, hi = 0.0, 1.0 if value == "success_rate" else float(max(finite.max(initial=1.0), 1e-12))

    series_keys = sorted({(r.method,) + tuple(getattr(r.cell, a) for a in other) for r in table.rows},
                         key=lambda s: tuple(str(x) for x in s))
    width = PANEL_W * len(groups)
    height = PANEL_H + 16 + 12 * (-(-len(series_keys) // 6))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{max(width, 900)}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    color = {s: COLORS[i % len(COLORS)] for i, s in enumerate(series_keys)}
    kmin, kmax = (ks[0], ks[-1]) if ks[-1] > ks[0] else (ks[0] - 1, ks[0] + 1)
    pw = PANEL_W - MARGIN["left"] - MARGIN["right"]
    ph = PANEL_H - MARGIN["top"] - MARGIN["bottom"]

    def ypos(v):
        if log_y:
            v = math.log10(max(v, 10.0 ** lo))
        return MARGIN["top"] + ph * (1 - (v - lo) / (hi - lo))

    for gi, gval in enumerate(groups):
        x0 = gi * PANEL_W
        out.append(f'<g class="panel" transform="translate({x0},0)">')
        out.append(f'<text x="{PANEL_W / 2}" y="16" text-anchor="middle">{escape(_label(group_by, gval))}</text>')
        out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
                   f'fill="none" stroke="#444"/>')
        out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{PANEL_H - 6}" text-anchor="middle">k</text>')
        for t in (lo, hi):
            lab = f"1e{int(t)}" if log_y else f"{t:g}"
            out.append(f'<text x="{MARGIN["left"] - 4}" y="{ypos(10.0 ** t if log_y else t) + 3:.1f}" '
                       f'text-anchor="end">{lab}</text>')
        for s in series_keys:
            rows = sorted((r for r in table.rows if getattr(r.cell, group_by) == gval
                           and (r.method,) + tuple(getattr(r.cell, a) for a in other) == s),
                          key=lambda r: r.cell.k)
            pts = [(MARGIN["left"] + pw * (r.cell.k - kmin) / (kmax - kmin), ypos(getattr(r, value)))
                   for r in rows if np.isfinite(getattr(r, value))]
            if not pts:
                continue
            d = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color[s]}" stroke-width="1.5" points="{d}">'
                       f'<title>{escape(" ".join(str(p) for p in s))}</title></polyline>')
        out.append("</g>")
    # legend
    for i, s in enumerate(series_keys):
        x = 8 + (i % 6) * 150
        y = PANEL_H + 12 + (i // 6) * 12
        name = s[0] + "".join(f" {_label(a, v)}" for a, v in zip(other, s[1:]))
        out.append(f'<text x="{x}" y="{y}" fill="{color[s]}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

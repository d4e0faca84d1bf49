"""Files: experiment configs, measurement grids, signals, result tables."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import math
from pathlib import Path

import numpy as np

from ..core import Signal, ValidationError, as_signal, make_window
from ..stft import MeasurementSet, make_geometry
from .experiment import ExperimentConfig, ExperimentTable

__all__ = [
    "CSV_HEADER",
    "load_config",
    "parse_config",
    "dump_config",
    "read_measurements",
    "write_measurements",
    "read_signal",
    "write_signal",
    "export_results",
    "table_to_csv",
]

CSV_HEADER = ("method", "k", "L", "K", "snr_db", "trials", "success_rate", "mean_nmse",
              "median_nmse", "mean_wall_ms")

_LISTS = {"L_values": int, "K_values": int, "k_range": int, "snr_db_values": float, "methods": str}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity", "none", "noiseless"):
        return math.inf
    return float(t)


def _parse_list(text: str, kind):
    items = [p for p in text.replace(",", " ").split() if p]
    out = []
    for item in items:
        if kind is int and ".." in item:
            lo, hi = item.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif kind is float:
            out.append(_parse_float(item))
        else:
            out.append(kind(item))
    return tuple(out)


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments; lists comma/space separated, ``a..b`` ranges)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    if parser.sections() != ["experiment"]:
        raise ValidationError("config must be flat key = value lines (no sections)")
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, raw in parser["experiment"].items():
        if key not in fields:
            raise ValidationError(f"unknown config key {key!r}")
        default = fields[key].default
        try:
            if key in _LISTS:
                value = _parse_list(raw, _LISTS[key])
            elif isinstance(default, bool):
                value = _parse_bool(raw)
            elif isinstance(default, int):
                value = int(raw)
            elif isinstance(default, float):
                value = _parse_float(raw)
            else:
                value = raw.strip()
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {raw!r}") from exc
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ", ".join(_fmt(x) for x in v)
        else:
            v = _fmt(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# measurements and signals


def write_measurements(path, y: MeasurementSet) -> None:
    g = y.geometry
    Y = np.asarray(y.y, dtype=float).reshape(g.M, g.K)
    with open(path, "w") as fh:
        fh.write(f"{g.N} {g.W} {g.L} {g.K} {g.M}\n")
        for row in Y:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_measurements(path, window_kind: str = "square", taps=None) -> MeasurementSet:
    """Read ``N W L K M`` then M rows of K values."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValidationError("empty measurement file")
    try:
        N, W, L, K, M = (int(v) for v in lines[0].split())
    except ValueError as exc:
        raise ValidationError("header must be five integers: N W L K M") from exc
    try:
        Y = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"non-numeric measurement entry: {exc}") from exc
    if Y.shape != (M, K):
        raise ValidationError(f"expected {M} rows of {K} values, got shape {Y.shape}")
    window = make_window(window_kind, W, N, taps=taps)
    geom = make_geometry(window, L, K)
    if geom.M != M:
        raise ValidationError(f"M={M} disagrees with ceil(N/L)={geom.M}")
    return MeasurementSet(Y, geom)


def write_signal(path_or_file, x) -> None:
    x = as_signal(x).values
    data = np.column_stack([x.real, x.imag])
    np.savetxt(path_or_file, data, fmt="%.17g")


def read_signal(path) -> Signal:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] == 1:
        return Signal(data[:, 0].astype(complex))
    if data.shape[1] != 2:
        raise ValidationError("signal file must have one (real) or two (real, imag) columns")
    return Signal(data[:, 0] + 1j * data[:, 1])


# ---------------------------------------------------------------------------
# result tables


def _num(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6g}"


def table_to_csv(table: ExperimentTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in table.rows:
        c = r.cell
        w.writerow([r.method, c.k, c.L, c.K, _num(c.snr_db), r.trials, _num(r.success_rate),
                    _num(r.mean_nmse), _num(r.median_nmse), f"{r.mean_wall_ms:.3f}"])
    return buf.getvalue()


def export_results(table: ExperimentTable, format: str, path, value: str | None = None,
                   group_by: str | None = None) -> list[Path]:
    """Write ``csv`` or ``svg-lineplot`` output; returns the files written.

    SVG: one panel per value of ``group_by`` (default ``L`` when several L
    values are present, else ``snr_db`` or ``K``), success rate (or
    ``value``) against k, one polyline per remaining series.
    """
    if not table.rows:
        raise ValidationError("nothing to export: empty table")
    path = Path(path)
    if format == "csv":
        path.write_text(table_to_csv(table))
        return [path]
    if format != "svg-lineplot":
        raise ValidationError(f"unknown format {format!r}")
    from .plot import panels_svg

    path.write_text(panels_svg(table, value=value, group_by=group_by))
    return [path]

"""Exact recovery of nonvanishing signals from L=1 spectrograms, and
constructions of distinct signals that share a spectrogram."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .core import GeometryError, Signal, Window, check_uniqueness_conditions, make_window
from .stft import MeasurementSet, make_geometry, stft_batch

__all__ = [
    "IllPosedError",
    "UnsupportedGeometryError",
    "NonvanishingError",
    "PropagationError",
    "ConstructionError",
    "MagnitudeProfile",
    "PhaseChain",
    "AmbiguityPair",
    "recover_magnitudes",
    "recover_phases",
    "direct_recover",
    "phase_chain",
    "construct_separated_ambiguity",
    "construct_shift_ambiguity",
    "unreachable_residues",
]

CLAMP_RELATIVE = 1e-12
NONVANISHING_TOL = 1e-12
EQUALITY_RTOL = 1e-12


class IllPosedError(ValueError):
    pass


class UnsupportedGeometryError(ValueError):
    pass


class NonvanishingError(ValueError):
    pass


class PropagationError(ValueError):
    def __init__(self, message: str, unreached: list[int]):
        super().__init__(message)
        self.unreached = unreached


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class MagnitudeProfile:
    z: np.ndarray


@dataclass(frozen=True)
class PhaseChain:
    deltas: np.ndarray  # deltas[m] = arg x[m-a] - arg x[m-a-W+1]
    anchor: int = 0


@dataclass(frozen=True)
class AmbiguityPair:
    u: Signal
    v: Signal
    certificate: dict = field(default_factory=dict)


def _require_full_l1(y: MeasurementSet, window: Window) -> np.ndarray:
    geom = y.geometry
    if geom.L != 1:
        raise UnsupportedGeometryError(f"direct recovery needs L=1, got L={geom.L}")
    if geom.K != geom.N or geom.dft_length != geom.N:
        raise UnsupportedGeometryError(f"direct recovery needs K=N={geom.N}, got K={geom.K}")
    if window.N != geom.N:
        raise GeometryError("window period does not match the measurements")
    return np.asarray(y.y, dtype=float)


def recover_magnitudes(y: MeasurementSet, window: Window) -> MagnitudeProfile:
    """Solve the circulant system linking spectrogram row sums to |x|^2."""
    Y = _require_full_l1(y, window)
    report = check_uniqueness_conditions(window)
    if not report.cond_i:
        raise IllPosedError(
            f"DFT of |g|^2 vanishes at bins {list(report.vanishing_bins)}; magnitudes are not determined")
    N = window.N
    row_sums = Y.sum(axis=1)
    # row_sums[m] = N * sum_n |x[n]|^2 |g[m-n]|^2, a circular convolution
    v_hat = np.fft.fft(np.abs(window.taps) ** 2)
    z = np.fft.ifft(np.fft.fft(row_sums) / (N * v_hat)).real
    floor = CLAMP_RELATIVE * max(z.max(initial=0.0), 0.0)
    z = np.where(z < floor, 0.0, z)
    return MagnitudeProfile(z)


def unreachable_residues(N: int, step: int, start: int = 0) -> list[int]:
    reached = {(start + i * step) % N for i in range(N)}
    return [r for r in range(N) if r not in reached]


def phase_chain(y: MeasurementSet, window: Window, z: MagnitudeProfile) -> PhaseChain:
    """Phase differences across lag W-1 read off each row's autocorrelation."""
    Y = _require_full_l1(y, window)
    N, W, a = window.N, window.W, window.support_start
    # r_m[n] = (1/N) sum_k |X(m,k)|^2 e^{2j pi k n / N}; only lag W-1 is needed
    lag = W - 1
    r = Y @ np.exp(2j * np.pi * np.arange(N) * lag / N) / N
    m = np.arange(N)
    head = (m - a) % N
    tail = (m - a - W + 1) % N
    g_first, g_last = window.taps[a], window.taps[(a + W - 1) % N]
    known = np.sqrt(z.z[head] * z.z[tail]) * g_first * np.conj(g_last)
    return PhaseChain(np.angle(r / known))


def recover_phases(y: MeasurementSet, window: Window, z: MagnitudeProfile) -> Signal:
    """Propagate lag-(W-1) phase differences from x[0] (taken real positive)."""
    N, W, a = window.N, window.W, window.support_start
    if N == 1:
        # one sample: only its global phase is unknown
        return Signal(np.sqrt(np.asarray(z.z, dtype=float)).astype(complex))
    if W < 2:
        raise UnsupportedGeometryError("phase recovery needs window length W >= 2")
    if N < 2 * W - 1:
        raise UnsupportedGeometryError(f"phase recovery needs N >= 2W-1 (N={N}, W={W})")
    zz = np.asarray(z.z, dtype=float)
    small = np.flatnonzero(zz <= NONVANISHING_TOL * max(zz.max(initial=0.0), 1e-300))
    if small.size:
        raise NonvanishingError(f"signal vanishes at indices {small.tolist()}")
    unreached = unreachable_residues(N, W - 1)
    if unreached:
        raise PropagationError(
            f"gcd(N={N}, W-1={W - 1}) = {gcd(N, W - 1)}: indices {unreached} unreachable from 0",
            unreached)
    chain = phase_chain(y, window, z)
    phase = np.zeros(N)
    q = 0
    for _ in range(N - 1):
        nxt = (q + W - 1) % N
        # the difference arg x[nxt] - arg x[q] sits at window position m = nxt + a
        phase[nxt] = phase[q] + chain.deltas[(nxt + a) % N]
        q = nxt
    return Signal(np.sqrt(zz) * np.exp(1j * phase))


def direct_recover(y: MeasurementSet, window: Window) -> Signal:
    """Recover x (up to global phase) from noiseless L=1, K=N spectrogram data."""
    N, W = window.N, window.W
    unreached = unreachable_residues(N, W - 1) if W >= 2 else []
    if unreached:
        # integer condition fails: report before any numerical work
        raise PropagationError(
            f"gcd(N={N}, W-1={W - 1}) = {gcd(N, W - 1)}: indices {unreached} unreachable from 0",
            unreached)
    return recover_phases(y, window, recover_magnitudes(y, window))


# ---------------------------------------------------------------------------
# ambiguity constructions


def _spectrograms_equal(u: np.ndarray, v: np.ndarray, window: Window, Ls, K: int) -> dict:
    worst = {}
    for L in Ls:
        geom = make_geometry(window, L, K)
        pu = np.abs(stft_batch(u, geom)) ** 2
        pv = np.abs(stft_batch(v, geom)) ** 2
        scale = max(pu.max(initial=0.0), pv.max(initial=0.0), 1e-300)
        err = float(np.abs(pu - pv).max(initial=0.0) / scale)
        if err > EQUALITY_RTOL:
            raise ConstructionError(f"spectrograms differ at L={L} (relative error {err:.3e})")
        worst[int(L)] = err
    return worst


def _circular_gap(start: int, end: int, N: int) -> int:
    return (start - end) % N


def construct_separated_ambiguity(support1: tuple[int, int], support2: tuple[int, int],
                                  amplitudes: tuple, window: Window, N: int | None = None,
                                  Ls=None, K: int | None = None) -> AmbiguityPair:
    """u = x + y and v = x - y for x, y on intervals separated by >= W samples.

    ``amplitudes`` is ``(x, y)``: either length-N signals or the values on
    each interval (interval lengths b - a + 1, taken modulo N).
    """
    N = window.N if N is None else int(N)
    if N != window.N:
        raise GeometryError("window period does not match N")
    W = window.W
    (a1, b1), (a2, b2) = support1, support2
    a1, b1, a2, b2 = a1 % N, b1 % N, a2 % N, b2 % N
    len1 = (b1 - a1) % N + 1
    len2 = (b2 - a2) % N + 1
    gap12 = _circular_gap(a2, b1, N)
    gap21 = _circular_gap(a1, b2, N)
    if gap12 < W or gap21 < W:
        raise ConstructionError(
            f"interval gaps a2-b1={gap12} and a1-b2={gap21} must both be >= W={W}")
    if len1 + len2 > N:
        raise ConstructionError("intervals overlap")

    def place(values, a, length):
        values = np.asarray(values, dtype=complex).ravel()
        idx = (a + np.arange(length)) % N
        if values.size == N:
            off = np.ones(N, dtype=bool)
            off[idx] = False
            if np.any(values[off] != 0):
                raise ConstructionError("amplitude signal has entries outside its interval")
            return values.copy()
        if values.size != length:
            raise ConstructionError(f"expected {length} interval values, got {values.size}")
        out = np.zeros(N, dtype=complex)
        out[idx] = values
        return out

    x = place(amplitudes[0], a1, len1)
    y = place(amplitudes[1], a2, len2)
    u, v = x + y, x - y
    Ls = [d for d in range(1, N + 1)] if Ls is None else list(Ls)
    K = N if K is None else int(K)
    errors = _spectrograms_equal(u, v, window, Ls, K)
    cert = {"kind": "separated", "N": N, "W": W, "support1": (a1, b1), "support2": (a2, b2),
            "gaps": (gap12, gap21), "K": K, "L_values": sorted(errors), "max_rel_error": errors}
    return AmbiguityPair(Signal(u), Signal(v), cert)


def construct_shift_ambiguity(N: int, W: int, L: int, segment_length: int, segment_position: int,
                              rng_seed: int = 0, shift: int | None = None,
                              phase: complex | None = None, background: bool = True,
                              K: int | None = None) -> AmbiguityPair:
    """Two signals differing by a shifted, rephased short segment.

    With a square window and W, N multiples of L, a segment of length L - r
    inside an interval [(a-1)L+1, aL] that has at least W - L zeros on both
    sides can move by up to r samples within the interval and pick up any
    unit phase without changing the spectrogram. ``shift`` defaults to r and
    ``phase`` to a seeded random unit phase. With ``background`` the rest of
    the signal (outside the guard zone) is filled with random values.
    """
    rng = np.random.default_rng(rng_seed)
    if L < 2 or N % L or W % L:
        raise ConstructionError(f"need L >= 2 dividing both N={N} and W={W} (L={L})")
    if not 1 <= W <= N:
        raise ConstructionError("need 1 <= W <= N")
    r = L - segment_length
    if not 1 <= r <= L - 1:
        raise ConstructionError(f"segment length must be L - r with 1 <= r <= L-1 (got {segment_length})")
    pos = int(segment_position)
    block = -(-pos // L)  # interval [(block-1)L+1, block*L] containing pos
    lo, hi = (block - 1) * L + 1, block * L
    shift = r if shift is None else int(shift)
    if abs(shift) > r:
        raise ConstructionError(f"shift {shift} exceeds r={r}")
    for start in (pos, pos + shift):
        if start < lo or start + segment_length - 1 > hi:
            raise ConstructionError(
                f"segment [{start}, {start + segment_length - 1}] leaves interval [{lo}, {hi}]")
    guard = W - L
    if L + 2 * guard > N:
        raise ConstructionError(f"N={N} too small for an interval of {L} with {guard} zeros each side")
    if phase is None:
        phase = np.exp(2j * np.pi * rng.random())
    phase = complex(phase)
    if not np.isclose(abs(phase), 1.0, rtol=0, atol=1e-12):
        raise ConstructionError("phase factor must have unit modulus")

    seg = rng.standard_normal(segment_length) + 1j * rng.standard_normal(segment_length)
    x = np.zeros(N, dtype=complex)
    if background:
        zone = (np.arange(lo - guard, hi + guard + 1)) % N
        free = np.ones(N, dtype=bool)
        free[zone] = False
        x[free] = rng.standard_normal(free.sum()) + 1j * rng.standard_normal(free.sum())
    u = x.copy()
    v = x.copy()
    u[(pos + np.arange(segment_length)) % N] = seg
    v[(pos + shift + np.arange(segment_length)) % N] = phase * seg
    window = make_window("square", W, N, 0)
    K = W if K is None else int(K)
    errors = _spectrograms_equal(u, v, window, [L], K)
    cert = {"kind": "shift", "N": N, "W": W, "L": L, "r": r, "interval": (lo, hi),
            "segment": (pos, pos + segment_length - 1), "shift": shift, "phase": phase,
            "guard": guard, "K": K, "L_values": [L], "max_rel_error": errors}
    return AmbiguityPair(Signal(u), Signal(v), cert)

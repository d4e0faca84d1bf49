"""Alternating projections for spectrogram inversion.

Both methods alternate a magnitude replacement (keep the current STFT phase,
impose the measured magnitude) with a signal update:

* GLA: least-squares overlap-add inversion of the modified grid.
* PCGP: the grid is evaluated at every sample position, its inverse-DFT
  sections are re-aligned into a matrix that equals window (x) signal when the
  grid is consistent, and the signal is read off the dominant singular pair.

Restarts run as one batch; each has its own seeded starting point and halts
independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import GeometryError, Signal, Window, canonical_phase
from .stft import MeasurementSet, StftGeometry, _check_coverage

__all__ = [
    "InputError",
    "AltProjConfig",
    "AltProjResult",
    "gla_run",
    "pcgp_run",
    "altproj_run",
    "pcgp_aligned_matrix",
    "spectrogram_residual",
]

ZERO_MAGNITUDE = 1e-14
POWER_STEPS = 50
POWER_TOL = 1e-14
# residual / sum(y) below this counts as an exact fit (magnitudes agree to round-off)
EXACT_FIT = 100 * np.finfo(float).eps ** 2


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class AltProjConfig:
    max_iterations: int = 1000
    restarts: int = 50
    rng_seed: int = 0
    halt_tolerance: float = 1e-8
    method: str = "GLA"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.method.upper() not in ("GLA", "PCGP"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class AltProjResult:
    estimate: Signal
    residual_trace: np.ndarray  # entry l = residual of iterate l (entry 0: starting point)
    best_restart: int
    final_residuals: np.ndarray = field(repr=False, default=None)

    @property
    def residual(self) -> float:
        return float(self.residual_trace[-1])


def spectrogram_residual(values: np.ndarray, sqrt_y: np.ndarray) -> np.ndarray:
    """sum over the grid of (sqrt(y) - |X|)^2, batched over leading axes."""
    return np.sum((sqrt_y - np.abs(values)) ** 2, axis=(-2, -1))


def _prepare(y: MeasurementSet, window: Window) -> tuple[StftGeometry, np.ndarray]:
    geom = y.geometry
    if window.N != geom.N or not np.array_equal(window.taps, geom.window.taps):
        raise GeometryError("window does not match the measurement geometry")
    Y = np.asarray(y.y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise InputError("measurements contain non-finite entries")
    if not geom.invertible:
        raise GeometryError(f"alternating projections need K >= W (K={geom.K}, W={geom.W})")
    _check_coverage(geom)
    return geom, np.sqrt(np.maximum(Y, 0.0))


def _initial_points(N: int, config: AltProjConfig, init) -> np.ndarray:
    rng = np.random.default_rng(config.rng_seed)
    R = config.restarts
    x0 = (rng.standard_normal((R, N)) + 1j * rng.standard_normal((R, N))) / np.sqrt(2)
    if init is not None:
        init = np.asarray(init, dtype=complex).ravel()
        if init.size != N:
            raise GeometryError(f"init has length {init.size}, expected {N}")
        x0[0] = init
    return x0


def _iterate(x0, forward, residual, update, state, floor, config: AltProjConfig):
    """Shared driver.

    ``forward(x)`` gives the raw section DFTs the update works on,
    ``residual(F)`` their per-restart misfit, ``update(x, F, state) -> (x, state)``
    the next iterate.
    """
    R = x0.shape[0]
    x = x0.copy()
    F = forward(x)
    traces = np.full((config.max_iterations + 1, R), np.nan)
    traces[0] = residual(F)
    active = np.ones(R, dtype=bool)
    steps = np.zeros(R, dtype=int)
    tol = config.halt_tolerance
    for it in range(1, config.max_iterations + 1):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        if act.size == R:
            xa, sa = update(x, F, state)
            x, F = xa, forward(xa)
            state = sa
            r_new = residual(F)
        else:
            xa, sa = update(x[act], F[act], None if state is None else state[act])
            Fa = forward(xa)
            r_new = residual(Fa)
            x[act], F[act] = xa, Fa
            if state is not None:
                state[act] = sa
        r_old = traces[it - 1, act]
        traces[it, act] = r_new
        steps[act] = it
        exact = r_new <= floor
        if exact.any():
            # an exact fit is the answer; the other restarts cannot beat it
            active[:] = False
        active[act[exact | (np.abs(r_old - r_new) < tol * r_old)]] = False
    final = traces[steps, np.arange(R)]
    best = int(np.argmin(final))
    return x[best], traces[: steps[best] + 1, best].copy(), best, final


class _Loop:
    """Per-geometry buffers and passes shared by GLA and PCGP."""

    def __init__(self, geom: StftGeometry, sqrt_y: np.ndarray):
        self.geom = geom
        self.sqrt_y = np.ascontiguousarray(sqrt_y, dtype=float)
        self.index = np.ascontiguousarray(geom.sample_index, dtype=np.int64)
        self.taps = np.ascontiguousarray(geom.section_taps, dtype=complex)
        self.ctaps = np.conj(self.taps)
        self.cramp = np.ascontiguousarray(np.conj(geom.ramp))
        self.coverage = np.ascontiguousarray(geom.coverage, dtype=float)
        self.floor = EXACT_FIT * float(np.sum(self.sqrt_y ** 2))

    def forward(self, x):
        """Raw section DFTs; the STFT is these times the unit ramp."""
        g = self.geom
        frames = np.zeros((x.shape[0], g.M, g.K), dtype=complex)
        _kernels.frame(x, self.index, self.taps, frames)
        return np.fft.fft(frames, axis=-1)

    def residual(self, F):
        return _kernels.residual(F, self.sqrt_y)

    def projected_sections(self, F):
        """Inverse DFT of the magnitude-replaced grid (first W entries are the sections)."""
        B = np.empty_like(F)
        _kernels.magnitude_step(F, self.sqrt_y, self.cramp, ZERO_MAGNITUDE, B)
        return np.fft.ifft(B, axis=-1)


def _setup(y, window):
    geom, sqrt_y = _prepare(y, window)
    return geom, _Loop(geom, sqrt_y)


def _zero_result(loop: _Loop, x0: np.ndarray) -> AltProjResult:
    # all-zero data: zero is the only consistent signal once every sample is covered
    start = loop.residual(loop.forward(x0))
    return AltProjResult(Signal(np.zeros(x0.shape[1])), np.array([start[0], 0.0]), 0,
                         np.zeros(x0.shape[0]))


def gla_run(y: MeasurementSet, window: Window, config: AltProjConfig | None = None,
            init=None) -> AltProjResult:
    """Griffin-Lim iterations from ``config.restarts`` random starts.

    ``init`` (optional) replaces the first random starting point.
    """
    config = config or AltProjConfig()
    geom, loop = _setup(y, window)
    x0 = _initial_points(geom.N, config, init)
    if not loop.sqrt_y.any():
        return _zero_result(loop, x0)

    def update(x, F, _):
        out = np.empty_like(x)
        _kernels.overlap_add(loop.projected_sections(F), loop.index, loop.ctaps, loop.coverage, out)
        return out, None

    est, trace, best, final = _iterate(x0, loop.forward, loop.residual, update, None,
                                       loop.floor, config)
    return AltProjResult(Signal(canonical_phase(est)), trace, best, final)


def pcgp_aligned_matrix(full_grid: np.ndarray, geom1: StftGeometry) -> np.ndarray:
    """(..., W, N) matrix with entry (j, n) = x[n] g[-d_j] when the stride-1 grid is consistent."""
    sections = np.fft.ifft(np.asarray(full_grid) * np.conj(geom1.ramp), axis=-1)[..., : geom1.W]
    n = np.arange(geom1.N)[None, :]
    # window position of sample n seen at offset d_j is m = n - d_j
    rows = (n - geom1.offsets[:, None]) % geom1.N
    return sections[..., rows, np.arange(geom1.W)[:, None]]


def _rank_one_signal(T: np.ndarray, g: np.ndarray, u0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signal factor of the dominant rank-one term of T, scaled against the known window g."""
    return _kernels.rank_one(np.ascontiguousarray(T), np.ascontiguousarray(g, dtype=complex),
                             np.ascontiguousarray(u0), POWER_STEPS, POWER_TOL)


def pcgp_run(y: MeasurementSet, window: Window, config: AltProjConfig | None = None,
             init=None) -> AltProjResult:
    """Principal-components generalized projections from random starts.

    The grid lives at every position; only rows at measured positions
    (multiples of L) get their magnitudes replaced. The other rows come back
    unchanged from the inverse DFT, so their aligned entries are just
    x[n] g[-d_j] and only the measured rows are transformed.
    """
    config = config or AltProjConfig(method="PCGP")
    geom, loop = _setup(y, window)
    x0 = _initial_points(geom.N, config, init)
    if not loop.sqrt_y.any():
        return _zero_result(loop, x0)
    g = loop.taps
    u0 = np.tile(g / np.linalg.norm(g), (config.restarts, 1))

    def update(x, F, u):
        T = np.empty((x.shape[0], geom.W, geom.N), dtype=complex)
        _kernels.align(x, loop.projected_sections(F), loop.index, g, T)
        return _rank_one_signal(T, g, u)

    est, trace, best, final = _iterate(x0, loop.forward, loop.residual, update, u0,
                                       loop.floor, config)
    return AltProjResult(Signal(canonical_phase(est)), trace, best, final)


def altproj_run(y: MeasurementSet, window: Window, config: AltProjConfig, init=None) -> AltProjResult:
    run = gla_run if config.method.upper() == "GLA" else pcgp_run
    return run(y, window, config, init)

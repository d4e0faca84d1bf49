"""Periodic short-time Fourier transform, its least-squares inverse, and the
linear measurement rows behind spectrogram measurements of a sparse signal.

Conventions
-----------
Window position m sits at sample mL. The windowed section x[n] g[mL - n] is
nonzero for n = mL + d with d in [-a-W+1, -a] (a = window support start).
Each section is laid on a DFT grid of length ``dft_length = max(K, W)`` with
sample mL at index 0 (offset d goes to index d mod dft_length) and only the
first K bins are kept. When ``dft_length == N`` this differs from the
textbook STFT sum with kernel exp(-2j pi k n / N) only by the unit factor
exp(2j pi k m L / N); see :meth:`StftGeometry.textbook_phase`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Dictionary, GeometryError, Signal, Window, as_signal

__all__ = [
    "InversionError",
    "StftGeometry",
    "StftGrid",
    "MeasurementSet",
    "MeasurementOperator",
    "make_geometry",
    "stft_forward",
    "stft_batch",
    "magnitude_sq",
    "istft",
    "istft_batch",
    "build_measurement_operator",
]


class InversionError(ValueError):
    """Some samples are not covered by any window position."""


@dataclass(frozen=True, eq=False)
class StftGeometry:
    window: Window
    L: int
    K: int

    def __post_init__(self):
        N = self.window.N
        if not 1 <= self.L <= N:
            raise GeometryError(f"stride L={self.L} must satisfy 1 <= L <= N={N}")
        if self.K < 1:
            raise GeometryError(f"DFT length K={self.K} must be >= 1")

    @property
    def N(self) -> int:
        return self.window.N

    @property
    def W(self) -> int:
        return self.window.W

    @property
    def M(self) -> int:
        return -(-self.N // self.L)

    @property
    def P(self) -> int:
        return self.M * self.K

    @property
    def dft_length(self) -> int:
        return max(self.K, self.W)

    @property
    def invertible(self) -> bool:
        """All dft_length bins are kept, so each section is recoverable."""
        return self.K >= self.W

    @property
    def key(self) -> tuple:
        return (self.N, self.W, self.window.support_start, self.L, self.K)

    @cached_property
    def offsets(self) -> np.ndarray:
        a, W = self.window.support_start, self.W
        return np.arange(-a - W + 1, -a + 1)

    @cached_property
    def section_taps(self) -> np.ndarray:
        """g[-d] for each section offset d (identical for every m)."""
        return self.window.taps[(-self.offsets) % self.N]

    @cached_property
    def sample_index(self) -> np.ndarray:
        """(M, W) array: signal index n for section position j of window m."""
        m = np.arange(self.M)[:, None] * self.L
        return (m + self.offsets[None, :]) % self.N

    @cached_property
    def grid_index(self) -> np.ndarray:
        """DFT-grid slot of each section offset."""
        return self.offsets % self.dft_length

    @cached_property
    def ramp(self) -> np.ndarray:
        """exp(-2j pi k d_0 / dft_length) for the kept bins; d_0 is the first offset."""
        k = np.arange(self.K)
        return np.exp(-2j * np.pi * k * (self.offsets[0] % self.dft_length) / self.dft_length)

    @cached_property
    def kernel(self) -> np.ndarray:
        """(K, W) matrix mapping a section to its kept DFT bins (taps included)."""
        k = np.arange(self.K)[:, None]
        t = self.grid_index[None, :]
        return np.exp(-2j * np.pi * k * t / self.dft_length) * self.section_taps[None, :]

    @cached_property
    def coverage(self) -> np.ndarray:
        """sum_m |g[mL - n]|^2 for every n."""
        w2 = np.broadcast_to(np.abs(self.section_taps) ** 2, self.sample_index.shape)
        return np.bincount(self.sample_index.ravel(), weights=w2.ravel(), minlength=self.N)

    def textbook_phase(self) -> np.ndarray:
        """(M, K) unit factors turning these values into the plain N-periodic STFT.

        Only meaningful when ``dft_length == N``.
        """
        m = np.arange(self.M)[:, None] * self.L
        k = np.arange(self.K)[None, :]
        return np.exp(-2j * np.pi * k * m / self.N)


def make_geometry(window: Window, L: int, K: int) -> StftGeometry:
    return StftGeometry(window, int(L), int(K))


@dataclass(frozen=True, eq=False)
class StftGrid:
    values: np.ndarray
    geometry: StftGeometry

    @property
    def M(self) -> int:
        return self.geometry.M


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    y: np.ndarray
    geometry: StftGeometry
    noise_snr_db: float | None = None

    @property
    def M(self) -> int:
        return self.geometry.M

    @property
    def K(self) -> int:
        return self.geometry.K

    @property
    def P(self) -> int:
        return self.y.size


def stft_batch(x: np.ndarray, geom: StftGeometry) -> np.ndarray:
    """STFT of a stack of signals: (..., N) -> (..., M, K)."""
    x = np.asarray(x)
    if x.shape[-1] != geom.N:
        raise GeometryError(f"signal length {x.shape[-1]} does not match window period {geom.N}")
    sections = x[..., geom.sample_index] * geom.section_taps
    # slot of offset j is (d_0 + j) mod dft_length: a unit ramp on the natural-order DFT
    return np.fft.fft(sections, n=geom.dft_length, axis=-1)[..., : geom.K] * geom.ramp


def stft_forward(x, window: Window, L: int, K: int) -> StftGrid:
    """Windowed DFTs of ``x`` at positions 0, L, 2L, ... (ceil(N/L) of them)."""
    geom = make_geometry(window, L, K)
    return StftGrid(stft_batch(as_signal(x).values, geom), geom)


def magnitude_sq(grid: StftGrid) -> MeasurementSet:
    return MeasurementSet(np.abs(grid.values) ** 2, grid.geometry)


def _check_coverage(geom: StftGeometry) -> None:
    gaps = np.flatnonzero(geom.coverage <= 0)
    if gaps.size:
        raise InversionError(f"samples {gaps.tolist()} are not covered by any window position")


def istft_batch(values: np.ndarray, geom: StftGeometry) -> np.ndarray:
    """Overlap-add least-squares inverse of a stack of grids: (..., M, K) -> (..., N)."""
    if not geom.invertible:
        raise GeometryError(f"inversion needs K >= W (K={geom.K}, W={geom.W})")
    _check_coverage(geom)
    values = np.asarray(values) * np.conj(geom.ramp)
    sections = np.fft.ifft(values, axis=-1)[..., : geom.W]
    lead = values.shape[:-2]
    weighted = (sections * np.conj(geom.section_taps)).reshape(-1, geom.M * geom.W)
    B = weighted.shape[0]
    # overlap-add as one bincount over (batch row, sample) bins
    bins = (geom.sample_index.ravel()[None, :] + geom.N * np.arange(B)[:, None]).ravel()
    re = np.bincount(bins, weights=weighted.real.ravel(), minlength=B * geom.N)
    im = np.bincount(bins, weights=weighted.imag.ravel(), minlength=B * geom.N)
    return ((re + 1j * im).reshape(lead + (geom.N,))) / geom.coverage


def istft(grid: StftGrid, window: Window | None = None, L: int | None = None) -> Signal:
    """Invert a grid by per-section inverse DFT and overlap-add division."""
    geom = grid.geometry
    if window is not None and L is not None:
        if window.N != geom.N or window.W != geom.W or L != geom.L or not np.array_equal(
                window.taps, geom.window.taps):
            raise GeometryError("window/stride do not match the grid geometry")
    return Signal(istft_batch(grid.values, geom))


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """Dense rows a_p (P x D) with y_p = |a_p . s|^2; row p = m * K + k."""

    rows: np.ndarray
    geometry: StftGeometry | None = None

    @property
    def P(self) -> int:
        return self.rows.shape[0]

    @property
    def D(self) -> int:
        return self.rows.shape[1]

    def apply(self, s) -> np.ndarray:
        return self.rows @ np.asarray(s)

    def measure(self, s) -> np.ndarray:
        return np.abs(self.apply(s)) ** 2


def build_measurement_operator(window: Window, L: int, K: int,
                               dictionary: Dictionary | np.ndarray) -> MeasurementOperator:
    D = dictionary.columns if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    geom = make_geometry(window, L, K)
    if D.ndim != 2 or D.shape[0] != geom.N:
        raise GeometryError(f"dictionary must have N={geom.N} rows, got shape {D.shape}")
    # rows[m, k, :] = sum_j kernel[k, j] * D[n(m, j), :]
    rows = np.einsum("kw,mwd->mkd", geom.kernel, D[geom.sample_index])
    return MeasurementOperator(rows.reshape(geom.P, D.shape[1]), geom)

"""Value types shared by every solver: signals, windows, dictionaries, sparse
instances, and the uniqueness-condition checker for L=1 STFT measurements."""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

__all__ = [
    "GeometryError",
    "ValidationError",
    "InstanceError",
    "Signal",
    "Window",
    "Dictionary",
    "SparseInstance",
    "ConditionReport",
    "as_signal",
    "make_window",
    "check_uniqueness_conditions",
    "sample_sparse_instance",
    "canonical_phase",
]

DFT_TOLERANCE = 1e-10
NORM_TOLERANCE = 1e-12


class GeometryError(ValueError):
    """Incompatible sizes: window length, stride, DFT length, dimensions."""


class ValidationError(ValueError):
    """An input violates a structural invariant (e.g. window tightness)."""


class InstanceError(ValueError):
    """Sparse instance parameters are inconsistent."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Signal:
    """Length-N complex sequence; all index arithmetic is modulo N."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).ravel()
        if v.size < 1:
            raise GeometryError("signal length must be >= 1")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def length(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_signal(x) -> Signal:
    return x if isinstance(x, Signal) else Signal(np.asarray(x))


@dataclass(frozen=True)
class Window:
    """N-periodic window whose support lies in [start, start+W-1] mod N.

    ``taps`` has length N. The first and last taps of the support must be
    nonzero, so W is the tightest support length.
    """

    taps: np.ndarray
    support_start: int
    support_length: int

    def __post_init__(self):
        taps = np.array(self.taps, dtype=complex).ravel()
        N = taps.size
        W = int(self.support_length)
        if not 1 <= W <= N:
            raise GeometryError(f"window length W={W} must satisfy 1 <= W <= N={N}")
        a = int(self.support_start) % N
        support = (a + np.arange(W)) % N
        if taps[a] == 0 or taps[(a + W - 1) % N] == 0:
            raise ValidationError("first and last taps of the declared support must be nonzero")
        outside = np.ones(N, dtype=bool)
        outside[support] = False
        if np.any(taps[outside] != 0):
            raise ValidationError("window taps must vanish outside the declared support")
        object.__setattr__(self, "taps", _frozen(taps))
        object.__setattr__(self, "support_start", a)
        object.__setattr__(self, "support_length", W)

    @property
    def N(self) -> int:
        return self.taps.size

    @property
    def W(self) -> int:
        return self.support_length

    @property
    def support(self) -> np.ndarray:
        return (self.support_start + np.arange(self.W)) % self.N

    @property
    def is_square(self) -> bool:
        return bool(np.all(self.taps[self.support] == 1))


def make_window(kind: str, W: int, N: int, support_start: int = 0, taps=None) -> Window:
    """Build a square window or wrap custom support taps.

    For ``kind="custom"``, ``taps`` is either the W support values (placed at
    ``support_start``) or a full length-N tap vector.
    """
    if not 1 <= W <= N:
        raise GeometryError(f"window length W={W} must satisfy 1 <= W <= N={N}")
    a = support_start % N
    idx = (a + np.arange(W)) % N
    full = np.zeros(N, dtype=complex)
    if kind == "square":
        full[idx] = 1.0
    elif kind == "custom":
        if taps is None:
            raise ValidationError("custom window needs taps")
        taps = np.asarray(taps, dtype=complex).ravel()
        if taps.size == W:
            full[idx] = taps
        elif taps.size == N:
            full = taps.copy()
        else:
            raise GeometryError(f"custom taps must have length W={W} or N={N}, got {taps.size}")
    else:
        raise ValueError(f"unknown window kind {kind!r}")
    return Window(full, a, W)


@dataclass(frozen=True)
class ConditionReport:
    cond_i: bool
    cond_ii: bool
    cond_iii: bool
    min_abs_dft_of_v: float
    # square windows only: gcd(N, W) == 1 guarantees cond_i
    coprime_shortcut: bool | None = None
    vanishing_bins: tuple = ()

    @property
    def all_hold(self) -> bool:
        return self.cond_i and self.cond_ii and self.cond_iii


def check_uniqueness_conditions(window: Window, N: int | None = None,
                                tol: float = DFT_TOLERANCE) -> ConditionReport:
    """Evaluate the three L=1 uniqueness conditions for ``window``.

    (i) the N-point DFT of |g|^2 has no zero bin (relative to its largest bin),
    (ii) N >= 2W - 1, (iii) gcd(N, W - 1) == 1.
    """
    N = window.N if N is None else int(N)
    if N != window.N:
        raise GeometryError(f"window is defined modulo {window.N}, not {N}")
    W = window.W
    spectrum = np.abs(np.fft.fft(np.abs(window.taps) ** 2))
    scale = spectrum.max()
    vanishing = np.flatnonzero(spectrum <= tol * scale)
    shortcut = gcd(N, W) == 1 if window.is_square else None
    return ConditionReport(
        cond_i=vanishing.size == 0,
        cond_ii=N >= 2 * W - 1,
        cond_iii=gcd(N, W - 1) == 1,
        min_abs_dft_of_v=float(spectrum.min()),
        coprime_shortcut=shortcut,
        vanishing_bins=tuple(int(k) for k in vanishing),
    )


@dataclass(frozen=True)
class Dictionary:
    """N x D synthesis matrix; ``x = columns @ s``."""

    columns: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        cols = np.array(self.columns)
        if cols.ndim != 2:
            raise GeometryError("dictionary must be a 2-D array")
        if self.normalized:
            norms = np.linalg.norm(cols, axis=0)
            if np.any(np.abs(norms - 1) > NORM_TOLERANCE):
                raise ValidationError("normalized dictionary has a column with non-unit norm")
        object.__setattr__(self, "columns", _frozen(cols))

    @property
    def N(self) -> int:
        return self.columns.shape[0]

    @property
    def D(self) -> int:
        return self.columns.shape[1]

    def apply(self, s) -> np.ndarray:
        return self.columns @ np.asarray(s)

    @classmethod
    def identity(cls, N: int) -> "Dictionary":
        return cls(np.eye(N), normalized=True)

    @classmethod
    def gaussian(cls, N: int, D: int, rng: np.random.Generator) -> "Dictionary":
        cols = rng.standard_normal((N, D))
        cols /= np.linalg.norm(cols, axis=0)
        return cls(cols, normalized=True)


@dataclass(frozen=True)
class SparseInstance:
    coefficients: np.ndarray
    support: tuple
    signal: Signal

    @property
    def k(self) -> int:
        return len(self.support)


def sample_sparse_instance(N: int, D_cols: int, k: int, dictionary_kind: str = "gaussian",
                           rng_seed: int | np.random.SeedSequence = 0,
                           complex_coefficients: bool = False) -> tuple[Dictionary, SparseInstance]:
    """Draw a dictionary and a k-sparse coefficient vector.

    The support is uniform without replacement; nonzero values are iid
    standard normal (real unless ``complex_coefficients``).
    """
    if not 0 <= k <= D_cols:
        raise InstanceError(f"sparsity k={k} must lie in [0, D={D_cols}]")
    rng = np.random.default_rng(rng_seed)
    if dictionary_kind == "identity":
        if D_cols != N:
            raise InstanceError("identity dictionary needs D == N")
        dictionary = Dictionary.identity(N)
    elif dictionary_kind == "gaussian":
        dictionary = Dictionary.gaussian(N, D_cols, rng)
    else:
        raise ValueError(f"unknown dictionary kind {dictionary_kind!r}")
    support = np.sort(rng.choice(D_cols, size=k, replace=False))
    dtype = complex if complex_coefficients else float
    s = np.zeros(D_cols, dtype=dtype)
    if complex_coefficients:
        s[support] = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
    else:
        s[support] = rng.standard_normal(k)
    s.setflags(write=False)
    inst = SparseInstance(s, tuple(int(i) for i in support), Signal(dictionary.apply(s)))
    return dictionary, inst


def canonical_phase(x: np.ndarray) -> np.ndarray:
    """Rotate ``x`` so its largest-modulus entry is real and positive."""
    x = np.asarray(x, dtype=complex)
    if not np.any(x):
        return x.copy()
    i = int(np.argmax(np.abs(x)))
    return x * (np.abs(x[i]) / x[i])

"""Greedy sparse phase retrieval from quadratic measurements y_p = |a_p . s|^2.

The search alternates a damped Gauss-Newton fit on a fixed support with
2-opt support swaps (one index out, one index in) ranked by coefficient size
and gradient magnitude, restarting from a fresh random support whenever no
swap improves the fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .core import Dictionary, GeometryError, as_signal
from .stft import MeasurementOperator

__all__ = [
    "GesparConfig",
    "SwapStrategy",
    "QuadraticProblem",
    "GesparResult",
    "DGNResult",
    "objective",
    "gradient",
    "damped_gauss_newton",
    "gespar_solve",
    "power_spectrum_problem",
    "ps_measure",
]


@dataclass(frozen=True)
class GesparConfig:
    sparsity_k: int
    objective_threshold: float = 1e-4
    max_total_swaps: int = 50000
    max_dgn_iterations: int = 100
    rng_seed: int = 0
    # inner fits stop once an accepted step lowers the objective by less than this fraction
    dgn_stall_tolerance: float = 1e-6

    def __post_init__(self):
        if self.sparsity_k < 0:
            raise ValueError("sparsity_k must be >= 0")
        if not self.objective_threshold > 0:
            raise ValueError("objective_threshold must be > 0")
        if self.max_total_swaps < 1:
            raise ValueError("max_total_swaps must be >= 1")
        if self.max_dgn_iterations < 1:
            raise ValueError("max_dgn_iterations must be >= 1")


@dataclass(frozen=True)
class SwapStrategy:
    """Order in which 2-opt swaps are tried.

    Support indices are removed in order of increasing |s_j|, off-support
    indices inserted in order of decreasing |grad_j|; pairs are enumerated
    remove-major. ``max_remove`` / ``max_insert`` truncate either list
    (``None`` keeps all of it, i.e. the full 2-opt neighbourhood).
    """

    max_remove: int | None = None
    max_insert: int | None = None

    def pairs(self, support: np.ndarray, coef: np.ndarray, grad: np.ndarray) -> Iterator[tuple[int, int]]:
        D = grad.size
        off = np.ones(D, dtype=bool)
        off[support] = False
        off_idx = np.flatnonzero(off)
        remove_order = np.argsort(np.abs(coef), kind="stable")[: self.max_remove]
        insert_order = off_idx[np.argsort(-np.abs(grad[off_idx]), kind="stable")][: self.max_insert]
        for pos in remove_order:
            for j in insert_order:
                yield int(pos), int(j)


class QuadraticProblem:
    """Rows a_p (P x D, complex) and measurements y (length P)."""

    def __init__(self, rows, y, operator: MeasurementOperator | None = None):
        rows = np.asarray(rows)
        y = np.asarray(y, dtype=float).ravel()
        if rows.ndim != 2 or rows.shape[0] != y.size:
            raise GeometryError(f"rows {rows.shape} and measurements ({y.size},) disagree")
        self.rows = rows
        self.y = y
        self.operator = operator
        self._Atr = np.ascontiguousarray(rows.real.T, dtype=float)
        self._Ati = np.ascontiguousarray(rows.imag.T, dtype=float) if np.iscomplexobj(rows) \
            else np.zeros_like(self._Atr)
        self.floor = float(np.finfo(float).eps ** 2 * (y @ y))

    @classmethod
    def from_operator(cls, operator: MeasurementOperator, y) -> "QuadraticProblem":
        return cls(operator.rows, np.asarray(y).ravel(), operator)

    @property
    def P(self) -> int:
        return self.rows.shape[0]

    @property
    def D(self) -> int:
        return self.rows.shape[1]


class DGNResult(NamedTuple):
    coefficients: np.ndarray
    objective: float
    trace: np.ndarray


@dataclass(frozen=True)
class GesparResult:
    coefficients: np.ndarray
    support: tuple
    objective_value: float
    swaps_used: int
    converged: bool
    restarts: int = 1
    history: tuple = field(default=(), repr=False)


def _check_dim(s, problem: QuadraticProblem) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1 or s.size != problem.D:
        raise GeometryError(f"coefficient vector has shape {s.shape}, expected ({problem.D},)")
    return s


def objective(s, problem: QuadraticProblem) -> float:
    """sum_p (y_p - |a_p . s|^2)^2"""
    s = _check_dim(s, problem)
    r = problem.y - np.abs(problem.rows @ s) ** 2
    return float(r @ r)


def gradient(s, problem: QuadraticProblem) -> np.ndarray:
    """Gradient of :func:`objective`.

    Real ``s``: the ordinary gradient, sum_p -4 r_p Re(conj(a_p s) a_p).
    Complex ``s``: d/dRe s + i d/dIm s, i.e. sum_p -4 r_p (a_p s) conj(a_p)
    (twice the Wirtinger derivative with respect to conj(s)).
    """
    s = _check_dim(s, problem)
    if np.iscomplexobj(s):
        z = problem.rows @ s
        r = problem.y - np.abs(z) ** 2
        return (-4.0 * r * z) @ np.conj(problem.rows)
    idx = np.arange(problem.D)
    return _kernels.gradient_sub(problem._Atr, problem._Ati, problem.y, idx, np.asarray(s, dtype=float))


def damped_gauss_newton(support, init, problem: QuadraticProblem, max_iters: int = 100,
                        stall_tol: float = 0.0) -> DGNResult:
    """Minimise the objective over real coefficients on ``support``.

    Gauss-Newton steps with step halving (at most 20 halvings) until the
    objective decreases. Stops after ``max_iters`` steps, when a step is
    shorter than 1e-10, when no halving helps, at the round-off floor, or
    (if ``stall_tol > 0``) when a step gains less than that relative fraction.
    """
    idx = np.asarray(support, dtype=np.int64).ravel()
    if idx.size < 1:
        raise ValueError("support must contain at least one index")
    s0 = np.asarray(init, dtype=float).ravel()
    if s0.size != idx.size:
        raise GeometryError("init must have one value per support index")
    trace = np.empty(max_iters + 1)
    s, f, n = _kernels.dgn_sub(problem._Atr, problem._Ati, problem.y, idx, s0, int(max_iters),
                               problem.floor, float(stall_tol), trace)
    return DGNResult(np.asarray(s), float(f), trace[: n + 1].copy())


def _expand(idx: np.ndarray, vals: np.ndarray, D: int) -> np.ndarray:
    s = np.zeros(D)
    s[idx] = vals
    return s


def gespar_solve(problem: QuadraticProblem, config: GesparConfig,
                 strategy: SwapStrategy | None = None) -> GesparResult:
    """Sparse least-squares fit of quadratic measurements by 2-opt local search.

    Every evaluated swap (accepted or not) counts against
    ``config.max_total_swaps``. Returns as soon as the objective drops below
    ``config.objective_threshold``; otherwise the best fit seen once the
    budget is spent.
    """
    strategy = strategy or SwapStrategy()
    k, D = config.sparsity_k, problem.D
    if k > D:
        raise ValueError(f"sparsity k={k} exceeds coefficient dimension {D}")
    tau = config.objective_threshold
    y = problem.y
    if k == 0:
        f0 = float(y @ y)
        return GesparResult(np.zeros(D), (), f0, 0, f0 < tau, 0)

    Atr, Ati = problem._Atr, problem._Ati
    rng = np.random.default_rng(config.rng_seed)
    iters = config.max_dgn_iterations
    stall = float(config.dgn_stall_tolerance)
    trace = np.empty(iters + 1)
    energy = float(np.sum(y))

    best_f, best_idx, best_val = np.inf, None, None
    history = []
    swaps = 0
    restarts = 0

    def dgn(idx, s0):
        s, f, _ = _kernels.dgn_sub(Atr, Ati, y, idx, s0, iters, problem.floor, stall, trace)
        return s, f

    while True:
        restarts += 1
        idx = np.sort(rng.choice(D, size=k, replace=False)).astype(np.int64)
        s0 = rng.standard_normal(k)
        model = np.abs(problem.rows[:, idx] @ s0) ** 2
        if model.sum() > 0 and energy > 0:
            s0 *= np.sqrt(energy / model.sum())
        vals, f = dgn(idx, s0)
        if f < best_f:
            best_f, best_idx, best_val = f, idx.copy(), vals.copy()
        history.append(best_f)
        if f < tau:
            break
        while swaps < config.max_total_swaps:
            grad = _kernels.gradient_sub(Atr, Ati, y, idx, vals)
            improved = False
            for pos, j in strategy.pairs(idx, vals, grad):
                swaps += 1
                cand_idx = idx.copy()
                cand_idx[pos] = j
                cand_init = vals.copy()
                cand_init[pos] = 0.0
                cand_vals, cand_f = dgn(cand_idx, cand_init)
                if cand_f < best_f:
                    best_f, best_idx, best_val = cand_f, cand_idx.copy(), cand_vals.copy()
                if cand_f < f:
                    idx, vals, f = cand_idx, cand_vals, cand_f
                    improved = True
                    break
                if swaps >= config.max_total_swaps:
                    break
            history.append(best_f)
            if not improved or f < tau:
                break
        if f < tau or swaps >= config.max_total_swaps:
            break

    order = np.argsort(best_idx)
    best_idx, best_val = best_idx[order], best_val[order]
    coef = _expand(best_idx, best_val, D)
    return GesparResult(coef, tuple(int(i) for i in best_idx), float(best_f), swaps,
                        bool(best_f < tau), restarts, tuple(history))


# ---------------------------------------------------------------------------
# power-spectrum measurements


def power_spectrum_problem(x_dictionary: Dictionary | np.ndarray, P: int) -> MeasurementOperator:
    """Rows of the P-point DFT (signal zero-padded to P) composed with the dictionary."""
    Dm = x_dictionary.columns if isinstance(x_dictionary, Dictionary) else np.asarray(x_dictionary)
    N = Dm.shape[0]
    if P < N:
        raise GeometryError(f"power spectrum needs P >= N (P={P}, N={N})")
    F = np.exp(-2j * np.pi * np.outer(np.arange(P), np.arange(N)) / P)
    return MeasurementOperator(F @ Dm)


def ps_measure(x, P: int) -> np.ndarray:
    """|DFT_P(x)|^2 with x zero-padded to length P."""
    x = as_signal(x).values
    if P < x.size:
        raise GeometryError(f"power spectrum needs P >= N (P={P}, N={x.size})")
    return np.abs(np.fft.fft(x, n=P)) ** 2

"""Monte-Carlo trials and sweeps over (k, L, K, SNR) cells."""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ..altproj import AltProjConfig, altproj_run
from ..core import Signal, ValidationError, as_signal, make_window, sample_sparse_instance
from ..direct import direct_recover
from ..gespar import GesparConfig, QuadraticProblem, SwapStrategy, gespar_solve, power_spectrum_problem, ps_measure
from ..stft import MeasurementSet, build_measurement_operator, magnitude_sq, make_geometry, stft_forward

__all__ = [
    "METHODS",
    "MetricError",
    "Cell",
    "ExperimentConfig",
    "TrialResult",
    "CellSummary",
    "ExperimentTable",
    "nmse",
    "add_noise",
    "noise_energy",
    "run_trial",
    "run_experiment",
    "trial_seed",
]

METHODS = ("STFT-GESPAR", "PS-GESPAR", "GLA", "PCGP", "DIRECT")
NOISE_TARGETS = ("y", "magnitude")


class MetricError(ValueError):
    """The error metric is undefined (zero reference signal)."""


class Cell(NamedTuple):
    k: int
    L: int
    K: int
    snr_db: float  # math.inf: noiseless


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 64
    W: int = 16
    window: str = "square"
    L_values: tuple = (2, 4, 8, 16)
    K_values: tuple = (16,)
    k_range: tuple = tuple(range(2, 13))
    snr_db_values: tuple = (math.inf,)
    trials_per_cell: int = 100
    methods: tuple = ("STFT-GESPAR", "PS-GESPAR", "GLA", "PCGP")
    rng_seed: int = 0
    success_nmse_threshold: float = 1e-2
    dictionary: str = "gaussian"
    noise_target: str = "y"
    # with noise, raise the GESPAR stopping threshold by the expected noise energy
    noise_aware_threshold: bool = True
    gespar_tau: float = 1e-4
    gespar_max_swaps: int = 50000
    gespar_max_dgn_iterations: int = 100
    gespar_stall_tolerance: float = 1e-6
    # removal candidates tried per 2-opt round (0: every support index)
    gespar_swap_removals: int = 0
    altproj_restarts: int = 50
    altproj_max_iterations: int = 1000
    altproj_halt_tolerance: float = 1e-8
    record_wall_time: bool = True
    workers: int = 1

    def __post_init__(self):
        for name in ("L_values", "K_values", "k_range", "snr_db_values", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "snr_db_values", tuple(float(s) for s in self.snr_db_values))
        if self.trials_per_cell < 1:
            raise ValidationError("trials_per_cell must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if not self.methods:
            raise ValidationError("no methods selected")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValidationError(f"unknown methods {bad}; choose from {METHODS}")
        if self.noise_target not in NOISE_TARGETS:
            raise ValidationError(f"noise_target must be one of {NOISE_TARGETS}")
        if not self.success_nmse_threshold > 0:
            raise ValidationError("success_nmse_threshold must be > 0")
        for seq in (self.L_values, self.K_values, self.k_range):
            if not seq:
                raise ValidationError("L_values, K_values and k_range must be non-empty")
        if self.gespar_swap_removals < 0:
            raise ValidationError("gespar_swap_removals must be >= 0")
        if min(self.k_range) < 0:
            raise ValidationError("sparsity levels must be >= 0")
        try:
            make_window(self.window, self.W, self.N)
            for L in self.L_values:
                for K in self.K_values:
                    make_geometry(make_window(self.window, self.W, self.N), L, K)
            self.gespar_config(1)
            self.altproj_config("GLA")
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc

    def gespar_config(self, k: int, seed: int = 0, tau: float | None = None) -> GesparConfig:
        return GesparConfig(k, objective_threshold=self.gespar_tau if tau is None else tau,
                            max_total_swaps=self.gespar_max_swaps,
                            max_dgn_iterations=self.gespar_max_dgn_iterations,
                            rng_seed=seed, dgn_stall_tolerance=self.gespar_stall_tolerance)

    def swap_strategy(self) -> SwapStrategy:
        return SwapStrategy(max_remove=self.gespar_swap_removals or None)

    def altproj_config(self, method: str, seed: int = 0) -> AltProjConfig:
        return AltProjConfig(max_iterations=self.altproj_max_iterations,
                             restarts=self.altproj_restarts, rng_seed=seed,
                             halt_tolerance=self.altproj_halt_tolerance, method=method)

    def cells(self) -> list[Cell]:
        return [Cell(int(k), int(L), int(K), float(s))
                for s in self.snr_db_values for K in self.K_values
                for L in self.L_values for k in self.k_range]


@dataclass(frozen=True)
class TrialResult:
    method: str
    cell: Cell
    nmse: float
    success: bool
    objective: float
    wall_time: float  # seconds
    seed: int
    diagnostic: str = ""


@dataclass(frozen=True)
class CellSummary:
    method: str
    cell: Cell
    trials: int
    success_rate: float
    mean_nmse: float
    median_nmse: float
    mean_wall_ms: float


@dataclass(frozen=True)
class ExperimentTable:
    rows: tuple
    config: ExperimentConfig | None = None
    trials: tuple = field(default=(), repr=False)

    def lookup(self, method: str, k: int, L: int, K: int, snr_db: float = math.inf) -> CellSummary:
        for r in self.rows:
            if r.method == method and r.cell == (k, L, K, float(snr_db)):
                return r
        raise KeyError((method, k, L, K, snr_db))

    def series(self, method: str, L: int, K: int, snr_db: float = math.inf,
               value: str = "success_rate") -> tuple[np.ndarray, np.ndarray]:
        rows = sorted((r for r in self.rows if r.method == method
                       and (r.cell.L, r.cell.K, r.cell.snr_db) == (L, K, float(snr_db))),
                      key=lambda r: r.cell.k)
        return (np.array([r.cell.k for r in rows]), np.array([getattr(r, value) for r in rows]))


# ---------------------------------------------------------------------------
# metrics and noise


def nmse(estimate, truth) -> float:
    """min over theta of ||exp(i theta) estimate - truth||^2 / ||truth||^2."""
    e = np.asarray(as_signal(estimate).values)
    t = np.asarray(as_signal(truth).values)
    if e.shape != t.shape:
        raise ValidationError(f"length mismatch: {e.size} vs {t.size}")
    tt = float(np.vdot(t, t).real)
    if tt == 0.0:
        raise MetricError("nmse is undefined for a zero reference signal")
    ee = float(np.vdot(e, e).real)
    # best phase aligns the inner product; the residual is ee + tt - 2|<e, t>|
    err = ee + tt - 2.0 * abs(np.vdot(e, t))
    return max(err, 0.0) / tt


def noise_energy(y, snr_db: float) -> float:
    """Expected noise energy E||n||^2 that puts ``y`` at ``snr_db``."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    Y = np.asarray(y.y if isinstance(y, MeasurementSet) else y, dtype=float)
    return float(Y.ravel() @ Y.ravel()) / 10.0 ** (snr_db / 10.0)


def add_noise(y: MeasurementSet, snr_db: float, rng_seed) -> MeasurementSet:
    """Add iid Gaussian noise to the squared magnitudes at the requested SNR."""
    snr_db = float(snr_db)
    if math.isinf(snr_db) and snr_db > 0:
        return MeasurementSet(np.array(y.y, dtype=float), y.geometry, snr_db)
    Y = np.asarray(y.y, dtype=float)
    sigma = math.sqrt(noise_energy(Y, snr_db) / Y.size)
    rng = np.random.default_rng(rng_seed)
    return MeasurementSet(Y + sigma * rng.standard_normal(Y.shape), y.geometry, snr_db)


def _noisy(y: np.ndarray, snr_db: float, target: str, rng) -> np.ndarray:
    if math.isinf(snr_db):
        return y
    if target == "magnitude":
        a = np.sqrt(y)
        sigma = math.sqrt(noise_energy(a, snr_db) / a.size)
        return (a + sigma * rng.standard_normal(a.shape)) ** 2
    sigma = math.sqrt(noise_energy(y, snr_db) / y.size)
    return y + sigma * rng.standard_normal(y.shape)


def _threshold(config: ExperimentConfig, y_clean: np.ndarray, snr_db: float) -> float:
    """GESPAR stopping threshold; with noise, tau plus a 3-sigma bound on ||noise||^2."""
    tau = config.gespar_tau
    if math.isinf(snr_db) or not config.noise_aware_threshold:
        return tau
    if config.noise_target == "magnitude":
        a = np.sqrt(y_clean)
        var = noise_energy(a, snr_db) / a.size
        # |a + e|^2 - a^2 = 2 a e + e^2; its energy is about 4 var ||a||^2 + 3 P var^2
        expected = 4 * var * float(a @ a) + 3 * a.size * var ** 2
    else:
        expected = noise_energy(y_clean, snr_db)
    return tau + expected * (1.0 + 3.0 * math.sqrt(2.0 / y_clean.size))


# ---------------------------------------------------------------------------
# trials


def trial_seed(master: int, cell: Cell, trial: int, stream: str = "instance") -> int:
    """Counter-style seed: a hash of the master seed, cell, trial index and stream name."""
    snr = "inf" if math.isinf(cell.snr_db) else repr(float(cell.snr_db))
    key = f"{int(master)}|{cell.k}|{cell.L}|{cell.K}|{snr}|{int(trial)}|{stream}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def run_trial(cell: Cell, method: str, config: ExperimentConfig, trial: int = 0) -> TrialResult:
    """One instance, one method. Solver errors become failed trials."""
    cell = Cell(int(cell[0]), int(cell[1]), int(cell[2]), float(cell[3]))
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    inst_seed = trial_seed(config.rng_seed, cell, trial, "instance")
    noise_seed = trial_seed(config.rng_seed, cell, trial, "noise")
    solver_seed = trial_seed(config.rng_seed, cell, trial, "solver:" + method)
    t0 = time.perf_counter()
    objective = math.nan
    diagnostic = ""
    truth = None
    try:
        N, k = config.N, cell.k
        D = config.N
        dictionary, inst = sample_sparse_instance(N, D, k, config.dictionary, rng_seed=inst_seed)
        truth = inst.signal
        window = make_window(config.window, config.W, N)
        geom = make_geometry(window, cell.L, cell.K)
        rng = np.random.default_rng(noise_seed)
        if method == "PS-GESPAR":
            y_clean = ps_measure(truth, geom.P)
        else:
            y_clean = np.asarray(magnitude_sq(stft_forward(truth, window, cell.L, cell.K)).y)
        y = _noisy(y_clean, cell.snr_db, config.noise_target, rng)

        if method in ("STFT-GESPAR", "PS-GESPAR"):
            if method == "STFT-GESPAR":
                op = build_measurement_operator(window, cell.L, cell.K, dictionary)
            else:
                op = power_spectrum_problem(dictionary, geom.P)
            problem = QuadraticProblem.from_operator(op, y.ravel())
            tau = _threshold(config, y_clean.ravel(), cell.snr_db)
            res = gespar_solve(problem, config.gespar_config(k, solver_seed % 2**32, tau),
                               config.swap_strategy())
            estimate = Signal(dictionary.apply(res.coefficients))
            objective = res.objective_value
        else:
            meas = MeasurementSet(y, geom, None if math.isinf(cell.snr_db) else cell.snr_db)
            if method == "DIRECT":
                estimate = direct_recover(meas, window)
            else:
                res = altproj_run(meas, window, config.altproj_config(method, solver_seed % 2**32))
                estimate = res.estimate
                objective = res.residual
        err = nmse(estimate, truth) if k > 0 else float(np.vdot(estimate.values, estimate.values).real)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        err = math.inf
        diagnostic = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0 if config.record_wall_time else 0.0
    success = bool(err < config.success_nmse_threshold)
    return TrialResult(method, cell, float(err), success, float(objective), wall, inst_seed, diagnostic)


def _run_task(args):
    cell, method, config, trial = args
    return run_trial(cell, method, config, trial)


def _summarize(method: str, cell: Cell, results: list[TrialResult]) -> CellSummary:
    errs = np.array([r.nmse for r in results], dtype=float)
    return CellSummary(
        method=method, cell=cell, trials=len(results),
        success_rate=float(np.mean([r.success for r in results])),
        mean_nmse=float(np.mean(errs)), median_nmse=float(np.median(errs)),
        mean_wall_ms=float(np.mean([r.wall_time for r in results]) * 1e3))


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentTable:
    """Full sweep over cells x methods x trials.

    The table depends only on ``config``: seeds come from :func:`trial_seed`
    and aggregation is keyed by cell, so ``config.workers`` does not change it.
    ``progress(done, total)`` is called after each finished trial if given.
    """
    tasks = [(cell, method, config, t)
             for cell in config.cells() for method in config.methods
             for t in range(config.trials_per_cell)]
    results: list[TrialResult] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for i, r in enumerate(pool.map(_run_task, tasks, chunksize=4)):
                results.append(r)
                if progress:
                    progress(i + 1, len(tasks))
    else:
        for i, task in enumerate(tasks):
            results.append(_run_task(task))
            if progress:
                progress(i + 1, len(tasks))
    groups: dict = {}
    for task, r in zip(tasks, results):
        groups.setdefault((task[1], task[0]), []).append((task[3], r))
    rows = []
    for (method, cell), items in groups.items():
        items.sort(key=lambda it: it[0])
        rows.append(_summarize(method, cell, [r for _, r in items]))
    rows.sort(key=_row_key)
    return ExperimentTable(tuple(rows), config, tuple(results))


def _row_key(r: CellSummary):
    return (METHODS.index(r.method), r.cell.snr_db, r.cell.K, r.cell.L, r.cell.k)


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **kw)

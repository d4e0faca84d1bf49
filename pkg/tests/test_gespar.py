import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from oracles import best_one_sparse, naive_dft_power, quartic_objective
from stftpr.core import Dictionary, GeometryError, make_window, sample_sparse_instance
from stftpr.gespar import (
    GesparConfig,
    QuadraticProblem,
    SwapStrategy,
    damped_gauss_newton,
    gespar_solve,
    gradient,
    objective,
    power_spectrum_problem,
    ps_measure,
)
from stftpr.stft import build_measurement_operator


def stft_problem(seed, N=16, W=5, L=2, K=8, k=3, dictionary="gaussian"):
    D, inst = sample_sparse_instance(N, N, k, dictionary, rng_seed=seed)
    op = build_measurement_operator(make_window("square", W, N), L, K, D)
    return QuadraticProblem.from_operator(op, op.measure(inst.coefficients)), inst


def fd_gradient(s, problem, h=1e-6):
    g = np.empty(s.size)
    for j in range(s.size):
        e = np.zeros(s.size)
        e[j] = h
        g[j] = (objective(s + e, problem) - objective(s - e, problem)) / (2 * h)
    return g


class TestObjective:
    def test_zero_at_planted(self):
        prob, inst = stft_problem(0)
        assert objective(inst.coefficients, prob) < 1e-20 * (prob.y @ prob.y)

    def test_zero_coefficients(self):
        prob, _ = stft_problem(1)
        assert objective(np.zeros(prob.D), prob) == pytest.approx(prob.y @ prob.y, rel=1e-14)

    def test_matches_loop(self, rng):
        rows = crandn(rng, 12, 5)
        y = rng.uniform(0, 3, 12)
        s = rng.standard_normal(5)
        prob = QuadraticProblem(rows, y)
        assert objective(s, prob) == pytest.approx(quartic_objective(rows, y, s), rel=1e-12)

    def test_wrong_dimension(self):
        prob, _ = stft_problem(2)
        with pytest.raises(GeometryError):
            objective(np.zeros(prob.D + 1), prob)

    def test_rows_measurements_mismatch(self, rng):
        with pytest.raises(GeometryError):
            QuadraticProblem(crandn(rng, 4, 3), np.ones(5))


class TestGradient:
    def test_vanishes_at_zero(self):
        prob, _ = stft_problem(3)
        assert np.all(gradient(np.zeros(prob.D), prob) == 0)

    def test_vanishes_at_planted(self):
        prob, inst = stft_problem(4)
        g = gradient(inst.coefficients, prob)
        assert np.max(np.abs(g)) < 1e-10 * max(1.0, prob.y.max())

    def test_finite_differences(self, rng):
        prob, _ = stft_problem(5)
        for _ in range(10):
            s = rng.standard_normal(prob.D)
            fd, an = fd_gradient(s, prob), gradient(s, prob)
            assert np.linalg.norm(fd - an) <= 1e-5 * np.linalg.norm(an)

    def test_complex_convention(self, rng):
        # d/dRe + i d/dIm
        rows = crandn(rng, 10, 3)
        prob = QuadraticProblem(rows, rng.uniform(0, 2, 10))
        s = crandn(rng, 3)
        h = 1e-6
        expected = np.empty(3, dtype=complex)
        for j in range(3):
            e = np.zeros(3, dtype=complex)
            e[j] = h
            dre = (objective(s + e, prob) - objective(s - e, prob)) / (2 * h)
            dim = (objective(s + 1j * e, prob) - objective(s - 1j * e, prob)) / (2 * h)
            expected[j] = dre + 1j * dim
        np.testing.assert_allclose(gradient(s, prob), expected, rtol=1e-5)

    @given(st.integers(0, 2**31))
    def test_finite_difference_property(self, seed):
        rng = np.random.default_rng(seed)
        prob, _ = stft_problem(seed % 1000, N=8, W=3, L=1, K=8, k=2)
        s = rng.standard_normal(prob.D)
        an = gradient(s, prob)
        assert np.linalg.norm(fd_gradient(s, prob) - an) <= 1e-5 * max(np.linalg.norm(an), 1e-3)


class TestDGN:
    def test_one_sparse_converges(self):
        prob, inst = stft_problem(6, k=1)
        res = damped_gauss_newton(inst.support, [0.3], prob, max_iters=50)
        assert res.objective < 1e-12
        assert abs(abs(res.coefficients[0]) - abs(inst.coefficients[inst.support[0]])) < 1e-6

    def test_planted_init_is_kept(self):
        prob, inst = stft_problem(7)
        idx = list(inst.support)
        res = damped_gauss_newton(idx, inst.coefficients[idx], prob)
        np.testing.assert_allclose(res.coefficients, inst.coefficients[idx], atol=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_monotone(self, seed):
        prob, inst = stft_problem(100 + seed, k=4)
        rng = np.random.default_rng(seed)
        res = damped_gauss_newton(inst.support, rng.standard_normal(4), prob, max_iters=60)
        assert np.all(np.diff(res.trace) <= 0)
        assert res.objective == res.trace[-1]

    def test_empty_support(self):
        prob, _ = stft_problem(8)
        with pytest.raises(ValueError):
            damped_gauss_newton([], [], prob)


class TestSolve:
    def test_one_sparse_identity(self):
        # N=16, W=5, L=1, K=16, identity dictionary: matches exhaustive search
        for seed in range(10):
            prob, inst = stft_problem(seed, N=16, W=5, L=1, K=16, k=1, dictionary="identity")
            res = gespar_solve(prob, GesparConfig(1, rng_seed=seed))
            j, c, _ = best_one_sparse(prob.rows, prob.y)
            assert res.support == (j,) == inst.support
            assert abs(abs(res.coefficients[j]) - c) < 1e-8

    def test_recovers_sparse(self):
        prob, inst = stft_problem(9, N=32, W=8, L=2, K=8, k=3)
        res = gespar_solve(prob, GesparConfig(3, rng_seed=1))
        assert res.converged and res.support == inst.support
        c = res.coefficients
        sign = np.sign(c @ inst.coefficients)
        np.testing.assert_allclose(sign * c, inst.coefficients, atol=1e-4)

    def test_k_zero(self):
        prob, _ = stft_problem(10)
        res = gespar_solve(prob, GesparConfig(0))
        assert res.support == () and res.swaps_used == 0
        assert np.all(res.coefficients == 0)
        assert res.objective_value == pytest.approx(prob.y @ prob.y)

    def test_k_above_dimension(self):
        prob, _ = stft_problem(11)
        with pytest.raises(ValueError):
            gespar_solve(prob, GesparConfig(prob.D + 1))

    def test_swap_budget(self):
        # unreachable threshold: the search runs until every swap is spent
        prob, _ = stft_problem(12, k=4)
        y = prob.y + np.random.default_rng(0).uniform(0, prob.y.max(), prob.P)
        noisy = QuadraticProblem(prob.rows, y)
        res = gespar_solve(noisy, GesparConfig(4, objective_threshold=1e-30, max_total_swaps=37))
        assert res.swaps_used == 37 and not res.converged
        assert res.objective_value == pytest.approx(objective(res.coefficients, noisy), rel=1e-9)
        assert list(res.history) == sorted(res.history, reverse=True)

    def test_deterministic(self):
        prob, _ = stft_problem(13, k=4)
        a = gespar_solve(prob, GesparConfig(4, rng_seed=5))
        b = gespar_solve(prob, GesparConfig(4, rng_seed=5))
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        assert a.swaps_used == b.swaps_used

    def test_strategy_order(self):
        pairs = list(SwapStrategy(max_remove=2, max_insert=2).pairs(
            np.array([1, 3]), np.array([0.5, -0.1]), np.array([0, 9, 2, 0, -5, 1.0])))
        # smallest |s| first (position 1), largest |grad| off-support first (4, then 2)
        assert pairs == [(1, 4), (1, 2), (0, 4), (0, 2)]

    def test_config_validation(self):
        for kw in ({"sparsity_k": -1}, {"sparsity_k": 1, "objective_threshold": 0},
                   {"sparsity_k": 1, "max_total_swaps": 0}, {"sparsity_k": 1, "max_dgn_iterations": 0}):
            with pytest.raises(ValueError):
                GesparConfig(**kw)


class TestPowerSpectrum:
    def test_delta_is_flat(self):
        x = np.zeros(8)
        x[0] = 1
        np.testing.assert_allclose(ps_measure(x, 32), 1.0)

    def test_parseval(self, rng):
        x = crandn(rng, 12)
        assert ps_measure(x, 40).sum() == pytest.approx(40 * np.sum(np.abs(x) ** 2), rel=1e-12)

    def test_naive_oracle(self, rng):
        x = crandn(rng, 6)
        np.testing.assert_allclose(ps_measure(x, 11), naive_dft_power(x, 11), atol=1e-12)

    def test_operator_matches(self, rng):
        D = Dictionary.gaussian(8, 10, rng)
        s = rng.standard_normal(10)
        op = power_spectrum_problem(D, 24)
        np.testing.assert_allclose(op.measure(s), ps_measure(D.apply(s), 24), atol=1e-10)

    def test_p_below_n(self):
        with pytest.raises(GeometryError):
            ps_measure(np.ones(8), 7)
        with pytest.raises(GeometryError):
            power_spectrum_problem(np.eye(8), 7)

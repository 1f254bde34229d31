"""Block updates against their oracles, and the outer driver's contracts."""

import numpy as np
import pytest

from mlmunmix.core import Termination
from mlmunmix.model import (
    mlm_forward_columns,
    modified_endmembers,
    objective,
)
from mlmunmix.solver import (
    SolverConfig,
    SolverMode,
    _abundance_sweep,
    _endmember_sweep,
    _probability_sweep,
    endmember_gradient,
    row_lipschitz,
    solve,
    update_abundance,
    update_endmembers,
    update_probability,
)

import oracles


def _pixel_p_objective(x, y, p):
    r = x - (1.0 - p) * y - p * y * x
    return float(r @ r)


def _random_mlm_instance(rng, d, m, n, noise=0.0):
    E = rng.uniform(0.05, 0.95, (d, m))
    A = rng.dirichlet(np.ones(m), size=n).T
    P = rng.uniform(0.0, 0.95, n)
    X = mlm_forward_columns(E, A, P)
    if noise:
        X = X + rng.normal(0.0, noise, X.shape)
    return X, E, A, P


class TestUpdateAbundance:
    def test_single_endmember_pins_to_one(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0.0, 1.0, 5)
        E = rng.uniform(0.1, 0.9, (5, 1))
        got = update_abundance(x, np.array([1.0]), E, 0.4)
        np.testing.assert_array_equal(got, [1.0])

    def test_fixed_point_at_constrained_minimizer(self):
        # oracle: active-set FCLS on a 3x2 instance
        rng = np.random.default_rng(1)
        for p in (0.0, 0.35):
            E = rng.uniform(0.1, 0.9, (3, 2))
            x = rng.uniform(0.0, 1.0, 3)
            Et = modified_endmembers(E, x, p)
            a_star = oracles.fcls_qp(Et, x)
            stepped = update_abundance(x, a_star, E, p)
            assert np.max(np.abs(stepped - a_star)) < 1e-10

    def test_zero_residual_returns_input(self):
        # the closed-form spectrum satisfies x = Etilde(x) a, so the
        # gradient vanishes and the step is a fixed point
        rng = np.random.default_rng(2)
        E = rng.uniform(0.1, 0.9, (4, 3))
        a = rng.dirichlet(np.ones(3))
        p = 0.25
        y = E @ a
        x = (1.0 - p) * y / (1.0 - p * y)
        got = update_abundance(x, a, E, p)
        assert np.max(np.abs(got - a)) < 1e-14

    def test_sufficient_decrease(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            d, m = int(rng.integers(2, 9)), int(rng.integers(2, 5))
            E = rng.uniform(0.0, 1.0, (d, m))
            x = rng.uniform(0.0, 1.3, d)
            a = rng.dirichlet(np.ones(m))
            p = rng.uniform(0.0, 1.0)
            Et = modified_endmembers(E, x, p)
            before = float(np.sum((x - Et @ a) ** 2))
            a_new = update_abundance(x, a, E, p)
            after = float(np.sum((x - Et @ a_new) ** 2))
            assert after <= before + 1e-12
            assert a_new.min() >= 0.0
            assert abs(a_new.sum() - 1.0) <= 1e-9

    def test_degenerate_endmembers_freeze_pixel(self):
        a = np.array([0.3, 0.7])
        got = update_abundance(np.ones(4), a, np.zeros((4, 2)), 0.5)
        np.testing.assert_array_equal(got, a)

    def test_batched_matches_per_pixel(self):
        rng = np.random.default_rng(4)
        X, E, A, P = _random_mlm_instance(rng, 6, 3, 24, noise=0.02)
        A0 = np.full((3, 24), 1.0 / 3.0)
        batch, lipschitz, degenerate = _abundance_sweep(X, E, A0, P)
        assert degenerate.size == 0
        assert lipschitz.min() > 0.0
        for i in range(24):
            single = update_abundance(X[:, i], A0[:, i], E, P[i])
            np.testing.assert_allclose(batch[:, i], single, atol=1e-13)


class TestUpdateProbability:
    def test_exact_linear_fit_gives_zero(self):
        y = np.array([0.2, 0.8])
        assert update_probability(y, y) == 0.0

    def test_recovers_generating_probability(self):
        # frozen worked example: y = [0.4, 0.6] forwarded at p = 0.3
        y = np.array([0.4, 0.6])
        x = np.array([0.28 / 0.88, 0.42 / 0.82])
        got = update_probability(x, y)
        assert got == pytest.approx(0.3, abs=1e-6)
        # cross-check against a dense grid search of the pixel objective
        grid = np.linspace(0.0, 1.0, 1_000_001)
        values = [_pixel_p_objective(x, y, p) for p in (0.29999, got, 0.30001)]
        assert values[1] <= min(values[0], values[2])
        coarse = min(_pixel_p_objective(x, y, p) for p in grid[::1000])
        assert _pixel_p_objective(x, y, got) <= coarse + 1e-15

    def test_degenerate_denominator(self):
        assert update_probability(np.array([0.5, 0.1]), np.zeros(2)) == 0.0

    def test_never_beaten_by_grid(self):
        rng = np.random.default_rng(5)
        grid = np.linspace(0.0, 1.0, 1000)
        for _ in range(200):
            d = int(rng.integers(1, 10))
            y = rng.uniform(0.0, 1.0, d)
            x = rng.uniform(0.0, 1.2, d)
            p_hat = update_probability(x, y)
            value = _pixel_p_objective(x, y, p_hat)
            best_grid = min(_pixel_p_objective(x, y, p) for p in grid)
            assert value <= best_grid + 1e-12 * (1.0 + best_grid)

    def test_upper_bound_automatic_for_boxed_inputs(self):
        # for x, y in [0, 1] the raw ratio never exceeds 1 (the lower bound
        # is not automatic: a pixel brighter than its linear term drives the
        # raw value negative, hence the unconditional projection)
        rng = np.random.default_rng(6)
        for _ in range(300):
            d = int(rng.integers(1, 8))
            y = rng.uniform(0.0, 1.0, d)
            x = rng.uniform(0.0, 1.0, d)
            w = y - y * x
            denom = float(w @ w)
            if denom < 1e-20:
                continue
            raw = float(w @ (y - x)) / denom
            assert raw <= 1.0 + 1e-12

    def test_batched_matches_per_pixel(self):
        rng = np.random.default_rng(7)
        X, E, A, P = _random_mlm_instance(rng, 5, 2, 30, noise=0.05)
        Y = E @ A
        batch, degenerate = _probability_sweep(X, Y)
        assert degenerate.size == 0
        for i in range(30):
            assert batch[i] == pytest.approx(
                update_probability(X[:, i], Y[:, i]), abs=1e-15
            )


class TestEndmemberGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        X, E, A, P = _random_mlm_instance(rng, 5, 3, 10, noise=0.05)
        got = endmember_gradient(E, X, A, P)
        want = oracles.fd_endmember_gradient(E, X, A, P, h=1e-6)
        rel = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert rel < 1e-5

    def test_zero_at_noiseless_configuration(self):
        rng = np.random.default_rng(9)
        X, E, A, P = _random_mlm_instance(rng, 6, 3, 12)
        got = endmember_gradient(E, X, A, P)
        assert np.max(np.abs(got)) <= 1e-10

    def test_single_pixel_pure_abundance(self):
        # linear single-pixel case: only the active endmember's column moves
        rng = np.random.default_rng(10)
        E = rng.uniform(0.1, 0.9, (5, 3))
        x = rng.uniform(0.0, 1.0, 5)
        a = np.zeros(3)
        a[1] = 1.0
        got = endmember_gradient(E, x[:, None], a[:, None], np.zeros(1))
        expected = np.zeros_like(E)
        expected[:, 1] = E[:, 1] - x
        np.testing.assert_allclose(got, expected, atol=1e-14)
        assert np.all(got[:, [0, 2]] == 0.0)


class TestRowLipschitz:
    def test_worked_example(self):
        # single pixel, row [1, 2]: H = [[1, 2], [2, 4]], Frobenius norm 5
        assert row_lipschitz(np.array([[1.0, 2.0]])) == pytest.approx(5.0)

    def test_zero_rows(self):
        assert row_lipschitz(np.zeros((4, 3))) == 0.0

    def test_uniform_pixel(self):
        # P = 0, one pixel with a = [0.5, 0.5]: H = 0.25 * ones(2, 2),
        # whose Frobenius norm is 0.5
        got = row_lipschitz(np.array([[0.5, 0.5]]))
        assert got == pytest.approx(0.5)

    def test_matches_batched_sweep(self):
        rng = np.random.default_rng(11)
        X, E, A, P = _random_mlm_instance(rng, 7, 3, 15, noise=0.03)
        _, lipschitz, _ = _endmember_sweep(E, X, A, P)
        C = (1.0 - P)[None, :] + P[None, :] * X
        for j in range(7):
            rows = (C[j][:, None] * A.T)      # n x m modified-abundance rows
            assert lipschitz[j] == pytest.approx(row_lipschitz(rows), rel=1e-12)


class TestUpdateEndmembers:
    def test_scalar_worked_example(self):
        # x = 0.5, a = 1, p = 0, E = [0.9]: unscaled gradient 0.4, L = 1,
        # lands exactly on the least squares minimizer 0.5
        got = update_endmembers(
            np.array([[0.9]]), np.array([[0.5]]), np.array([[1.0]]), np.zeros(1)
        )
        assert got[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_clamps_to_box(self):
        # scalar minimizer sits at -0.2; the step is clipped to 0
        got = update_endmembers(
            np.array([[0.1]]), np.array([[-0.2]]), np.array([[1.0]]), np.zeros(1)
        )
        assert got[0, 0] == 0.0

    def test_fixed_point_on_consistent_data(self):
        rng = np.random.default_rng(12)
        E = rng.uniform(0.1, 0.9, (6, 3))
        A = rng.dirichlet(np.ones(3), size=10).T
        X = E @ A
        got = update_endmembers(E, X, A, np.zeros(10))
        np.testing.assert_array_equal(got, E)

    def test_sufficient_decrease_and_feasibility(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            X, E_true, A, P = _random_mlm_instance(rng, 6, 3, 12, noise=0.05)
            E = np.clip(E_true + rng.normal(0.0, 0.1, E_true.shape), 0.0, 1.0)
            before = objective(X, E, A, P)
            E_new = update_endmembers(E, X, A, P)
            after = objective(X, E_new, A, P)
            assert after <= before + 1e-12 * (1.0 + before)
            assert E_new.min() >= 0.0
            assert E_new.max() <= 1.0

    def test_degenerate_rows_frozen(self):
        E = np.full((3, 2), 0.5)
        got = update_endmembers(E, np.ones((3, 2)), np.zeros((2, 2)), np.zeros(2))
        np.testing.assert_array_equal(got, E)


class TestSolverConfig:
    def test_mode_string_coerced(self):
        cfg = SolverConfig(mode="nlu_free_e")
        assert cfg.mode is SolverMode.NLU_FREE_E

    def test_rejects_bad_mode(self):
        with pytest.raises(ValueError):
            SolverConfig(mode="nonsense")

    def test_rejects_zero_iterations(self):
        with pytest.raises(ValueError):
            SolverConfig(mode=SolverMode.NLU_FREE_E, max_outer_iterations=0)

    def test_rejects_nonpositive_eta2(self):
        with pytest.raises(ValueError):
            SolverConfig(mode=SolverMode.NLU_FREE_E, eta2=0.0)

    def test_eta1_defaults(self):
        cfg = SolverConfig(mode=SolverMode.NLU_FREE_E)
        assert cfg.effective_eta1(100) == 0.0
        cfg = SolverConfig(mode=SolverMode.NLU_FREE_E, noise_power=1e-4)
        assert cfg.effective_eta1(100) == pytest.approx(1e-2)
        cfg = SolverConfig(mode=SolverMode.NLU_FREE_E, eta1=0.5, noise_power=1e-4)
        assert cfg.effective_eta1(100) == 0.5


class TestSolve:
    def test_instant_convergence_from_truth(self):
        # abundances start uniform, so build the scene with uniform truth
        rng = np.random.default_rng(14)
        E = rng.uniform(0.05, 0.95, (5, 2))
        A = np.full((2, 4), 0.5)
        P = np.array([0.3, 0.0, 0.7, 0.9])
        X = mlm_forward_columns(E, A, P)
        cfg = SolverConfig(mode=SolverMode.NLU_FREE_E, eta1=1e-12, eta2=1e-9)
        result = solve(X, cfg, E, P0=P)
        assert result.iterations == 1
        assert result.termination is Termination.ABSOLUTE_THRESHOLD
        assert result.objective_trace[-1] <= 1e-18

    def test_lu_fixed_reaches_fcls_solution(self):
        rng = np.random.default_rng(15)
        E = rng.uniform(0.1, 0.9, (3, 2))
        A = rng.dirichlet(np.ones(2), size=16).T
        X = E @ A
        cfg = SolverConfig(
            mode=SolverMode.LU_FIXED_E, eta2=1e-16, max_outer_iterations=2000
        )
        result = solve(X, cfg, E)
        err = np.sum((result.abundances.data - A) ** 2) / np.sum(A**2)
        assert 10.0 * np.log10(err) <= -60.0
        # spot-check two pixels against the exact active-set solution
        for i in (0, 7):
            a_star = oracles.fcls_qp(E, X[:, i])
            assert np.max(np.abs(result.abundances.data[:, i] - a_star)) < 1e-4

    def test_single_iteration_cap(self):
        rng = np.random.default_rng(16)
        X, E, A, P = _random_mlm_instance(rng, 5, 2, 8, noise=0.05)
        cfg = SolverConfig(
            mode=SolverMode.NLU_FREE_E, eta2=1e-300 + 1e-301, max_outer_iterations=1
        )
        result = solve(X, cfg, E)
        assert result.iterations == 1
        assert result.objective_trace.shape == (2,)

    def test_monotone_descent_and_feasibility(self):
        rng = np.random.default_rng(17)
        for mode in SolverMode:
            X, E_true, A, P = _random_mlm_instance(rng, 8, 3, 20, noise=0.02)
            E0 = np.clip(E_true + rng.normal(0.0, 0.05, E_true.shape), 0.0, 1.0)
            cfg = SolverConfig(mode=mode, eta2=1e-8, max_outer_iterations=60)
            result = solve(X, cfg, E0)
            trace = result.objective_trace
            assert np.all(np.diff(trace) <= 1e-9 * (1.0 + np.abs(trace[:-1])))
            Ad = result.abundances.data
            assert Ad.min() >= 0.0
            assert np.max(np.abs(Ad.sum(axis=0) - 1.0)) <= 1e-9
            assert 0.0 <= result.endmembers.data.min()
            assert result.endmembers.data.max() <= 1.0
            Pd = result.probabilities.data
            assert Pd.min() >= 0.0 and Pd.max() <= 1.0
            if not mode.updates_probability:
                assert np.all(Pd == 0.0)
            if not mode.updates_endmembers:
                np.testing.assert_array_equal(result.endmembers.data, E0)

    def test_lu_matches_direct_fcls_loop_bitwise(self):
        # the linear modes must be the nonlinear machinery with P pinned to
        # zero: same kernels, same operation order, bitwise-equal iterates
        rng = np.random.default_rng(18)
        E = rng.uniform(0.1, 0.9, (6, 3))
        A_true = rng.dirichlet(np.ones(3), size=30).T
        X = E @ A_true + rng.normal(0.0, 0.01, (6, 30))
        steps = 7

        A_direct = np.full((3, 30), 1.0 / 3.0)
        E_direct = E.copy()
        P_zero = np.zeros(30)
        for _ in range(steps):
            A_direct, _, _ = _abundance_sweep(X, E_direct, A_direct, P_zero)
            E_direct, _, _ = _endmember_sweep(E_direct, X, A_direct, P_zero)

        cfg = SolverConfig(
            mode=SolverMode.LU_FREE_E, eta2=1e-300 + 1e-301,
            max_outer_iterations=steps,
        )
        result = solve(X, cfg, E)
        np.testing.assert_array_equal(result.abundances.data, A_direct)
        np.testing.assert_array_equal(result.endmembers.data, E_direct)

    def test_lu_rejects_nonzero_p0(self):
        rng = np.random.default_rng(19)
        X, E, A, P = _random_mlm_instance(rng, 5, 2, 6)
        cfg = SolverConfig(mode=SolverMode.LU_FREE_E)
        with pytest.raises(ValueError, match="pins probabilities"):
            solve(X, cfg, E, P0=P)

    def test_stationarity_at_relative_termination(self):
        rng = np.random.default_rng(20)
        E = rng.uniform(0.1, 0.9, (6, 3))
        A = rng.dirichlet(np.ones(3), size=20).T
        X = E @ A
        cfg = SolverConfig(
            mode=SolverMode.LU_FIXED_E, eta2=1e-12, max_outer_iterations=20000
        )
        result = solve(X, cfg, E)
        assert result.termination is Termination.RELATIVE_THRESHOLD
        stepped, _, _ = _abundance_sweep(
            X, E, result.abundances.data, np.zeros(20)
        )
        moves = np.linalg.norm(stepped - result.abundances.data, axis=0)
        assert moves.max() <= 1e-6

    def test_progress_callback(self):
        rng = np.random.default_rng(21)
        X, E, A, P = _random_mlm_instance(rng, 5, 2, 10, noise=0.05)
        seen = []

        def progress(t, value, diag):
            seen.append((t, value, diag))

        cfg = SolverConfig(
            mode=SolverMode.NLU_FREE_E, eta2=1e-8, max_outer_iterations=5
        )
        result = solve(X, cfg, E, progress=progress)
        assert len(seen) == result.iterations
        t, value, diag = seen[-1]
        assert value == result.objective_trace[-1]
        assert diag.lipschitz_a.shape == (10,)
        assert diag.lipschitz_a.min() >= 0.0
        assert diag.lipschitz_e.shape == (5,)
        assert diag.objective_after_endmembers == value
        assert diag.objective_start >= value - 1e-12

    def test_relative_threshold_on_noisy_scene(self):
        rng = np.random.default_rng(22)
        X, E_true, A, P = _random_mlm_instance(rng, 10, 3, 50, noise=0.01)
        cfg = SolverConfig(mode=SolverMode.NLU_FREE_E)   # default eta2 = 1e-3
        result = solve(X, cfg, np.clip(E_true + 0.02, 0.0, 1.0))
        assert result.termination is Termination.RELATIVE_THRESHOLD
        assert result.iterations < 500

"""Optimizer tests: line search contracts, convergence oracles, traces.

Convergence checks use problems with independently known answers: a
closed-form sphere minimum, the Rosenbrock minimizer (1, 1), and SPD
quadratics whose solution comes from a direct linear solve.
"""

import numpy as np
import pytest

from dyntex.errors import NonDescentError, NumericError, ShapeError
from dyntex.lbfgs import LbfgsConfig, OptimizationTrace, line_search_wolfe, minimize


def rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
    g = np.array(
        [
            -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
            200.0 * (x[1] - x[0] ** 2),
        ]
    )
    return f, g


def spd_quadratic(n, seed):
    """Strictly convex quadratic 0.5 (x-c)' A (x-c) with known minimizer c."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, n))
    a = q @ q.T + n * np.eye(n)
    c = rng.normal(size=n)

    def obj(x):
        r = x - c
        return 0.5 * float(r @ a @ r), a @ r

    return obj, a, c


def assert_strict_decrease(trace):
    for earlier, later in zip(trace.losses, trace.losses[1:]):
        assert later < earlier


class TestConfig:
    def test_defaults(self):
        cfg = LbfgsConfig()
        assert cfg.max_iters == 500
        assert cfg.memory == 10
        assert cfg.wolfe_c1 == 1e-4
        assert cfg.wolfe_c2 == 0.9
        assert cfg.grad_tol == 1e-8
        assert cfg.box_min is None and cfg.box_max is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"wolfe_c1": 0.0},
            {"wolfe_c1": -0.1},
            {"wolfe_c1": 0.9, "wolfe_c2": 0.5},
            {"wolfe_c1": 0.5, "wolfe_c2": 0.5},
            {"wolfe_c2": 1.0},
            {"wolfe_c2": 1.5},
        ],
    )
    def test_wolfe_constants_must_be_ordered(self, kwargs):
        with pytest.raises(NumericError):
            LbfgsConfig(**kwargs)

    @pytest.mark.parametrize("kwargs", [{"memory": 0}, {"memory": -1}, {"max_iters": 0}])
    def test_positive_counts_required(self, kwargs):
        with pytest.raises(NumericError):
            LbfgsConfig(**kwargs)


class TestLineSearch:
    def test_newton_step_on_quadratic_accepts_unit_step(self):
        obj, a, c = spd_quadratic(6, seed=11)
        x = np.zeros(6)
        f0, g0 = obj(x)
        d = np.linalg.solve(a, -g0)  # exact Newton direction
        step, f_new, g_new = line_search_wolfe(obj, x, d, f0, g0, LbfgsConfig())
        assert step == 1.0
        assert f_new == pytest.approx(0.0, abs=1e-24)
        assert np.max(np.abs(g_new)) < 1e-10

    def test_ascent_direction_rejected(self):
        obj, _, _ = spd_quadratic(4, seed=3)
        x = np.ones(4)
        f0, g0 = obj(x)
        with pytest.raises(NonDescentError):
            line_search_wolfe(obj, x, g0, f0, g0, LbfgsConfig())

    def test_zero_direction_rejected(self):
        obj, _, _ = spd_quadratic(4, seed=3)
        x = np.ones(4)
        f0, g0 = obj(x)
        with pytest.raises(NonDescentError):
            line_search_wolfe(obj, x, np.zeros(4), f0, g0, LbfgsConfig())

    def test_rosenbrock_first_step_satisfies_wolfe_inequalities(self):
        cfg = LbfgsConfig()
        x = np.array([-1.2, 1.0])
        f0, g0 = rosenbrock(x)
        d = -g0
        dphi0 = float(g0 @ d)
        step, f_new, g_new = line_search_wolfe(
            obj := rosenbrock, x, d, f0, g0, cfg, initial_step=1.0 / np.max(np.abs(g0))
        )
        assert step > 0.0
        # Sufficient decrease and strong curvature, asserted directly.
        assert f_new <= f0 + cfg.wolfe_c1 * step * dphi0
        assert abs(float(g_new @ d)) <= cfg.wolfe_c2 * abs(dphi0)
        check_f, check_g = obj(x + step * d)
        assert check_f == f_new

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_random_directions_satisfy_wolfe_inequalities(self, seed):
        cfg = LbfgsConfig(wolfe_c2=0.4)
        obj, a, c = spd_quadratic(5, seed=100 + seed)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=5)
        f0, g0 = obj(x)
        d = -g0 * rng.uniform(0.1, 3.0)
        dphi0 = float(g0 @ d)
        step, f_new, g_new = line_search_wolfe(obj, x, d, f0, g0, cfg)
        assert f_new <= f0 + cfg.wolfe_c1 * step * dphi0
        assert abs(float(g_new @ d)) <= cfg.wolfe_c2 * abs(dphi0)


class TestMinimize:
    def test_sphere_converges_in_few_iterations(self):
        c = np.arange(1.0, 11.0)

        def obj(x):
            return float(np.sum((x - c) ** 2)), 2.0 * (x - c)

        x, trace = minimize(obj, np.zeros(10))
        assert trace.reason == "grad_tol"
        assert trace.iterations[-1] <= 3
        np.testing.assert_allclose(x, c, atol=1e-8)
        assert_strict_decrease(trace)

    def test_rosenbrock_reaches_minimum(self):
        cfg = LbfgsConfig(max_iters=200, grad_tol=1e-10)
        x, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
        below = [i for i, f in zip(trace.iterations, trace.losses) if f < 1e-10]
        assert below and below[0] <= 200
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-8)
        assert_strict_decrease(trace)

    def test_spd_quadratic_matches_direct_solve(self):
        rng = np.random.default_rng(42)
        q = rng.normal(size=(10, 10))
        a = q @ q.T + 10.0 * np.eye(10)
        b = rng.normal(size=10)

        def obj(x):
            return 0.5 * float(x @ a @ x) - float(b @ x), a @ x - b

        x, trace = minimize(obj, np.zeros(10))
        np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-6)
        assert_strict_decrease(trace)

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_full_memory_quadratic_terminates_in_n_plus_2(self, n, seed):
        # With memory covering the full dimension and a near-exact line
        # search (tight curvature constant), the method inherits conjugate
        # gradient's finite termination on strictly convex quadratics.
        obj, a, c = spd_quadratic(n, seed=100 + 7 * n + seed)
        cfg = LbfgsConfig(max_iters=100, memory=n, wolfe_c1=1e-6, wolfe_c2=0.01)
        x, trace = minimize(obj, np.zeros(n), cfg)
        assert trace.reason == "grad_tol"
        assert trace.iterations[-1] <= n + 2
        np.testing.assert_allclose(x, c, atol=1e-7)
        assert_strict_decrease(trace)

    def test_memory_one_still_converges(self):
        obj, a, c = spd_quadratic(6, seed=5)
        cfg = LbfgsConfig(max_iters=200, memory=1)
        x, trace = minimize(obj, np.zeros(6), cfg)
        assert trace.reason == "grad_tol"
        np.testing.assert_allclose(x, c, atol=1e-6)

    def test_traces_are_deterministic(self):
        cfg = LbfgsConfig(max_iters=50)
        runs = []
        for _ in range(2):
            _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
            runs.append(trace)
        first, second = runs
        assert first.iterations == second.iterations
        assert first.losses == second.losses  # bit-identical floats
        assert first.grad_norms == second.grad_norms
        assert first.steps == second.steps
        assert first.reason == second.reason

    def test_start_at_minimum_stops_immediately(self):
        c = np.array([2.0, -1.0, 0.5])

        def obj(x):
            return float(np.sum((x - c) ** 2)), 2.0 * (x - c)

        x, trace = minimize(obj, c.copy())
        assert trace.reason == "grad_tol"
        assert len(trace) == 1
        assert trace.iterations == [0]
        assert trace.steps == [0.0]
        np.testing.assert_array_equal(x, c)

    def test_max_iters_reason(self):
        cfg = LbfgsConfig(max_iters=3, grad_tol=0.0)
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), cfg)
        assert trace.reason == "max_iters"
        assert trace.iterations[-1] == 3

    def test_nonsmooth_objective_reports_line_search_failure(self):
        # |x| has no Wolfe point near the kink once iterates close in on 0.
        def obj(x):
            return float(np.abs(x[0])), np.array([np.sign(x[0]) if x[0] != 0.0 else 1.0])

        x, trace = minimize(obj, np.array([0.3]), LbfgsConfig(max_iters=50))
        assert trace.reason == "line_search_failure"
        # The returned point is the best accepted iterate, not the failure trial.
        assert trace.losses[-1] == obj(x)[0]

    def test_non_finite_start_rejected(self):
        def obj(x):
            return float("nan"), np.full_like(x, np.nan)

        with pytest.raises(NumericError):
            minimize(obj, np.ones(3))

    def test_gradient_shape_mismatch_rejected(self):
        def obj(x):
            return float(np.sum(x**2)), np.zeros(5)

        with pytest.raises(ShapeError):
            minimize(obj, np.ones(3))

    def test_x0_not_mutated(self):
        x0 = np.array([-1.2, 1.0])
        kept = x0.copy()
        minimize(rosenbrock, x0, LbfgsConfig(max_iters=10))
        np.testing.assert_array_equal(x0, kept)


class TestBoxMode:
    def test_projection_pins_iterate_to_bound(self):
        c = np.array([5.0, -5.0, 0.25])

        def obj(x):
            return float(np.sum((x - c) ** 2)), 2.0 * (x - c)

        cfg = LbfgsConfig(box_min=-1.0, box_max=1.0, max_iters=100, grad_tol=1e-6)
        x, trace = minimize(obj, np.zeros(3), cfg)
        np.testing.assert_allclose(x, [1.0, -1.0, 0.25], atol=1e-5)

    def test_interior_solution_unaffected_by_box(self):
        obj, a, c = spd_quadratic(4, seed=9)
        lim = float(np.max(np.abs(c))) + 10.0
        cfg = LbfgsConfig(box_min=-lim, box_max=lim)
        x, _ = minimize(obj, np.zeros(4), cfg)
        np.testing.assert_allclose(x, c, atol=1e-6)


class TestTrace:
    def test_csv_layout(self):
        trace = OptimizationTrace()
        trace.append(0, 2.5, 1.0, 0.0)
        trace.append(1, 1.25, 0.5, 0.125)
        trace.reason = "max_iters"
        lines = trace.to_csv().splitlines()
        assert lines[0] == "iter,loss,grad_norm,step"
        assert lines[1] == "0,2.5,1.0,0.0"
        assert lines[2] == "1,1.25,0.5,0.125"

    def test_csv_floats_round_trip_exactly(self):
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), LbfgsConfig(max_iters=20))
        rows = trace.to_csv().splitlines()[1:]
        for row, loss, gnorm, step in zip(
            rows, trace.losses, trace.grad_norms, trace.steps
        ):
            _, ls, gs, ss = row.split(",")
            assert float(ls) == loss
            assert float(gs) == gnorm
            assert float(ss) == step

    def test_first_row_is_starting_point(self):
        f0, _ = rosenbrock(np.array([-1.2, 1.0]))
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), LbfgsConfig(max_iters=5))
        assert trace.iterations[0] == 0
        assert trace.losses[0] == f0
        assert trace.steps[0] == 0.0
        assert trace.initial_loss == f0
        assert trace.final_loss == trace.losses[-1]

    def test_save_csv(self, tmp_path):
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), LbfgsConfig(max_iters=5))
        path = tmp_path / "trace.csv"
        trace.save_csv(path)
        assert path.read_text(encoding="utf-8") == trace.to_csv()

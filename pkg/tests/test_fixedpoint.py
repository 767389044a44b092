"""Tests for the retarded Volterra fixed-point engine."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiflrw.core import Grid, SampledFunction
from semiflrw.fixedpoint import (
    NaNDetected,
    NoConvergence,
    PicardReport,
    RetardedFunctional,
    ZeroStep,
    estimate_lipschitz,
    picard_solve,
    picard_solve_with_halving,
    select_step,
    verify_retardation,
)


def identity_functional(scale=1.0):
    return RetardedFunctional(eval=lambda x: scale * x.values.real)


def ones(grid):
    return SampledFunction(grid, np.ones(grid.size))


class TestSelectStep:
    def test_formula(self):
        assert select_step(0.0, 10.0, 1.0, 100.0, safety=0.5) == 0.05

    def test_clamped_by_span(self):
        assert select_step(0.0, 10.0, 1.0, 0.01, safety=0.5) == 0.01

    def test_zero_step_underflow(self):
        with pytest.raises(ZeroStep):
            select_step(0.0, 1e300, 5e-324, 1.0)

    @pytest.mark.parametrize(
        "bound,delta,span,safety",
        [(0.0, 1.0, 1.0, 0.5), (1.0, 0.0, 1.0, 0.5), (1.0, 1.0, 0.0, 0.5), (1.0, 1.0, 1.0, 1.5)],
    )
    def test_rejects_bad_arguments(self, bound, delta, span, safety):
        with pytest.raises(ValueError):
            select_step(0.0, bound, delta, span, safety=safety)

    @given(
        bound=st.floats(1e-3, 1e3),
        delta=st.floats(1e-3, 1e3),
        span=st.floats(1e-3, 1e3),
    )
    @settings(max_examples=50, deadline=None)
    def test_step_never_exceeds_tube_or_span(self, bound, delta, span):
        step = select_step(0.0, bound, delta, span)
        assert step <= span + 1e-15
        assert step * bound <= 0.5 * delta * (1.0 + 1e-12)


class TestPicardSolve:
    def test_zero_functional_returns_f0(self):
        grid = Grid.uniform(0.0, 1.0, 11)
        f0 = SampledFunction(grid, 2.0 + np.sin(grid.nodes))
        functional = RetardedFunctional(eval=lambda x: np.zeros(x.grid.size))
        solution, report = picard_solve(f0, functional, grid, tol=1e-12)
        assert np.array_equal(solution.values.real, f0.values.real)
        assert report.iterates == 1
        assert report.converged

    def test_exponential_oracle(self):
        # x' = x, x(0) = 1 on [0, 0.5]
        grid = Grid.uniform(0.0, 0.5, 501)
        solution, report = picard_solve(
            ones(grid), identity_functional(), grid, tol=1e-12
        )
        assert report.converged
        error = np.max(np.abs(solution.values.real - np.exp(grid.nodes)))
        assert error < 1e-6

    def test_seed_reaches_the_same_fixed_point(self):
        grid = Grid.uniform(0.0, 0.5, 201)
        f0 = ones(grid)
        seed = SampledFunction(grid, 1.0 + 0.3 * np.cos(4.0 * grid.nodes))
        plain, _ = picard_solve(f0, identity_functional(), grid, tol=1e-12)
        seeded, report = picard_solve(
            f0, identity_functional(), grid, tol=1e-12, x0=seed
        )
        assert report.converged
        assert np.max(np.abs(seeded.values.real - plain.values.real)) < 1e-11
        assert report.equation_residual < 2e-12

    def test_seed_grid_mismatch(self):
        grid = Grid.uniform(0.0, 0.5, 21)
        other = Grid.uniform(0.0, 0.5, 31)
        with pytest.raises(ValueError):
            picard_solve(
                ones(grid), identity_functional(), grid,
                x0=SampledFunction(other, np.ones(31)),
            )

    def test_contraction_ratios_decay(self):
        lam = 2.0
        grid = Grid.uniform(0.0, 0.4, 201)
        _, report = picard_solve(ones(grid), identity_functional(lam), grid, tol=1e-13)
        ratios = report.contraction_ratios
        # coarse bound lam * span holds for every step
        assert all(r <= lam * 0.4 + 1e-12 for r in ratios)
        # the factorial gain makes ratios strictly decreasing past the start
        tail = [r for r in ratios[2:] if r > 0.0]
        assert all(b < a for a, b in zip(tail[:-1], tail[1:]))

    def test_equation_residual_below_twice_tol(self):
        grid = Grid.uniform(0.0, 0.4, 201)
        tol = 1e-11
        _, report = picard_solve(ones(grid), identity_functional(1.7), grid, tol=tol)
        assert report.equation_residual is not None
        assert report.equation_residual < 2.0 * tol

    def test_no_convergence_carries_report(self):
        grid = Grid.uniform(0.0, 1.0, 101)
        with pytest.raises(NoConvergence) as excinfo:
            picard_solve(ones(grid), identity_functional(3.0), grid, tol=1e-12, max_iter=15)
        report = excinfo.value.report
        assert isinstance(report, PicardReport)
        assert not report.converged
        assert report.iterates == 15
        assert len(report.residuals) == 15

    def test_nan_detected_with_node(self):
        grid = Grid.uniform(0.0, 1.0, 11)

        def poisoned(x):
            out = x.values.real.copy()
            out[5] = math.nan
            return out

        with pytest.raises(NaNDetected) as excinfo:
            picard_solve(ones(grid), RetardedFunctional(eval=poisoned), grid)
        assert excinfo.value.node_index == 5
        assert math.isclose(excinfo.value.tau, 0.5)

    def test_grid_mismatch_rejected(self):
        grid = Grid.uniform(0.0, 1.0, 11)
        other = Grid.uniform(0.0, 1.0, 21)
        with pytest.raises(ValueError):
            picard_solve(ones(other), identity_functional(), grid)

    def test_determinism(self):
        grid = Grid.uniform(0.0, 0.4, 201)
        a, ra = picard_solve(ones(grid), identity_functional(1.3), grid, tol=1e-12)
        b, rb = picard_solve(ones(grid), identity_functional(1.3), grid, tol=1e-12)
        assert np.array_equal(a.values.real, b.values.real)
        assert ra.residuals == rb.residuals

    @given(lam=st.floats(0.1, 1.5))
    @settings(max_examples=20, deadline=None)
    def test_converged_runs_satisfy_equation(self, lam):
        span = min(0.8 / lam, 1.0)
        grid = Grid.uniform(0.0, span, 101)
        tol = 1e-10
        solution, report = picard_solve(ones(grid), identity_functional(lam), grid, tol=tol)
        assert report.converged
        assert report.residuals[-1] < tol
        assert all(math.isfinite(r) for r in report.residuals)
        assert report.equation_residual < 2.0 * tol
        assert math.isclose(
            solution.values.real[-1], math.exp(lam * span), rel_tol=1e-3
        )


class TestRetardation:
    def test_cumulative_integral_is_retarded(self):
        grid = Grid.uniform(0.0, 1.0, 101)

        def running_integral(x):
            from scipy.integrate import cumulative_trapezoid

            return cumulative_trapezoid(x.values.real, grid.nodes, initial=0.0)

        functional = RetardedFunctional(eval=running_integral)
        probe = SampledFunction(grid, np.cos(grid.nodes))
        assert verify_retardation(functional, probe)

    def test_end_anchored_functional_fails(self):
        grid = Grid.uniform(0.0, 1.0, 101)
        functional = RetardedFunctional(
            eval=lambda x: np.full(grid.size, x.values.real[-1])
        )
        probe = SampledFunction(grid, np.cos(grid.nodes))
        assert not verify_retardation(functional, probe)


class TestLipschitzEstimate:
    def test_linear_functional_recovered_with_margin(self):
        lam = 1.7
        grid = Grid.uniform(0.0, 1.0, 101)
        estimate = estimate_lipschitz(identity_functional(lam), ones(grid), delta=0.3)
        assert math.isclose(estimate, 2.0 * lam, rel_tol=1e-9)

    def test_deterministic(self):
        grid = Grid.uniform(0.0, 1.0, 101)
        functional = RetardedFunctional(eval=lambda x: np.tanh(x.values.real))
        a = estimate_lipschitz(functional, ones(grid), delta=0.1)
        b = estimate_lipschitz(functional, ones(grid), delta=0.1)
        assert a == b

    def test_rejects_bad_arguments(self):
        grid = Grid.uniform(0.0, 1.0, 11)
        with pytest.raises(ValueError):
            estimate_lipschitz(identity_functional(), ones(grid), delta=0.0)
        with pytest.raises(ValueError):
            estimate_lipschitz(identity_functional(), ones(grid), delta=0.1, n_probes=0)


class TestHalvingDriver:
    def test_shrinks_until_contraction(self):
        # residual floor ~ (lam * span)^n / n! passes tol only on a short span
        lam = 8.0
        grid = Grid.uniform(0.0, 1.0, 401)
        calls = []

        def build(subgrid):
            calls.append(subgrid.tau_end)
            return ones(subgrid), identity_functional(lam)

        solution, report, final_grid = picard_solve_with_halving(
            build, grid, tol=1e-10, max_iter=12
        )
        assert report.converged
        assert report.halvings == len(calls) - 1
        assert 1 <= report.halvings <= 6
        assert final_grid.tau_end < 1.0
        # converged span solves x' = lam x from x(0) = 1 up to trapezoid error
        expected = np.exp(lam * final_grid.nodes)
        assert np.max(np.abs(solution.values.real - expected)) < 1e-4

    def test_no_halving_when_first_try_converges(self):
        grid = Grid.uniform(0.0, 0.3, 151)
        solution, report, final_grid = picard_solve_with_halving(
            lambda g: (ones(g), identity_functional()), grid, tol=1e-12
        )
        assert report.halvings == 0
        assert final_grid == grid

    def test_gives_up_after_max_halvings(self):
        grid = Grid.uniform(0.0, 1.0, 513)

        def build(subgrid):
            return ones(subgrid), identity_functional(1e6)

        with pytest.raises(NoConvergence):
            picard_solve_with_halving(build, grid, tol=1e-12, max_iter=10, max_halvings=4)

    def test_front_half_preserves_node_alignment(self):
        grid = Grid.uniform(0.0, 1.0, 401)

        def build(subgrid):
            return ones(subgrid), identity_functional(3.0)

        _, _, final_grid = picard_solve_with_halving(build, grid, tol=1e-12, max_iter=25)
        assert np.all(np.isin(final_grid.nodes, grid.nodes))

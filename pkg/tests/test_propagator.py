"""Propagator correctness: closed forms, the reference evolution, cross-checks."""

import math

import numpy as np
import pytest

from sgs import coupling as cpl
from sgs.cn import build_form_system, crank_nicolson_oracle
from sgs.grids import GraphFunction, StarGrid, gaussian_data, lp_norm
from sgs.propagator import (
    PlanError,
    PropagatorPlan,
    WindowEscapeError,
    boundary_residual,
    check_window,
    make_plan,
    plan_diagnostics,
    propagate_ac,
    propagate_full,
)
from sgs.spectrum import find_bound_states, project_ac

RNG = np.random.default_rng(3)


def line_gaussian_evolution(x, t):
    """Closed-form free evolution of exp(-x^2) under i u_t + u_xx = 0."""
    return (1 + 4j * t) ** -0.5 * np.exp(-(x**2) / (1 + 4j * t))


@pytest.fixture(scope="module")
def kirchhoff2():
    grid = StarGrid.from_length(2, 0.02, 40.0)
    pair = cpl.kirchhoff(2)
    return pair, grid, find_bound_states(pair), make_plan(pair, grid)


class TestClosedFormTargets:
    def test_line_gaussian_through_the_vertex(self, kirchhoff2):
        # a symmetric Gaussian on two Kirchhoff edges is a free line Gaussian
        pair, grid, spec, plan = kirchhoff2
        u0 = GraphFunction.from_callable(grid, lambda x: np.exp(-(x**2)))
        for t in (0.5, 1.0):
            u = propagate_ac(plan, spec, u0, t)
            target = np.tile(line_gaussian_evolution(grid.x, t), (2, 1))
            assert lp_norm(u - GraphFunction(grid, target), 2.0) < 1e-4

    def test_dirichlet_odd_image(self):
        grid = StarGrid.from_length(2, 0.02, 40.0)
        pair = cpl.dirichlet(2)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        x0, t = 3.0, 1.0
        u0 = GraphFunction.from_callable(grid, lambda x: np.exp(-((x - x0) ** 2)))
        u = propagate_ac(plan, spec, u0, t)
        a = 1 + 4j * t
        free = lambda z: a**-0.5 * np.exp(-(z**2) / a)
        target = np.tile(free(grid.x - x0) - free(grid.x + x0), (2, 1))
        assert lp_norm(u - GraphFunction(grid, target), 2.0) < 1e-4

    def test_short_time_consistency(self):
        grid = StarGrid.from_length(3, 0.02, 40.0)
        pair = cpl.delta(3, -1.0)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        u0 = gaussian_data(grid, center=3.0, width=1.0)
        u = propagate_ac(plan, spec, u0, 1e-4)
        assert lp_norm(u - project_ac(spec, u0), 2.0) < 1e-3

    def test_pure_eigenstate_rotates(self):
        # e^{-x/3} needs L = 60 to clear the truncation window guard
        grid = StarGrid.from_length(3, 0.02, 60.0)
        pair = cpl.delta(3, -1.0)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        bs = spec.bound_states[0]
        phi = GraphFunction(grid, bs.sample(grid))
        u = propagate_full(plan, spec, phi, 1.0)
        target = GraphFunction(grid, np.exp(1j * bs.k**2) * bs.sample(grid))
        assert lp_norm(u - target, 2.0) < 1e-6

    def test_norm_conservation(self):
        grid = StarGrid.from_length(3, 0.02, 50.0)
        pair = cpl.delta(3, -1.0)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        u0 = gaussian_data(grid, center=3.0, width=1.0)
        n0 = lp_norm(u0, 2.0)
        for t in (0.5, 1.0, 2.0):
            u = propagate_full(plan, spec, u0, t)
            assert abs(lp_norm(u, 2.0) - n0) < 1e-4

    def test_group_property(self):
        grid = StarGrid.from_length(3, 0.02, 50.0)
        pair = cpl.delta(3, -1.0)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        u0 = gaussian_data(grid, center=3.0, width=1.0)
        two_steps = propagate_ac(plan, spec, propagate_ac(plan, spec, u0, 0.7), 0.5)
        direct = propagate_ac(plan, spec, u0, 1.2)
        assert lp_norm(two_steps - direct, 2.0) < 2e-4

    def test_boundary_residual_small(self):
        grid = StarGrid.from_length(3, 0.02, 50.0)
        pair = cpl.delta(3, -1.0)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        u0 = gaussian_data(grid, center=3.0, width=1.0)
        for t in (0.5, 1.0, 2.0):
            u = propagate_full(plan, spec, u0, t)
            assert boundary_residual(pair, u) < 1e-4

    def test_backward_time(self, kirchhoff2):
        pair, grid, spec, plan = kirchhoff2
        u0 = GraphFunction.from_callable(grid, lambda x: np.exp(-(x**2)))
        u = propagate_ac(plan, spec, u0, -1.0)
        target = np.tile(line_gaussian_evolution(grid.x, -1.0), (2, 1))
        assert lp_norm(u - GraphFunction(grid, target), 2.0) < 1e-4


class TestCrankNicolsonOracle:
    def test_zero_time_returns_input(self):
        grid = StarGrid.from_length(2, 0.05, 10.0)
        u0 = gaussian_data(grid, center=3.0, width=0.7)
        assert crank_nicolson_oracle(cpl.kirchhoff(2), u0, 0.0, 1e-2) is u0

    def test_discrete_norm_drift_machine_level(self):
        grid = StarGrid.from_length(3, 0.05, 20.0)
        pair = cpl.delta(3, -1.0)
        u0 = gaussian_data(grid, center=3.0, width=0.7)
        u = crank_nicolson_oracle(pair, u0, 1.0, 1e-3)  # 1000 steps
        assert abs(lp_norm(u, 2.0) - lp_norm(u0, 2.0)) / lp_norm(u0, 2.0) < 1e-10

    def test_gaussian_convergence_order(self):
        # against the closed-form line solution: error O(dt^2 + h^2)
        pair = cpl.kirchhoff(2)
        errs = []
        for h, dt in ((0.08, 8e-3), (0.04, 4e-3)):
            grid = StarGrid.from_length(2, h, 40.0)
            u0 = GraphFunction.from_callable(grid, lambda x: np.exp(-(x**2)))
            u = crank_nicolson_oracle(pair, u0, 1.0, dt)
            target = np.tile(line_gaussian_evolution(grid.x, 1.0), (2, 1))
            errs.append(lp_norm(u - GraphFunction(grid, target), 2.0))
        assert errs[0] / errs[1] > 3.0
        assert errs[1] < 5e-3


class TestOracleEquivalence:
    @pytest.mark.parametrize(
        "pair",
        [
            cpl.kirchhoff(3),
            cpl.delta(3, 1.0),
            cpl.delta(3, -1.0),
            cpl.delta_prime(3, 1.0),
        ],
        ids=["kirchhoff", "delta+1", "delta-1", "delta_prime"],
    )
    def test_presets_match_reference(self, pair):
        grid = StarGrid.from_length(3, 0.02, 40.0)
        spec = find_bound_states(pair)
        plan = make_plan(pair, grid)
        u0 = gaussian_data(grid, center=3.0, width=1.0)
        u_spec = propagate_full(plan, spec, u0, 1.0)
        u_cn = crank_nicolson_oracle(pair, u0, 1.0, 1e-3)
        assert lp_norm(u_spec - u_cn, 2.0) < 1e-3


class TestKQuadraturePath:
    def test_matches_closed_form(self):
        pair = cpl.delta(3, -1.0)
        grid = StarGrid.from_length(3, 0.02, 12.0)
        spec = find_bound_states(pair)
        u0 = gaussian_data(grid, center=3.0, width=0.8)
        closed = propagate_ac(make_plan(pair, grid), spec, u0, 1.0)
        plan_q = make_plan(pair, grid, t_max=1.0, tolerance=3e-3, method="k-quadrature")
        quad = propagate_ac(plan_q, spec, u0, 1.0)
        rel = lp_norm(quad - closed, 2.0) / lp_norm(closed, 2.0)
        assert rel < 3e-3

    def test_plan_error_suggests_refinement(self):
        pair = cpl.kirchhoff(3)
        grid = StarGrid.from_length(3, 0.05, 12.0)
        spec = find_bound_states(pair)
        u0 = gaussian_data(grid, center=3.0, width=0.8)
        plan = make_plan(pair, grid, t_max=0.5, tolerance=1e-3, method="k-quadrature")
        with pytest.raises(PlanError) as err:
            propagate_ac(plan, spec, u0, 50.0)  # far beyond the plan's design time
        assert err.value.suggested_n_k > plan.n_k

    def test_diagnostics_within_budget_at_design_time(self):
        pair = cpl.kirchhoff(3)
        grid = StarGrid.from_length(3, 0.05, 12.0)
        plan = make_plan(pair, grid, t_max=2.0, tolerance=1e-3, method="k-quadrature")
        assert plan_diagnostics(plan, 2.0).total <= 1e-3


class TestPlanStructure:
    def test_json_round_trip_fields(self):
        pair = cpl.delta(3, -1.0)
        grid = StarGrid.from_length(3, 0.05, 10.0)
        plan = make_plan(pair, grid, t_max=1.0, method="k-quadrature")
        obj = plan.to_json_dict()
        assert obj["N_k"] % 2 == 0 and obj["K"] > 0 and obj["epsilon"] > 0
        assert obj["grid"] == {"n": 3, "h": 0.05, "m": grid.m}
        # informational strip bound: half the squared pole radius
        assert abs(obj["delta_cap"] - 0.5 * (1.0 / 3.0) ** 2) < 1e-12

    def test_invalid_plans_rejected(self):
        pair = cpl.kirchhoff(2)
        grid = StarGrid.from_length(2, 0.1, 5.0)
        with pytest.raises(ValueError):
            PropagatorPlan(pair, grid, K=10.0, n_k=101, epsilon=0.0, delta_cap=math.inf)
        with pytest.raises(ValueError):
            PropagatorPlan(pair, grid, K=-1.0, n_k=100, epsilon=0.0, delta_cap=math.inf)
        with pytest.raises(ValueError):
            PropagatorPlan(pair, grid, K=10.0, n_k=100, epsilon=0.0, delta_cap=math.inf, method="magic")

    def test_window_escape_detected(self):
        grid = StarGrid.from_length(2, 0.1, 6.0)
        u0 = gaussian_data(grid, center=5.0, width=1.0)  # leaning on the boundary
        with pytest.raises(WindowEscapeError):
            check_window(u0)


class TestAgainstRandomCouplings:
    def test_five_random_couplings_match_reference(self):
        rng = np.random.default_rng(2025)
        grid = StarGrid.from_length(3, 0.02, 40.0)
        u0 = gaussian_data(grid, center=3.0, width=1.0)
        for _ in range(5):
            pair = cpl.random_coupling(3, rng)
            spec = find_bound_states(pair)
            plan = make_plan(pair, grid)
            u_spec = propagate_full(plan, spec, u0, 1.0)
            u_cn = crank_nicolson_oracle(pair, u0, 1.0, 1e-3)
            assert lp_norm(u_spec - u_cn, 2.0) < 1e-3

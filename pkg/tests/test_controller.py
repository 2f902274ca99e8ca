"""Dual MPC solves: predicted parameter set, bilinear row expansions,
alternation, and the passive/dual cost ordering."""

import numpy as np
import pytest

from dampc.controller import (INFEASIBLE, SOLVED, STALLED, SolveOptions,
                              SolveReport, _padded_passive_point, _unpack,
                              _violation, cost_epigraph, predict_state,
                              predicted_anchor_rows, predicted_blocks,
                              predicted_blocks_fixed_multipliers,
                              predicted_form, predicted_set_at, solve_dampc,
                              solve_pampc)
from dampc.identify import ParameterSet, PointEstimate
from dampc.lp import EQ, solve_feasibility
from dampc.polytopes import HPolytope, contains
from dampc.rng import SplitMix64
from dampc.system import (SequenceDisturbance, TruthModel, UncertainSystem,
                          matrices_at, regressor, step_truth)
from dampc.tube import (ConstraintBlock, TubeConfig, build_layout,
                        compute_offline, robust_blocks)

from conftest import benchmark_system, box
from oracles import hull_vertices, polygon_area, rollout_cost, tube_inclusion_margin
from test_tube import _box_vertices, _random_instance

THETA_STAR = np.array([0.95, 0.3])
I2 = np.eye(2)


def _certain_system(A0, B0, w_radius=1e-9):
    """One dummy parameter direction with zero matrices: the dynamics are
    exactly known, so robust and predicted tubes coincide."""
    return UncertainSystem([A0, np.zeros((2, 2))], [B0, np.zeros(B0.shape)],
                           np.vstack([I2, -I2]) * 0.01,
                           np.zeros((4, B0.shape[1])),
                           box(w_radius), box(1.0, dim=1))


def _unit_tube(sys, N, alpha_bar=5.0):
    verts = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]])
    K = np.zeros((sys.m, 2))
    f_bar, w_bar = compute_offline(sys, box(1.0), verts, K)
    return TubeConfig(box(1.0), verts, K, N, f_bar, w_bar, alpha_bar)


class TestPredictState:
    def test_benchmark_midpoint_estimate(self, bench_sys):
        est = PointEstimate([0.5, 0.5], 0.5)
        x_hat = predict_state(bench_sys, est, [1.0, 1.5], [0.0, 0.0])
        assert np.allclose(x_hat, [1.65, 1.175], atol=1e-12)

    def test_exact_estimate_matches_truth(self, bench_sys):
        est = PointEstimate(THETA_STAR, 0.5)
        truth = TruthModel(bench_sys, THETA_STAR, SequenceDisturbance([np.zeros(2)]))
        x, u = np.array([0.8, 1.2]), np.array([0.3, -0.4])
        x_next, _ = step_truth(truth, x, u)
        assert np.allclose(predict_state(bench_sys, est, x, u), x_next, atol=1e-12)


class TestPredictedSet:
    def test_regressor_matches_system_regressor(self, bench_sys, bench_ps, bench_est):
        x = np.array([0.8, 1.2])
        K = np.array([[-0.5625, 0.0], [0.0, 0.0]])
        form = predicted_form(bench_sys, bench_ps, bench_est, x, K)
        rng = np.random.default_rng(0)
        for _ in range(10):
            v0 = rng.uniform(-1, 1, size=2)
            assert np.allclose(form.regressor_at(v0),
                               regressor(bench_sys, x, K @ x + v0), atol=1e-12)

    def test_estimate_always_inside(self, bench_sys, bench_ps, bench_est):
        form = predicted_form(bench_sys, bench_ps, bench_est, [0.8, 1.2],
                              np.array([[-0.5625, 0.0], [0.0, 0.0]]))
        rng = np.random.default_rng(1)
        for _ in range(10):
            v0 = rng.uniform(-1.5, 1.5, size=2)
            assert contains(predicted_set_at(form, v0), bench_est.theta_hat,
                            tol=1e-9)

    def test_subset_of_current_set(self, bench_sys, bench_ps, bench_est):
        form = predicted_form(bench_sys, bench_ps, bench_est, [0.8, 1.2],
                              np.array([[-0.5625, 0.0], [0.0, 0.0]]))
        H, h = form.stacked_at([0.4, -0.8])
        for vtx in hull_vertices(H, h):
            assert contains(bench_ps.polytope, vtx, tol=1e-7)

    def test_true_parameter_kept_when_estimate_exact(self, bench_sys, bench_ps):
        est = PointEstimate(THETA_STAR, 0.5)
        form = predicted_form(bench_sys, bench_ps, est, [0.8, 1.2],
                              np.array([[-0.5625, 0.0], [0.0, 0.0]]))
        for v0 in ([0.0, 0.0], [0.3, -1.0], [-0.5, 0.7]):
            assert contains(predicted_set_at(form, v0), THETA_STAR, tol=1e-9)

    def test_second_input_cuts_second_parameter(self, bench_sys, bench_ps, bench_est):
        # the second input enters only B2, so |v0_2| controls how much the
        # anticipated measurement can pin theta_2; v0_2 = 0 cannot cut at all
        form = predicted_form(bench_sys, bench_ps, bench_est, [0.8, 1.2],
                              np.array([[-0.5625, 0.0], [0.0, 0.0]]))
        areas = []
        for v0 in ([0.0, 0.0], [0.0, -0.5], [0.0, -1.0]):
            H, h = form.stacked_at(v0)
            areas.append(polygon_area(hull_vertices(H, h)))
        assert areas[0] > areas[1] > areas[2]
        passive = predicted_set_at(form, [0.0, 0.0])
        base_area = polygon_area(hull_vertices(bench_ps.H, bench_ps.h))
        # theta_1 is still cut (the first column has nonzero state part),
        # theta_2 direction is untouched at v0 = 0
        from dampc.polytopes import support
        assert np.isclose(support(passive, np.array([0.0, 1.0])),
                          support(bench_ps.polytope, np.array([0.0, 1.0])),
                          atol=1e-9)
        assert areas[0] < base_area


# ---------------------------------------------------------------------------
# the two linearizations of the bilinear predicted rows


def _expected_residuals(sys, tube, form, n_hat, v0, zh, ah, v, lam_hat):
    """Row residuals straight from the containment algebra, keyed by
    (l, j, kind, ...)."""
    Ht, ht = form.stacked_at(v0)
    Hx = tube.X0.H
    M = [Ai + Bi @ tube.K for Ai, Bi in zip(sys.A, sys.B)]
    out = {}
    for l in range(n_hat):
        for j in range(tube.v):
            x = zh[l] + ah[l] * tube.vertices[j]
            lam = lam_hat[(l, j)]
            d0 = M[0] @ x + sys.B[0] @ v[l] - zh[l + 1]
            for r in range(tube.n_x):
                out[(l, j, "dyn", r)] = (lam[r] @ ht + Hx[r] @ d0
                                         - ah[l + 1] + tube.w_bar[r])
                for c in range(1, len(sys.A)):
                    out[(l, j, "dir", c, r)] = (Hx[r] @ (M[c] @ x + sys.B[c] @ v[l])
                                                - lam[r] @ Ht[:, c - 1])
    return out


def _frozen_v0_keys(sys, tube, n_hat):
    for l in range(n_hat):
        for j in range(tube.v):
            for r in range(tube.n_x):
                yield (l, j, "dyn", r)
            for c in range(1, len(sys.A)):
                for r in range(tube.n_x):
                    yield (l, j, "dir", c, r)


def _fixed_lam_keys(sys, tube, n_hat):
    for l in range(n_hat):
        for j in range(tube.v):
            for r in range(tube.n_x):
                yield (l, j, "dyn", r)
                for c in range(1, len(sys.A)):
                    yield (l, j, "dir", c, r)


class TestBilinearExpansions:
    def test_both_linearizations_match_direct_algebra(self):
        # at any numeric point the v0-frozen rows and the multiplier-frozen
        # rows must produce the same residuals as the containment identity
        rng = np.random.default_rng(23)
        for _ in range(5):
            sys, tube, _, _ = _random_instance(rng)
            n_hat = tube.N
            ps = ParameterSet(sys.Theta.H, sys.Theta.h)
            est = PointEstimate(np.zeros(sys.p), 0.5)
            x_k = rng.uniform(-0.5, 0.5, size=2)
            form = predicted_form(sys, ps, est, x_k, tube.K)
            layout = build_layout(sys, tube, ps, n_hat=n_hat)
            pt = rng.uniform(-1.0, 1.0, size=layout.n)
            v0 = pt[layout.sl(("v", 0))].copy()
            zh = np.array([pt[layout.sl(("zhat", l))] for l in range(n_hat + 1)])
            ah = np.array([pt[layout.start(("ahat", l))] for l in range(n_hat + 1)])
            v = np.array([pt[layout.sl(("v", l))] for l in range(tube.N)])
            lam_hat = {(l, j): pt[layout.sl(("lamhat", l, j))]
                       .reshape(tube.n_x, ps.n_rows + sys.n_w)
                       for l in range(n_hat) for j in range(tube.v)}
            expected = _expected_residuals(sys, tube, form, n_hat, v0, zh, ah,
                                           v, lam_hat)

            frozen = predicted_blocks(sys, tube, form, n_hat, layout, v0)
            mat, _, rhs = frozen.matrix()
            res = mat @ pt - rhs
            for i, key in enumerate(_frozen_v0_keys(sys, tube, n_hat)):
                assert abs(res[i] - expected[key]) < 1e-9, key

            fixed = predicted_blocks_fixed_multipliers(sys, tube, form, n_hat,
                                                       layout, lam_hat)
            mat, _, rhs = fixed.matrix()
            res = mat @ pt - rhs
            for i, key in enumerate(_fixed_lam_keys(sys, tube, n_hat)):
                assert abs(res[i] - expected[key]) < 1e-9, key

    def test_no_prediction_yields_no_rows(self, bench_sys, bench_tube, bench_ps,
                                          bench_est):
        form = predicted_form(bench_sys, bench_ps, bench_est, [0.8, 1.2],
                              bench_tube.K)
        layout = build_layout(bench_sys, bench_tube, bench_ps, n_hat=0)
        assert predicted_blocks(bench_sys, bench_tube, form, 0, layout, [0, 0]).n_rows == 0
        assert predicted_blocks_fixed_multipliers(
            bench_sys, bench_tube, form, 0, layout, {}).n_rows == 0


# ---------------------------------------------------------------------------
# predicted containment vs exhaustive enumeration over the predicted set


def run_predicted_equivalence(n_instances, seed=0, margin_skip=2e-3,
                              backend="highs"):
    """Multiplier feasibility of the predicted rows against vertex enumeration
    of the v0-dependent parameter set; (checked, n_feasible, disagreements)."""
    rng = np.random.default_rng(seed)
    checked = n_feas = disagree = 0
    while checked < n_instances:
        sys, tube, _, w_verts = _random_instance(rng)
        n_hat = tube.N
        ps = ParameterSet(sys.Theta.H, sys.Theta.h)
        th_hat = rng.uniform(-0.5, 0.5, size=sys.p) / sys.Theta.H[0, 0]
        est = PointEstimate(th_hat, 0.5)
        x_k = rng.uniform(-0.5, 0.5, size=2)
        form = predicted_form(sys, ps, est, x_k, tube.K)
        v0 = rng.uniform(-0.5, 0.5, size=sys.m)
        H_hat, h_hat = form.stacked_at(v0)
        try:
            th_verts = hull_vertices(H_hat, h_hat)
        except Exception:
            continue  # nearly degenerate appended rows; not a useful case

        z = np.zeros((n_hat + 1, 2))
        alpha = np.zeros(n_hat + 1)
        v = rng.uniform(-0.5, 0.5, (n_hat, sys.m))
        v[0] = v0
        z[0] = rng.uniform(-0.5, 0.5, size=2)
        alpha[0] = rng.uniform(0.1, 0.6)
        slacks = []
        for l in range(n_hat):
            z[l + 1] = sys.A[0] @ z[l] + sys.B[0] @ (tube.K @ z[l] + v[l]) \
                + rng.uniform(-0.05, 0.05, size=2)
            need = -np.inf
            for xj in tube.vertices:
                x = z[l] + alpha[l] * xj
                u = tube.K @ x + v[l]
                for th in th_verts:
                    A, B = matrices_at(sys, th)
                    base = A @ x + B @ u
                    for w in w_verts:
                        need = max(need, float(np.max(tube.X0.H @ (base + w - z[l + 1]))))
            s = rng.uniform(-0.08, 0.16)
            alpha[l + 1] = max(need + s, 0.0)
            slacks.append(s)

        margin = tube_inclusion_margin(sys, tube.K, tube.X0.H, tube.vertices,
                                       z, alpha, v, th_verts, w_verts)
        if abs(margin) < margin_skip:
            continue
        oracle_ok = margin <= 0.0
        assert oracle_ok == (min(slacks) > 0.0)

        layout = build_layout(sys, tube, ps, n_hat=n_hat)
        block = predicted_blocks(sys, tube, form, n_hat, layout, v0)
        for l in range(n_hat + 1):
            for i in range(sys.n):
                block.add_row([layout.start(("zhat", l)) + i], [1.0], EQ, z[l][i])
            block.add_row([layout.start(("ahat", l))], [1.0], EQ, alpha[l])
        for l in range(n_hat):
            for i in range(sys.m):
                block.add_row([layout.start(("v", l)) + i], [1.0], EQ, v[l][i])
        rows, senses, rhs = block.matrix()
        mine = solve_feasibility(rows, senses, rhs, lb=layout.lower_bounds(),
                                 backend=backend).feasible
        checked += 1
        n_feas += oracle_ok
        disagree += mine != oracle_ok
    return checked, n_feas, disagree


class TestPredictedEquivalence:
    def test_random_instances_agree_with_enumeration(self):
        checked, n_feas, disagree = run_predicted_equivalence(30, seed=2)
        assert disagree == 0
        assert 4 <= n_feas <= 26


# ---------------------------------------------------------------------------
# epigraph cost


class TestCostEpigraph:
    def _solve_pinned(self, sys, tube, ps, x_k, pins):
        layout = build_layout(sys, tube, ps, n_hat=0, cost=True)
        block = robust_blocks(sys, tube, ps, x_k, layout=layout)
        objective, cost_block = cost_epigraph(sys, tube, I2, I2, 0, layout)
        block.extend(cost_block)
        for key, val in pins.items():
            start = block.layout.start(key)
            for i, x in enumerate(np.atleast_1d(val)):
                block.add_row([start + i], [1.0], EQ, float(x))
        from dampc.controller import _solve_block_lp
        from dampc.lp import LpStatus
        out = _solve_block_lp(objective, block, layout.lower_bounds(), None, "highs")
        assert out.status == LpStatus.OPTIMAL
        return -out.value, _unpack(layout, out.point, sys, tube, ps, 0)

    def test_singleton_cross_section_cost(self):
        sys = _certain_system(np.zeros((2, 2)), np.eye(2))
        tube = _unit_tube(sys, N=2)
        ps = ParameterSet(sys.Theta.H, sys.Theta.h)
        x_k = np.array([0.3, -0.7])
        _, dec = self._solve_pinned(sys, tube, ps, x_k,
                                    {("z", 0): x_k, ("alpha", 0): 0.0,
                                     ("v", 0): [0.2, 0.0]})
        # point tube at stage 0: worst-case cost is |x|_inf + |v|_inf exactly
        assert np.isclose(dec.t[0], 0.9, atol=1e-8)

    def test_unit_cross_section_state_cost(self):
        sys = _certain_system(np.zeros((2, 2)), np.eye(2))
        tube = _unit_tube(sys, N=2)
        ps = ParameterSet(sys.Theta.H, sys.Theta.h)
        _, dec = self._solve_pinned(sys, tube, ps, np.zeros(2),
                                    {("z", 0): np.zeros(2), ("alpha", 0): 1.0,
                                     ("v", 0): np.zeros(2)})
        # unit box around the origin: worst |Q x|_inf over vertices is 1
        assert np.isclose(dec.t[0], 1.0, atol=1e-8)

    def test_rejects_indefinite_weights(self, bench_sys, bench_tube, bench_ps):
        layout = build_layout(bench_sys, bench_tube, bench_ps, n_hat=0, cost=True)
        with pytest.raises(ValueError):
            cost_epigraph(bench_sys, bench_tube, np.array([[1.0, 0.0], [0.0, -1.0]]),
                          I2, 0, layout)


# ---------------------------------------------------------------------------
# full solves


@pytest.fixture(scope="module")
def bench_pampc(bench_sys, bench_tube, bench_ps):
    return solve_pampc(bench_sys, bench_tube, bench_ps, I2, I2, [0.8, 1.2])


@pytest.fixture(scope="module")
def bench_dampc2(bench_sys, bench_tube, bench_ps, bench_est):
    return solve_dampc(bench_sys, bench_tube, bench_ps, bench_est, I2, I2,
                       [0.8, 1.2], n_hat=2, rng=SplitMix64(7))


class TestPassiveSolve:
    def test_benchmark_state_solves(self, bench_pampc):
        rep = bench_pampc
        assert rep.status == SOLVED
        assert 12.0 < rep.objective < 13.5
        assert rep.passive_objective == rep.objective
        assert np.isclose(rep.objective, np.sum(rep.decision.t), atol=1e-7)
        # passive play does not excite the second input at this state
        assert abs(rep.v0[1]) <= 1e-9

    def test_tube_starts_at_state(self, bench_pampc, bench_tube):
        dec = bench_pampc.decision
        gap = bench_tube.X0.H @ (np.array([0.8, 1.2]) - dec.z[0]) - dec.alpha[0]
        assert np.max(gap) <= 1e-8

    def test_terminal_conditions(self, bench_pampc, bench_tube):
        dec = bench_pampc.decision
        assert np.allclose(dec.z[-1], 0.0, atol=1e-9)
        assert dec.alpha[-1] <= bench_tube.alpha_bar + 1e-9

    def test_infeasible_far_state(self, bench_sys, bench_tube, bench_ps):
        rep = solve_pampc(bench_sys, bench_tube, bench_ps, I2, I2, [2.0, 3.0])
        assert rep.status == INFEASIBLE
        assert rep.v0 is None and rep.objective == np.inf
        assert not rep.solved

    def test_infeasible_at_boundary_pair(self, bench_sys, bench_tube, bench_ps):
        # zero-slack terminal set: this state admits no tube at any horizon
        rep = solve_pampc(bench_sys, bench_tube, bench_ps, I2, I2, [1.0, 1.5])
        assert rep.status == INFEASIBLE

    def test_deadbeat_cost_matches_rollout_oracle(self):
        # exactly known deadbeat plant: the optimizer zeroes the state in one
        # step, so the program value equals the closed-form stage sum
        sys = _certain_system(np.zeros((2, 2)), np.eye(2))
        tube = _unit_tube(sys, N=3)
        ps = ParameterSet(sys.Theta.H, sys.Theta.h)
        x0 = np.array([0.4, -0.2])
        rep = solve_pampc(sys, tube, ps, I2, I2, x0)
        ref = rollout_cost(np.zeros((2, 2)), x0, I2, I2, np.zeros((2, 2)), 4)
        assert rep.status == SOLVED
        assert np.isclose(rep.objective, ref, atol=1e-6)


class TestDualSolve:
    def test_zero_prediction_delegates_to_passive(self, bench_sys, bench_tube,
                                                  bench_ps, bench_est, bench_pampc):
        rep = solve_dampc(bench_sys, bench_tube, bench_ps, bench_est, I2, I2,
                          [0.8, 1.2], n_hat=0)
        assert rep.status == bench_pampc.status
        assert rep.objective == bench_pampc.objective
        assert np.array_equal(rep.v0, bench_pampc.v0)
        assert np.array_equal(rep.decision.point, bench_pampc.decision.point)

    def test_horizon_exceeding_tube_rejected(self, bench_sys, bench_tube,
                                             bench_ps, bench_est):
        with pytest.raises(ValueError):
            solve_dampc(bench_sys, bench_tube, bench_ps, bench_est, I2, I2,
                        [0.8, 1.2], n_hat=bench_tube.N + 1)

    def test_benchmark_dual_improves_on_passive(self, bench_dampc2, bench_pampc):
        rep = bench_dampc2
        assert rep.status == SOLVED
        assert rep.objective <= rep.passive_objective + 1e-9
        assert rep.passive_objective == bench_pampc.objective
        # exploration pays at this state: the optimum is strictly better
        assert rep.objective < rep.passive_objective - 0.1
        assert 11.5 < rep.objective < 12.6

    def test_exploration_uses_second_input(self, bench_dampc2, bench_pampc):
        assert abs(bench_dampc2.v0[1]) > abs(bench_pampc.v0[1]) + 0.05

    def test_alternation_trace_monotone(self, bench_dampc2):
        assert np.all(np.diff(bench_dampc2.trace) <= 1e-9)

    def test_audit_clean(self, bench_dampc2):
        assert bench_dampc2.audit_violation <= 1e-6

    def test_longer_prediction_no_worse_here(self, bench_sys, bench_tube,
                                             bench_ps, bench_est, bench_dampc2):
        rep5 = solve_dampc(bench_sys, bench_tube, bench_ps, bench_est, I2, I2,
                           [0.8, 1.2], n_hat=5, rng=SplitMix64(7))
        assert rep5.status == SOLVED
        assert rep5.objective < bench_dampc2.objective - 0.5

    def test_infeasible_state_reported(self, bench_sys, bench_tube, bench_ps,
                                       bench_est):
        rep = solve_dampc(bench_sys, bench_tube, bench_ps, bench_est, I2, I2,
                          [2.0, 3.0], n_hat=2)
        assert rep.status == INFEASIBLE

    def test_zero_uncertainty_dual_equals_passive(self):
        # the appended rows cannot cut (the regressor is identically zero),
        # so prediction buys nothing and both solves agree
        sys = _certain_system(np.array([[0.5, 0.1], [0.0, 0.4]]), np.eye(2),
                              w_radius=0.02)
        tube = _unit_tube(sys, N=3)
        ps = ParameterSet(sys.Theta.H, sys.Theta.h)
        est = PointEstimate([0.0], 0.5)
        x0 = [0.3, -0.2]
        p_rep = solve_pampc(sys, tube, ps, I2, I2, x0)
        d_rep = solve_dampc(sys, tube, ps, est, I2, I2, x0, n_hat=2,
                            rng=SplitMix64(3))
        assert p_rep.status == SOLVED and d_rep.solved
        assert abs(d_rep.objective - p_rep.objective) <= 1e-7

    def test_padded_passive_point_feasible_at_any_v0(self, bench_sys, bench_tube,
                                                     bench_ps, bench_est,
                                                     bench_pampc):
        # the always-feasible embedding behind the cost-ordering guarantee:
        # copy the robust tube into the predicted variables, zero the appended
        # multiplier columns, and every predicted row holds whatever v0 is
        n_hat = 2
        layout = build_layout(bench_sys, bench_tube, bench_ps, n_hat=n_hat,
                              cost=True)
        p_layout = build_layout(bench_sys, bench_tube, bench_ps, n_hat=0,
                                cost=True)
        x_k = np.array([0.8, 1.2])
        form = predicted_form(bench_sys, bench_ps, bench_est, x_k, bench_tube.K)
        point = _padded_passive_point(bench_pampc, bench_sys, bench_tube,
                                      bench_ps, n_hat, layout, p_layout)
        rng = np.random.default_rng(5)
        for _ in range(3):
            v0 = point[layout.sl(("v", 0))] if _ == 0 else rng.uniform(-1, 1, 2)
            block = robust_blocks(bench_sys, bench_tube, bench_ps, x_k,
                                  layout=layout)
            predicted_anchor_rows(block, bench_tube, x_k)
            block.extend(predicted_blocks(bench_sys, bench_tube, form, n_hat,
                                          layout, v0))
            assert _violation(block, point) <= 1e-7

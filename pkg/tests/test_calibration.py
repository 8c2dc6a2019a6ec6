import math

import numpy as np
import pytest

from panelcal import (
    Assessment,
    AssessmentGraph,
    DataError,
    DegeneracyCondition,
    DisconnectedGraphError,
    InsufficientDataError,
    Method,
    NumericalError,
    aggregates,
    apply_condition_shift,
    estimate_noise_scale,
    fit,
    fit_cwc,
    fit_iba,
    fit_sa,
    solve_full_system,
    solve_reduced_system,
)
from panelcal.calibration import _solve_reduced_with_aux

from conftest import graph_from_pairs, random_connected_graph
from oracles import align_to_zero_mean_bias, brute_force_fit

ZERO_MEAN = DegeneracyCondition.zero_mean()
CW_ZERO = DegeneracyCondition.confidence_weighted()
ALL_CONDITIONS = [ZERO_MEAN, CW_ZERO, DegeneracyCondition.reference(50.0)]


def residual_of(graph, v, b):
    r = graph.scores - v[graph.edge_objects] - b[graph.edge_assessors]
    return float(np.sum(graph.confidences * r * r))


def condition_gap(graph, condition, v, b):
    agg = aggregates(graph)
    if condition.kind.value == "zero-mean":
        return abs(float(np.sum(b)))
    if condition.kind.value == "cw-zero":
        return abs(float(agg.C_ass @ b))
    return abs(float(agg.C_obj @ v - agg.C_ass @ b - agg.C_total * condition.v_ref))


class TestTwoByTwo:
    def test_cwc_exact_solution(self, two_by_two):
        res = fit_cwc(two_by_two, ZERO_MEAN)
        np.testing.assert_allclose(res.values, [12.0, 22.0], atol=1e-10)
        np.testing.assert_allclose(res.biases, [-2.0, 2.0], atol=1e-10)
        assert res.residual <= 1e-10
        assert res.method is Method.CWC

    def test_iba_matches_on_unit_confidences(self, two_by_two):
        cwc = fit_cwc(two_by_two, ZERO_MEAN)
        iba = fit_iba(two_by_two, ZERO_MEAN)
        np.testing.assert_allclose(iba.values, cwc.values, atol=1e-9)
        np.testing.assert_allclose(iba.biases, cwc.biases, atol=1e-9)


class TestSimpleAveraging:
    def test_mean_and_residual_contribution(self):
        g = AssessmentGraph.from_assessments(
            [
                Assessment("a1", "o1", 10.0, 1.0),
                Assessment("a2", "o1", 14.0, 1.0),
            ]
        )
        res = fit_sa(g)
        assert res.values[0] == pytest.approx(12.0)
        assert res.residual == pytest.approx(8.0)
        assert np.all(res.biases == 0.0)
        assert res.dof == 1

    def test_identical_scores_zero_residual(self):
        g = graph_from_pairs([(0, 0), (1, 0), (0, 1), (1, 1)], scores=[7.0] * 4)
        assert fit_sa(g).residual == 0.0

    def test_weights_are_ignored(self):
        rng = np.random.default_rng(5)
        g = random_connected_graph(rng, 3, 5)
        res = fit_sa(g)
        res_unit = fit_sa(g.unit_confidences())
        np.testing.assert_allclose(res.values, res_unit.values)

    def test_iba_residual_never_exceeds_sa(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            g = random_connected_graph(rng, rng.integers(2, 6), rng.integers(3, 9))
            assert fit_iba(g, ZERO_MEAN).residual <= fit_sa(g).residual + 1e-9


class TestExactRecovery:
    def test_consistent_data_recovered(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            g0 = random_connected_graph(rng, 4, 7)
            b_true = rng.normal(0, 8, g0.n_assessors)
            b_true -= b_true.mean()
            v_true = rng.uniform(20, 80, g0.n_objects)
            scores = v_true[g0.edge_objects] + b_true[g0.edge_assessors]
            g = AssessmentGraph.from_assessments(
                Assessment(a.assessor, a.object, float(s), a.confidence)
                for a, s in zip(g0.assessments, scores)
            )
            res = fit_cwc(g, ZERO_MEAN)
            np.testing.assert_allclose(res.values, v_true, atol=1e-9)
            np.testing.assert_allclose(res.biases, b_true, atol=1e-9)
            assert res.residual <= 1e-10


class TestNormalEquations:
    @pytest.mark.parametrize("solver", [solve_full_system, solve_reduced_system])
    def test_stationarity(self, solver):
        rng = np.random.default_rng(8)
        for _ in range(10):
            g = random_connected_graph(rng, rng.integers(2, 6), rng.integers(2, 9))
            agg = aggregates(g)
            v, b = solver(g, CW_ZERO)
            c = g.confidence_matrix()
            obj_eq = agg.C_obj * v + c.T @ b - agg.V
            ass_eq = c @ v + agg.C_ass * b - agg.B
            scale = max(1.0, np.max(np.abs(np.concatenate([agg.V, agg.B]))))
            assert np.max(np.abs(obj_eq)) <= 1e-9 * scale
            assert np.max(np.abs(ass_eq)) <= 1e-9 * scale

    def test_full_and_reduced_agree(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            g = random_connected_graph(rng, rng.integers(2, 6), rng.integers(2, 9))
            for condition in ALL_CONDITIONS:
                v1, b1 = solve_full_system(g, condition)
                v2, b2 = solve_reduced_system(g, condition)
                scale = max(1.0, np.max(np.abs(v1)), np.max(np.abs(b1)))
                np.testing.assert_allclose(v1, v2, atol=1e-9 * scale)
                np.testing.assert_allclose(b1, b2, atol=1e-9 * scale)

    def test_row_replacement_independence(self):
        rng = np.random.default_rng(10)
        g = random_connected_graph(rng, 4, 6)
        base_v, base_b = solve_full_system(g, CW_ZERO)
        for row in range(g.n_objects + g.n_assessors):
            v, b = solve_full_system(g, CW_ZERO, replace_row=row)
            np.testing.assert_allclose(v, base_v, atol=1e-8)
            np.testing.assert_allclose(b, base_b, atol=1e-8)

    def test_single_assessor_zero_bias(self):
        g = AssessmentGraph.from_assessments(
            [
                Assessment("solo", "o1", 31.0, 2.0),
                Assessment("solo", "o2", 77.0, 0.5),
            ]
        )
        v, b = solve_reduced_system(g, ZERO_MEAN)
        assert b[0] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(v, [31.0, 77.0], atol=1e-12)


class TestConditions:
    @pytest.mark.parametrize("condition", ALL_CONDITIONS)
    def test_condition_holds_on_output(self, condition):
        rng = np.random.default_rng(11)
        for _ in range(5):
            g = random_connected_graph(rng, 4, 7)
            res = fit_cwc(g, condition)
            scale = aggregates(g).C_total * max(1.0, np.max(np.abs(g.scores)))
            assert condition_gap(g, condition, res.values, res.biases) <= 1e-9 * scale

    def test_residual_invariant_across_conditions(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            g = random_connected_graph(rng, 3, 8)
            residuals = [fit_cwc(g, c).residual for c in ALL_CONDITIONS]
            ref = residuals[0]
            for r in residuals[1:]:
                assert r == pytest.approx(ref, rel=1e-9)

    def test_shift_preserves_objective_exactly(self):
        rng = np.random.default_rng(13)
        g = random_connected_graph(rng, 3, 6)
        res = fit_cwc(g, ZERO_MEAN)
        for k in [-3.0, 0.7, 12.0]:
            assert residual_of(g, res.values + k, res.biases - k) == pytest.approx(
                res.residual, rel=1e-12, abs=1e-9
            )

    def test_apply_condition_shift_identity(self):
        rng = np.random.default_rng(14)
        g = random_connected_graph(rng, 3, 6)
        agg = aggregates(g)
        res = fit_cwc(g, CW_ZERO)
        v, b = apply_condition_shift(res.values, res.biases, CW_ZERO, CW_ZERO, agg)
        np.testing.assert_allclose(v, res.values, atol=1e-12)
        np.testing.assert_allclose(b, res.biases, atol=1e-12)

    def test_zero_mean_to_cw_zero_shift(self):
        rng = np.random.default_rng(15)
        g = random_connected_graph(rng, 4, 6)
        agg = aggregates(g)
        res = fit_cwc(g, ZERO_MEAN)
        k_expected = float(agg.C_ass @ res.biases / agg.C_total)
        v, b = apply_condition_shift(res.values, res.biases, ZERO_MEAN, CW_ZERO, agg)
        np.testing.assert_allclose(v - res.values, k_expected, atol=1e-12)
        assert condition_gap(g, CW_ZERO, v, b) <= 1e-9 * agg.C_total * 100

    def test_cw_zero_implies_weighted_value_identity(self):
        # Under the confidence-weighted zero-bias condition the weighted sum
        # of fitted values equals the weighted sum of scores.
        rng = np.random.default_rng(16)
        for _ in range(5):
            g = random_connected_graph(rng, 3, 7)
            agg = aggregates(g)
            res = fit_cwc(g, CW_ZERO)
            total = float(np.sum(g.confidences * g.scores))
            assert float(agg.C_obj @ res.values) == pytest.approx(total, rel=1e-9)

    @pytest.mark.parametrize(
        "to_condition", [ZERO_MEAN, CW_ZERO, DegeneracyCondition.reference(42.0)]
    )
    def test_shift_lands_on_target_condition(self, to_condition):
        rng = np.random.default_rng(17)
        g = random_connected_graph(rng, 4, 6)
        agg = aggregates(g)
        res = fit_cwc(g, ZERO_MEAN)
        v, b = apply_condition_shift(
            res.values, res.biases, ZERO_MEAN, to_condition, agg
        )
        scale = agg.C_total * max(1.0, np.max(np.abs(g.scores)))
        assert condition_gap(g, to_condition, v, b) <= 1e-9 * scale
        # pure shift: v and b move by opposite constants
        dv = v - res.values
        db = b - res.biases
        assert np.ptp(dv) <= 1e-10
        np.testing.assert_allclose(db, -dv[0], atol=1e-10)

    def test_condition_validation(self):
        with pytest.raises(DataError):
            DegeneracyCondition.reference(math.nan)
        with pytest.raises(DataError):
            DegeneracyCondition(ZERO_MEAN.kind, v_ref=3.0)


class TestEquivariance:
    def test_confidence_scale_invariance(self):
        rng = np.random.default_rng(18)
        for condition in ALL_CONDITIONS:
            g = random_connected_graph(rng, 4, 7)
            res = fit_cwc(g, condition)
            scaled = fit_cwc(g.scaled_confidences(7.3), condition)
            np.testing.assert_allclose(scaled.values, res.values, atol=1e-9)
            np.testing.assert_allclose(scaled.biases, res.biases, atol=1e-9)

    def test_single_assessor_score_shift_structure(self):
        # Adding a constant to every score of one assessor moves the fit by
        # delta on that bias plus a uniform shift k = delta * C'_a / (2C)
        # that keeps the fixed-reference condition satisfied.
        rng = np.random.default_rng(19)
        condition = DegeneracyCondition.reference(50.0)
        for _ in range(5):
            g = random_connected_graph(rng, 4, 7)
            agg = aggregates(g)
            res = fit_cwc(g, condition)
            delta = 9.25
            target = g.assessors[1]
            shifted = AssessmentGraph.from_assessments(
                Assessment(
                    a.assessor,
                    a.object,
                    a.score + (delta if a.assessor == target else 0.0),
                    a.confidence,
                )
                for a in g.assessments
            )
            res2 = fit_cwc(shifted, condition)
            k = delta * agg.C_ass[1] / (2.0 * agg.C_total)
            np.testing.assert_allclose(res2.values, res.values + k, atol=1e-9)
            expected_b = res.biases - k
            expected_b[1] += delta
            np.testing.assert_allclose(res2.biases, expected_b, atol=1e-9)


class TestOracleAgreement:
    def test_matches_generic_minimizer(self):
        rng = np.random.default_rng(20)
        for _ in range(8):
            g = random_connected_graph(
                rng, rng.integers(2, 6), rng.integers(2, 9), conf_range=(0.04, 4.0)
            )
            res = fit_cwc(g, ZERO_MEAN)
            v_o, b_o = align_to_zero_mean_bias(*brute_force_fit(g))
            np.testing.assert_allclose(res.values, v_o, atol=1e-6)
            np.testing.assert_allclose(res.biases, b_o, atol=1e-6)


class TestErrors:
    def test_disconnected_graph_names_components(self, fig_c):
        with pytest.raises(DisconnectedGraphError) as exc_info:
            fit_cwc(fig_c, ZERO_MEAN)
        message = str(exc_info.value)
        assert "a1" in message and "a3" in message
        assert len(exc_info.value.components) == 2

    def test_reduced_solver_checks_connectivity(self, fig_c):
        with pytest.raises(DisconnectedGraphError):
            solve_reduced_system(fig_c, ZERO_MEAN)

    def test_weak_bridge_warns(self):
        g = self._bridged(1e-12)
        with pytest.warns(RuntimeWarning, match="ill-conditioned"):
            solve_full_system(g, ZERO_MEAN)

    def test_negligible_bridge_raises(self):
        g = self._bridged(1e-15)
        with pytest.raises(NumericalError, match="singular"):
            solve_full_system(g, ZERO_MEAN)

    @staticmethod
    def _bridged(bridge_c):
        edges = [
            Assessment(f"a{a}", f"o{o}", 50.0 + a + o, 1.0)
            for a, o in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)]
        ]
        edges.append(Assessment("a1", "o2", 55.0, bridge_c))
        return AssessmentGraph.from_assessments(edges)


class TestAuxiliaryUnknown:
    def test_comes_out_zero(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            g = random_connected_graph(rng, rng.integers(2, 6), rng.integers(2, 9))
            for condition in ALL_CONDITIONS:
                _, _, aux = _solve_reduced_with_aux(g, condition)
                scale = max(1.0, float(np.max(np.abs(g.scores))))
                assert abs(aux) <= 1e-6 * scale


class TestNoiseScale:
    def test_arithmetic(self):
        rng = np.random.default_rng(22)
        g = random_connected_graph(rng, 4, 10)
        res = fit_cwc(g, ZERO_MEAN)
        w_bar, w_jeffreys = estimate_noise_scale(res, g)
        assert w_bar == pytest.approx(res.residual / g.n_assessments)
        assert w_jeffreys == pytest.approx(res.residual / (g.n_assessments - 2))

    def test_zero_residual(self, two_by_two):
        res = fit_cwc(two_by_two, ZERO_MEAN)
        assert estimate_noise_scale(res, two_by_two) == (0.0, 0.0)

    def test_rejects_sa_result(self, two_by_two):
        with pytest.raises(DataError):
            estimate_noise_scale(fit_sa(two_by_two), two_by_two)

    def test_too_few_assessments(self):
        g = AssessmentGraph.from_assessments(
            [
                Assessment("a1", "o1", 10.0, 1.0),
                Assessment("a2", "o1", 12.0, 1.0),
            ]
        )
        res = fit_iba(g, ZERO_MEAN)
        with pytest.raises(InsufficientDataError):
            estimate_noise_scale(res, g)

    def test_recovers_known_noise_scale(self):
        # Generate data with a known common variance scale and check the
        # maximum-likelihood estimate lands within three standard errors.
        rng = np.random.default_rng(23)
        n_a, n_o = 8, 60
        w_true = 2.5
        sigma = rng.uniform(2, 12, size=(n_a, n_o))
        b_true = rng.normal(0, 10, n_a)
        v_true = rng.uniform(20, 80, n_o)
        edges = []
        for a in range(n_a):
            for o in range(n_o):
                noise = sigma[a, o] * math.sqrt(w_true) * rng.standard_normal()
                edges.append(
                    Assessment(
                        f"a{a}",
                        f"o{o}",
                        float(v_true[o] + b_true[a] + noise),
                        1.0 / sigma[a, o] ** 2,
                    )
                )
        g = AssessmentGraph.from_assessments(edges)
        res = fit_cwc(g, ZERO_MEAN)
        w_bar, _ = estimate_noise_scale(res, g)
        n = g.n_assessments
        se = w_true * math.sqrt(2.0 / n)
        assert abs(w_bar - w_true) <= 3 * se


def test_fit_dispatch(two_by_two):
    assert fit(two_by_two, Method.SA).method is Method.SA
    assert fit(two_by_two, Method.IBA).method is Method.IBA
    assert fit(two_by_two, Method.CWC).method is Method.CWC


def test_reduced_path_used_for_many_objects():
    # 2 assessors, 12 objects triggers the reduced solver; results must
    # still satisfy the normal equations.
    rng = np.random.default_rng(24)
    pairs = [(a, o) for o in range(12) for a in range(2)]
    g = graph_from_pairs(
        pairs,
        scores=rng.uniform(0, 100, len(pairs)),
        confidences=rng.uniform(0.1, 2.0, len(pairs)),
    )
    res = fit_cwc(g, CW_ZERO)
    agg = aggregates(g)
    c = g.confidence_matrix()
    gap = np.max(np.abs(agg.C_obj * res.values + c.T @ res.biases - agg.V))
    assert gap <= 1e-9 * max(1.0, np.max(np.abs(agg.V)))

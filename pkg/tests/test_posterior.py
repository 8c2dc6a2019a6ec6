import dataclasses
import math

import numpy as np
import pytest

import panelcal.posterior as posterior_mod
from panelcal import (
    Assessment,
    AssessmentGraph,
    DataError,
    DegeneracyCondition,
    DisconnectedGraphError,
    InsufficientDataError,
    aggregates,
    build_m,
    fit_cwc,
    fit_iba,
    fit_sa,
    posterior_per_component,
    posterior_sigma_cwc,
    posterior_sigma_sa,
)
from panelcal.posterior import posterior_covariance, trace_m_inverse

from conftest import graph_from_pairs, random_connected_graph
from oracles import full_trace_inverse_on_plane

REFERENCE = DegeneracyCondition.reference(50.0)
ZERO_MEAN = DegeneracyCondition.zero_mean()


def complete_graph(n_a, n_o, rng, conf_range=(0.2, 3.0)):
    edges = []
    for a in range(n_a):
        for o in range(n_o):
            edges.append(
                Assessment(
                    f"a{a}",
                    f"o{o}",
                    float(rng.uniform(0, 100)),
                    float(rng.uniform(*conf_range)),
                )
            )
    return AssessmentGraph.from_assessments(edges)


class TestTraceInverse:
    def test_matches_full_diagonalization(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            g = random_connected_graph(rng, rng.integers(2, 6), rng.integers(2, 8))
            expected = full_trace_inverse_on_plane(build_m(g))
            assert trace_m_inverse(g) == pytest.approx(expected, rel=1e-10)

    def test_pairing_path_agrees_with_dense_path(self, monkeypatch):
        rng = np.random.default_rng(1)
        for _ in range(10):
            g = random_connected_graph(rng, rng.integers(2, 6), rng.integers(2, 9))
            dense = trace_m_inverse(g)
            monkeypatch.setattr(posterior_mod, "DENSE_EIG_LIMIT", 0)
            paired = trace_m_inverse(g)
            monkeypatch.undo()
            assert paired == pytest.approx(dense, rel=1e-10)


class TestSigmaCwc:
    def test_formula_recomposition(self):
        rng = np.random.default_rng(2)
        g = complete_graph(4, 8, rng)
        result = fit_cwc(g)
        report = posterior_sigma_cwc(result, g)
        nu = g.n_assessments - g.n_objects - g.n_assessors + 1
        agg = aggregates(g)
        sigma = math.sqrt(
            result.residual
            * full_trace_inverse_on_plane(build_m(g))
            / (2.0 * (nu - 2) * agg.C_total)
        )
        assert report.sigma_rms == pytest.approx(sigma, rel=1e-12)
        assert report.nu == nu
        assert report.w_star == pytest.approx(result.residual / (nu - 2), rel=1e-12)

    def test_doubling_residual_doubles_variance(self):
        rng = np.random.default_rng(3)
        g = complete_graph(3, 6, rng)
        result = fit_cwc(g)
        doubled = dataclasses.replace(result, residual=2.0 * result.residual)
        s1 = posterior_sigma_cwc(result, g).sigma_rms
        s2 = posterior_sigma_cwc(doubled, g).sigma_rms
        assert s2**2 == pytest.approx(2.0 * s1**2, rel=1e-12)

    def test_unit_confidences_equal_iba(self):
        rng = np.random.default_rng(4)
        g = complete_graph(3, 6, rng)
        unit = g.unit_confidences()
        sigma_cwc_on_unit = posterior_sigma_cwc(fit_cwc(unit), unit).sigma_rms
        sigma_iba = posterior_sigma_cwc(fit_iba(g), g).sigma_rms
        assert sigma_iba == pytest.approx(sigma_cwc_on_unit, rel=1e-12)

    def test_requires_enough_dof(self):
        rng = np.random.default_rng(5)
        g = complete_graph(2, 3, rng)  # nu = 6 - 3 - 2 + 1 = 2
        with pytest.raises(InsufficientDataError):
            posterior_sigma_cwc(fit_cwc(g), g)

    def test_rejects_sa_result(self):
        rng = np.random.default_rng(6)
        g = complete_graph(3, 6, rng)
        with pytest.raises(DataError):
            posterior_sigma_cwc(fit_sa(g), g)

    def test_disconnected_rejected(self, fig_c):
        result = fit_sa(fig_c)  # placeholder fit; posterior checks first
        result = dataclasses.replace(result, method=posterior_mod.Method.CWC)
        with pytest.raises(DisconnectedGraphError):
            posterior_sigma_cwc(result, fig_c)

    def test_student_dof_formula(self, fig_a):
        scores = np.arange(fig_a.n_assessments, dtype=float) * 3.0 + 10.0
        g = AssessmentGraph.from_assessments(
            Assessment(a.assessor, a.object, float(s), 1.0)
            for a, s in zip(fig_a.assessments, scores)
        )
        res = fit_cwc(g)
        # 12 assessments, 6 objects, 4 assessors
        assert res.dof == 12 - 6 - 4 + 1 == 3
        report = posterior_sigma_cwc(res, g)
        assert report.nu == 3


class TestPerComponent:
    def test_requires_reference_condition(self):
        rng = np.random.default_rng(7)
        g = complete_graph(3, 6, rng)
        with pytest.raises(DataError, match="reference"):
            posterior_per_component(fit_cwc(g, ZERO_MEAN), g)

    def test_symmetric_instance_equal_sds(self):
        rng = np.random.default_rng(8)
        scores = rng.uniform(0, 100, 12)
        g = graph_from_pairs(
            [(a, o) for a in range(3) for o in range(4)], scores=scores
        )
        report = posterior_per_component(fit_cwc(g, REFERENCE), g)
        np.testing.assert_allclose(
            report.per_object_sd, report.per_object_sd[0], rtol=1e-10
        )
        np.testing.assert_allclose(
            report.per_assessor_sd, report.per_assessor_sd[0], rtol=1e-10
        )

    def test_weighted_mean_matches_sigma(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            g = complete_graph(3, 7, rng)
            result = fit_cwc(g, REFERENCE)
            report = posterior_per_component(result, g)
            agg = aggregates(g)
            weighted = float(
                agg.C_obj @ report.per_object_sd**2
                + agg.C_ass @ report.per_assessor_sd**2
            ) / (2.0 * agg.C_total)
            sigma = posterior_sigma_cwc(result, g).sigma_rms
            assert weighted == pytest.approx(sigma**2, rel=1e-10)

    def test_confidence_rescaling_with_fixed_scale(self):
        # With the variance scale held fixed, multiplying every confidence
        # by t shrinks every posterior sd by 1/sqrt(t).
        rng = np.random.default_rng(10)
        g = complete_graph(3, 7, rng)
        t = 4.0
        scaled = g.scaled_confidences(t)
        result = fit_cwc(g, REFERENCE)
        result_scaled = fit_cwc(scaled, DegeneracyCondition.reference(50.0))
        pinned = dataclasses.replace(result_scaled, residual=result.residual)
        base = posterior_per_component(result, g)
        new = posterior_per_component(pinned, scaled)
        np.testing.assert_allclose(
            new.per_object_sd, base.per_object_sd / math.sqrt(t), rtol=1e-9
        )
        np.testing.assert_allclose(
            new.per_assessor_sd, base.per_assessor_sd / math.sqrt(t), rtol=1e-9
        )

    def test_covariance_diagonal_matches_sds(self):
        rng = np.random.default_rng(11)
        g = complete_graph(3, 5, rng)
        result = fit_cwc(g, REFERENCE)
        report = posterior_per_component(result, g)
        cov = posterior_covariance(result, g)
        sds = np.sqrt(np.diag(cov))
        np.testing.assert_allclose(
            sds, np.concatenate([report.per_object_sd, report.per_assessor_sd]), rtol=1e-10
        )


class TestSigmaSa:
    def test_formula(self):
        rng = np.random.default_rng(12)
        g = complete_graph(3, 5, rng)
        res = fit_sa(g)
        report = posterior_sigma_sa(res, g)
        expected = math.sqrt(res.residual / (g.n_assessments - g.n_objects))
        assert report.sigma_rms == pytest.approx(expected, rel=1e-12)

    def test_zero_residual(self):
        g = graph_from_pairs([(0, 0), (1, 0)], scores=[50.0, 50.0])
        assert posterior_sigma_sa(fit_sa(g), g).sigma_rms == 0.0

    def test_pairwise_discrepancy(self):
        # every object scored twice, d apart: sigma = d / sqrt(2)
        d = 6.0
        pairs, scores = [], []
        for o in range(5):
            pairs += [(0, o), (1, o)]
            scores += [40.0, 40.0 + d]
        g = graph_from_pairs(pairs, scores=scores)
        report = posterior_sigma_sa(fit_sa(g), g)
        assert report.sigma_rms == pytest.approx(d / math.sqrt(2.0), rel=1e-12)

    def test_requires_replication(self):
        g = graph_from_pairs([(0, 0), (0, 1)], scores=[10.0, 20.0])
        with pytest.raises(InsufficientDataError):
            posterior_sigma_sa(fit_sa(g), g)

    def test_rejects_two_way_result(self):
        rng = np.random.default_rng(13)
        g = complete_graph(3, 5, rng)
        with pytest.raises(DataError):
            posterior_sigma_sa(fit_cwc(g), g)


class TestMonteCarloCrossCheck:
    def test_posterior_width_matches_student_sampling(self):
        # Random-walk Metropolis on the exact joint posterior restricted to
        # the plane orthogonal to the flat direction (in the scaled
        # coordinates), compared against the closed-form RMS width.
        rng = np.random.default_rng(14)
        g = complete_graph(3, 5, rng)
        result = fit_cwc(g, REFERENCE)
        sigma = posterior_sigma_cwc(result, g).sigma_rms

        agg = aggregates(g)
        m = build_m(g)
        n = m.shape[0]
        null = np.concatenate([np.sqrt(agg.C_obj), -np.sqrt(agg.C_ass)])
        null /= np.linalg.norm(null)
        basis, _ = np.linalg.qr(np.eye(n) - np.outer(null, null))
        basis = basis[:, : n - 1]
        quad_form = basis.T @ m @ basis
        n_total = g.n_assessments
        R = result.residual

        def log_post(y):
            return -0.5 * n_total * np.log(R + np.einsum("ij,jk,ik->i", y, quad_form, y))

        chains = 256
        steps = 6000
        burn = 1500
        step_scale = 0.9 * math.sqrt(R / n_total)
        y = np.zeros((chains, n - 1))
        lp = log_post(y)
        acc = 0
        sq_sum = 0.0
        count = 0
        for i in range(steps):
            prop = y + step_scale * rng.standard_normal(y.shape)
            lp_prop = log_post(prop)
            accept = np.log(rng.random(chains)) < lp_prop - lp
            y[accept] = prop[accept]
            lp[accept] = lp_prop[accept]
            acc += accept.sum()
            if i >= burn:
                sq_sum += float(np.sum(y**2))
                count += chains
        assert 0.1 < acc / (steps * chains) < 0.9
        sigma_mc = math.sqrt(sq_sum / count / (2.0 * agg.C_total))
        assert sigma_mc == pytest.approx(sigma, rel=0.05)

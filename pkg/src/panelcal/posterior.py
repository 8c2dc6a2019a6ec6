"""Posterior uncertainty of the fitted values and biases.

With Gaussian noise of unknown common variance scale (scale-invariant
prior, integrated out), the joint posterior of (values, biases) on the
degeneracy-breaking plane is a multivariate Student distribution with
nu = N - N_O - N_A + 1 degrees of freedom and covariance w* M^{-1} in the
confidence-scaled coordinates, where w* = R/(nu-2) and M is the scaled
confidence matrix of :mod:`panelcal.robustness`. M^{-1} is understood on
the plane, i.e. with the zero eigendirection removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationResult, ConditionKind, Method, effective_graph
from .errors import DataError, DisconnectedGraphError, InsufficientDataError
from .model import AssessmentGraph, aggregates, connected_components
from .robustness import EIG_TOL, build_dtd, build_m

# Full eigendecomposition of M is cheap up to this size; beyond it the
# trace is accumulated from the N_A-dimensional spectrum instead.
DENSE_EIG_LIMIT = 2000


@dataclass(frozen=True)
class PosteriorReport:
    """Summary of posterior spread.

    ``sigma_rms`` is the confidence-weighted root-mean-square uncertainty
    over all components (values and biases together for the two-way fits;
    values weighted by assessor counts for SA). ``per_component_sd`` is
    filled by :func:`posterior_per_component` only; the per-component
    marginals are significantly correlated and should not be read as
    independent error bars.
    """

    w_star: float
    sigma_rms: float
    nu: int
    per_object_sd: np.ndarray | None = None
    per_assessor_sd: np.ndarray | None = None


def _require_connected(graph: AssessmentGraph) -> None:
    comps = connected_components(graph)
    if len(comps) > 1:
        raise DisconnectedGraphError(comps)


def trace_m_inverse(graph: AssessmentGraph) -> float:
    """Trace of M^{-1} restricted to the degeneracy-breaking plane.

    Equals the sum of 1/mu over the positive eigenvalues of M. Computed by
    full symmetric eigendecomposition at small scale; at large scale via
    the pairing between eigenvalues of M and of D^T D: each eigenvalue
    lambda of D^T D in (0, 1) contributes 1/(1-sqrt(lambda)) +
    1/(1+sqrt(lambda)) = 2/(1-lambda), the known unit eigenvalue
    contributes 1/2 (its partner 0 is the removed direction), and every
    remaining eigenvalue of M equals 1.
    """
    n = graph.n_objects + graph.n_assessors
    if n <= DENSE_EIG_LIMIT:
        mus = np.linalg.eigvalsh(build_m(graph))
        null, rest = mus[0], mus[1:]
        if abs(null) > EIG_TOL * max(1.0, abs(mus[-1])):
            raise DataError(
                "scaled confidence matrix has no clean zero mode; graph "
                "structure is inconsistent"
            )
        if rest[0] <= EIG_TOL:
            _require_connected(graph)  # raises with the partition
            raise DataError("second eigenvalue is numerically zero")
        return float(np.sum(1.0 / rest))

    lams = np.linalg.eigvalsh(build_dtd(graph))
    positive = lams[lams > EIG_TOL]
    near_one = positive[positive > 1.0 - EIG_TOL]
    if near_one.size != 1:
        _require_connected(graph)
        raise DataError("unit eigenvalue of D^T D is not simple")
    interior = positive[positive <= 1.0 - EIG_TOL]
    trace = 0.5 + float(np.sum(2.0 / (1.0 - interior)))
    ones_in_m = n - 2 * positive.size
    return trace + float(ones_in_m)


def posterior_sigma_cwc(
    result: CalibrationResult, graph: AssessmentGraph
) -> PosteriorReport:
    """Confidence-weighted RMS posterior uncertainty for a two-way fit.

    sigma = sqrt(R * Tr(M^{-1}) / (2 (nu - 2) C_total)).
    """
    if result.method is Method.SA:
        raise DataError("use posterior_sigma_sa for the simple-averaging fit")
    g = effective_graph(graph, result.method)
    _require_connected(g)
    nu = g.n_assessments - g.n_objects - g.n_assessors + 1
    if nu <= 2:
        raise InsufficientDataError(
            f"posterior width needs nu > 2 degrees of freedom, have nu={nu}"
        )
    w_star = result.residual / (nu - 2)
    agg = aggregates(g)
    sigma = math.sqrt(w_star * trace_m_inverse(g) / (2.0 * agg.C_total))
    return PosteriorReport(w_star=w_star, sigma_rms=sigma, nu=nu)


def posterior_per_component(
    result: CalibrationResult, graph: AssessmentGraph
) -> PosteriorReport:
    """Marginal posterior standard deviations of each value and bias.

    Derived for the fixed-reference degeneracy condition, whose constraint
    direction coincides with the null direction of M; other conditions
    would tilt the plane. The marginals are strongly correlated: treat
    them as indicative widths, not independent intervals. For the full
    covariance at small scale see :func:`posterior_covariance`.
    """
    if result.condition is None or result.condition.kind is not ConditionKind.REFERENCE_VALUE:
        raise DataError(
            "per-component posterior widths require a fit under the "
            "fixed-reference degeneracy condition"
        )
    g = effective_graph(graph, result.method)
    _require_connected(g)
    nu = g.n_assessments - g.n_objects - g.n_assessors + 1
    if nu <= 2:
        raise InsufficientDataError(
            f"posterior width needs nu > 2 degrees of freedom, have nu={nu}"
        )
    w_star = result.residual / (nu - 2)

    mus, vecs = np.linalg.eigh(build_m(g))
    keep = mus > EIG_TOL
    if np.count_nonzero(~keep) != 1:
        _require_connected(g)
        raise DataError("scaled confidence matrix does not have a simple zero mode")
    # var(g_i) = w* sum_j vecs[i, j]**2 / mu_j over the positive modes.
    var_scaled = w_star * (vecs[:, keep] ** 2 / mus[keep]).sum(axis=1)

    agg = aggregates(g)
    n_o = g.n_objects
    sd_v = np.sqrt(var_scaled[:n_o] / agg.C_obj)
    sd_b = np.sqrt(var_scaled[n_o:] / agg.C_ass)
    sigma = math.sqrt(float(var_scaled.sum()) / (2.0 * agg.C_total))
    return PosteriorReport(
        w_star=w_star,
        sigma_rms=sigma,
        nu=nu,
        per_object_sd=sd_v,
        per_assessor_sd=sd_b,
    )


def posterior_covariance(
    result: CalibrationResult, graph: AssessmentGraph
) -> np.ndarray:
    """Full posterior covariance of (values, biases), small scale only."""
    g = effective_graph(graph, result.method)
    n = g.n_objects + g.n_assessors
    if n > DENSE_EIG_LIMIT:
        raise DataError(
            f"full covariance is only assembled up to {DENSE_EIG_LIMIT} "
            f"components, have {n}"
        )
    if result.condition is None or result.condition.kind is not ConditionKind.REFERENCE_VALUE:
        raise DataError(
            "full covariance requires a fit under the fixed-reference "
            "degeneracy condition"
        )
    _require_connected(g)
    nu = g.n_assessments - g.n_objects - g.n_assessors + 1
    if nu <= 2:
        raise InsufficientDataError(
            f"posterior covariance needs nu > 2 degrees of freedom, have nu={nu}"
        )
    w_star = result.residual / (nu - 2)
    mus, vecs = np.linalg.eigh(build_m(g))
    keep = mus > EIG_TOL
    cov_scaled = w_star * (vecs[:, keep] / mus[keep]) @ vecs[:, keep].T
    agg = aggregates(g)
    root_weights = np.sqrt(np.concatenate([agg.C_obj, agg.C_ass]))
    return cov_scaled / root_weights[:, None] / root_weights[None, :]


def posterior_sigma_sa(
    result: CalibrationResult, graph: AssessmentGraph
) -> PosteriorReport:
    """Posterior RMS uncertainty for simple averaging.

    sigma = sqrt(R / (N - N_O)), the RMS weighted by the number of
    assessors per object.
    """
    if result.method is not Method.SA:
        raise DataError("posterior_sigma_sa expects a simple-averaging fit")
    n, n_o = graph.n_assessments, graph.n_objects
    if n <= n_o:
        raise InsufficientDataError(
            f"need more assessments ({n}) than objects ({n_o}) for an "
            "uncertainty estimate"
        )
    nu = n - n_o
    w_star = result.residual / nu
    return PosteriorReport(w_star=w_star, sigma_rms=math.sqrt(w_star), nu=nu)

"""Bayesian model comparison for the three fitting methods.

The marginal likelihood of the data under each model is computed in closed
form: uniform ball priors on values and (constrained) biases, a truncated
scale-invariant prior on the noise variance, and integration ranges
extended beyond the prior balls (the standard Laplace-style approximation;
its truncation error is not quantified here). All Gamma-function and
determinant arithmetic is done in log space, so evidences of order
exp(-200) and far smaller are handled without underflow.

Note that because the integration range over values is extended to the
whole space, the ball centre ``v_ref`` drops out of the closed forms; only
the ball radii and the variance interval matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .calibration import DegeneracyCondition, fit_cwc, fit_sa
from .errors import (
    DataError,
    DisconnectedGraphError,
    InsufficientDataError,
    NumericalError,
)
from .model import AssessmentGraph, aggregates, connected_components

# Residuals this small relative to the centred score spread mean the data
# fit the model exactly; the variance integral then diverges.
_DEGENERATE_RESIDUAL = 1e-10


@dataclass(frozen=True)
class PriorConfig:
    """Prior scales for the model comparison.

    ``sigma_o``/``sigma_a`` are the ball-radius scales for values and
    biases; ``w_min``/``w_max`` truncate the variance prior; ``v_ref``
    centres the value ball (kept for completeness; the extended-range
    closed forms do not depend on it, and None means "use the weighted
    average score").
    """

    sigma_o: float = 22.5
    sigma_a: float = 15.0
    v_ref: float | None = None
    w_min: float = 1.0
    w_max: float = 900.0

    def __post_init__(self) -> None:
        for name in ("sigma_o", "sigma_a", "w_min", "w_max"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise DataError(f"{name} must be positive and finite, got {value!r}")
        if self.w_min >= self.w_max:
            raise DataError(
                f"w_min ({self.w_min}) must be smaller than w_max ({self.w_max})"
            )
        if self.v_ref is not None and not math.isfinite(self.v_ref):
            raise DataError(f"v_ref must be finite, got {self.v_ref!r}")

    @property
    def log_w_ratio(self) -> float:
        return math.log(self.w_max / self.w_min)


@dataclass(frozen=True)
class EvidenceReport:
    """Log-evidence per model plus the additive breakdown of each."""

    log_evidence_sa: float
    log_evidence_iba: float
    log_evidence_cwc: float
    components: dict[str, dict[str, float]]
    ranking: tuple[str, ...]


def _log_z_values(n_objects: int, sigma_o: float) -> float:
    """Log normalisation of the uniform ball prior on the values."""
    return 0.5 * n_objects * math.log(
        math.pi * n_objects * sigma_o * sigma_o
    ) - gammaln(0.5 * n_objects + 1.0)


def _log_z_biases(n_assessors: int, sigma_a: float) -> float:
    """Log normalisation of the zero-sum-constrained ball prior on biases."""
    return (
        -0.5 * math.log(n_assessors)
        + 0.5 * (n_assessors - 1) * math.log(math.pi * n_assessors * sigma_a * sigma_a)
        - gammaln(0.5 * (n_assessors + 1))
    )


def log_evidence_sa(graph: AssessmentGraph, prior: PriorConfig) -> float:
    return _sa_parts(graph, prior)["total"]


def _sa_parts(graph: AssessmentGraph, prior: PriorConfig) -> dict[str, float]:
    n, n_o = graph.n_assessments, graph.n_objects
    if n <= n_o:
        raise InsufficientDataError(
            f"evidence for averaging needs more assessments ({n}) than "
            f"objects ({n_o})"
        )
    result = fit_sa(graph)
    residual = result.residual
    spread = float(np.sum((graph.scores - graph.scores.mean()) ** 2))
    if residual <= _DEGENERATE_RESIDUAL * spread:
        raise DataError(
            "zero residual: the evidence integral diverges on exactly "
            "consistent data"
        )
    counts = np.zeros(n_o)
    np.add.at(counts, graph.edge_objects, 1.0)
    half = 0.5 * (n - n_o)
    parts = {
        "gamma_term": float(gammaln(half)),
        "residual_term": float(-half * math.log(math.pi * residual)),
        "count_term": float(-0.5 * np.sum(np.log(counts))),
        "value_prior_term": -_log_z_values(n_o, prior.sigma_o),
        "variance_prior_term": -prior.log_w_ratio,
    }
    parts["total"] = sum(v for k, v in parts.items() if k != "total")
    return parts


def _eliminated_index(graph: AssessmentGraph, eliminated_assessor: str | None) -> int:
    if eliminated_assessor is None:
        return graph.n_assessors - 1
    try:
        return graph.assessor_index[eliminated_assessor]
    except KeyError:
        raise DataError(f"unknown assessor {eliminated_assessor!r}") from None


def _log_det_reduced_hessian(graph: AssessmentGraph, eliminated: int) -> float:
    """Log-determinant of the quadratic form with one bias eliminated.

    The bias of the eliminated assessor is expressed as minus the sum of
    the others; the resulting (N_O + N_A - 1)-dimensional matrix has a
    diagonal object block, so its determinant is computed from the Schur
    complement on the (small) assessor block.
    """
    agg = aggregates(graph)
    c = graph.confidence_matrix()
    keep = [a for a in range(graph.n_assessors) if a != eliminated]
    c_tilde = c[keep, :] - c[eliminated, :][None, :]
    block = np.diag(agg.C_ass[keep]) + agg.C_ass[eliminated]
    schur = block - (c_tilde / agg.C_obj[None, :]) @ c_tilde.T
    schur = 0.5 * (schur + schur.T)
    try:
        chol = scipy.linalg.cholesky(schur, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            "reduced quadratic form is not positive definite; the graph is "
            "disconnected or numerically degenerate"
        ) from exc
    return float(np.sum(np.log(agg.C_obj)) + 2.0 * np.sum(np.log(np.diag(chol))))


def log_evidence_cwc(
    graph: AssessmentGraph,
    prior: PriorConfig,
    eliminated_assessor: str | None = None,
) -> float:
    return _cwc_parts(graph, prior, eliminated_assessor)["total"]


def _cwc_parts(
    graph: AssessmentGraph,
    prior: PriorConfig,
    eliminated_assessor: str | None = None,
) -> dict[str, float]:
    comps = connected_components(graph)
    if len(comps) > 1:
        raise DisconnectedGraphError(comps)
    n, n_o, n_a = graph.n_assessments, graph.n_objects, graph.n_assessors
    nu = n - n_o - n_a + 1
    if nu <= 0:
        raise InsufficientDataError(
            f"evidence for the two-way fit needs nu > 0, have nu={nu}"
        )
    # The bias prior carries a zero-sum constraint, so the residual is the
    # least-squares value under the matching condition (the residual is
    # shift-invariant anyway).
    result = fit_cwc(graph, DegeneracyCondition.zero_mean())
    residual = result.residual
    c = graph.confidences
    s_bar = float(np.sum(c * graph.scores) / np.sum(c))
    spread = float(np.sum(c * (graph.scores - s_bar) ** 2))
    if residual <= _DEGENERATE_RESIDUAL * spread:
        raise DataError(
            "zero residual: the evidence integral diverges on exactly "
            "consistent data"
        )
    eliminated = _eliminated_index(graph, eliminated_assessor)
    parts = {
        "gamma_term": float(gammaln(0.5 * nu)),
        "residual_term": float(-0.5 * nu * math.log(math.pi * residual)),
        "confidence_term": float(0.5 * np.sum(np.log(graph.confidences))),
        "determinant_term": -0.5 * _log_det_reduced_hessian(graph, eliminated),
        "value_prior_term": -_log_z_values(n_o, prior.sigma_o),
        "bias_prior_term": -_log_z_biases(n_a, prior.sigma_a),
        "variance_prior_term": -prior.log_w_ratio,
    }
    parts["total"] = sum(v for k, v in parts.items() if k != "total")
    return parts


def log_evidence_iba(graph: AssessmentGraph, prior: PriorConfig) -> float:
    """Evidence for the unit-confidence two-way fit."""
    return log_evidence_cwc(graph.unit_confidences(), prior)


def compare_models(graph: AssessmentGraph, prior: PriorConfig) -> EvidenceReport:
    """All three log-evidences, with breakdowns and a ranking."""
    sa = _sa_parts(graph, prior)
    iba = _cwc_parts(graph.unit_confidences(), prior)
    cwc = _cwc_parts(graph, prior)
    totals = {"sa": sa["total"], "iba": iba["total"], "cwc": cwc["total"]}
    ranking = tuple(sorted(totals, key=lambda k: totals[k], reverse=True))
    return EvidenceReport(
        log_evidence_sa=sa["total"],
        log_evidence_iba=iba["total"],
        log_evidence_cwc=cwc["total"],
        components={"sa": sa, "iba": iba, "cwc": cwc},
        ranking=ranking,
    )

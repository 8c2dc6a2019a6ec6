"""Spectral robustness of the calibration to changes in the scores.

How much can fitted values move if some scores are perturbed? The answer
is governed by the second-smallest eigenvalue mu2 of a scaled confidence
matrix M: in confidence-weighted norms, the output change is at most
1/sqrt(mu2) times the input change (sqrt(2)/sqrt(mu2) under the
score-dependent degeneracy conditions). mu2 > 0 exactly when the graph is
connected, so it doubles as a quantitative connectivity measure.

mu2 is computed from the N_A-dimensional matrix D^T D via
mu2 = 1 - sqrt(lambda2); assembling the full (N_O+N_A)-dimensional M is
only needed for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import ConditionKind, DegeneracyCondition
from .errors import DataError
from .model import AssessmentGraph, aggregates

# Relative tolerance for declaring an eigenvalue of D^T D equal to 1
# (which signals disconnection).
EIG_TOL = 1e-10


@dataclass(frozen=True)
class RobustnessReport:
    """Spectral gap and the perturbation bounds it implies.

    ``bound_factor`` multiplies the weighted norm of a score perturbation
    to bound the weighted norm of the (value, bias) change;
    ``per_object_bound[o]`` multiplies it to bound the change of object
    o's value alone. Both are infinite when the graph is disconnected.
    """

    lambda2: float | None
    mu2: float
    bound_factor: float
    per_object_bound: np.ndarray
    condition: DegeneracyCondition


def build_dtd(graph: AssessmentGraph) -> np.ndarray:
    """The N_A x N_A matrix D^T D with D_oa = c_ao / sqrt(C_o C'_a)."""
    agg = aggregates(graph)
    c = graph.confidence_matrix()
    d_t = c / np.sqrt(agg.C_ass)[:, None] / np.sqrt(agg.C_obj)[None, :]
    dtd = d_t @ d_t.T
    return 0.5 * (dtd + dtd.T)


def build_m(graph: AssessmentGraph) -> np.ndarray:
    """The full (N_O+N_A) x (N_O+N_A) matrix [[I, D], [D^T, I]].

    Used for cross-checks and for posterior widths; mu2 itself comes from
    the smaller D^T D.
    """
    agg = aggregates(graph)
    n_o, n_a = graph.n_objects, graph.n_assessors
    c = graph.confidence_matrix()
    d = (c / np.sqrt(agg.C_ass)[:, None] / np.sqrt(agg.C_obj)[None, :]).T
    m = np.eye(n_o + n_a)
    m[:n_o, n_o:] = d
    m[n_o:, :n_o] = d.T
    return m


def mu2(graph: AssessmentGraph) -> tuple[float, float | None]:
    """Second-smallest eigenvalue of M, via the reduction to D^T D.

    Returns (mu2, lambda2); lambda2 is None in the degenerate shapes where
    the reduction does not apply (a single assessor).
    """
    n_a, n_o = graph.n_assessors, graph.n_objects
    if n_a == 1:
        return (2.0, None) if n_o == 1 else (1.0, None)

    dtd = build_dtd(graph)
    agg = aggregates(graph)
    # sqrt(C'_a) is the known eigenvector with eigenvalue exactly 1; deflate
    # it so lambda2 is the top of what remains even under multiplicity.
    u = np.sqrt(agg.C_ass)
    u /= np.linalg.norm(u)
    deflated = dtd - np.outer(u, u)
    eigs = np.linalg.eigvalsh(deflated)
    lam2 = float(np.clip(eigs[-1], 0.0, None))
    if lam2 > 1.0 and lam2 <= 1.0 + EIG_TOL:
        lam2 = 1.0
    value = 1.0 - math.sqrt(lam2)
    if abs(value) <= EIG_TOL:
        value = 0.0
    return value, lam2


def scores_norm(delta_s: np.ndarray, graph: AssessmentGraph) -> float:
    """Confidence-weighted norm of a per-assessment score perturbation."""
    delta_s = np.asarray(delta_s, dtype=float)
    if delta_s.shape != (graph.n_assessments,):
        raise DataError(
            f"perturbation has shape {delta_s.shape}, expected "
            f"({graph.n_assessments},) matching the assessment list"
        )
    return float(np.sqrt(np.sum(graph.confidences * delta_s * delta_s)))


def results_norm(
    delta_v: np.ndarray, delta_b: np.ndarray, graph: AssessmentGraph
) -> float:
    """Confidence-weighted norm of a (values, biases) change."""
    delta_v = np.asarray(delta_v, dtype=float)
    delta_b = np.asarray(delta_b, dtype=float)
    if delta_v.shape != (graph.n_objects,) or delta_b.shape != (graph.n_assessors,):
        raise DataError(
            f"change has shapes {delta_v.shape}/{delta_b.shape}, expected "
            f"({graph.n_objects},)/({graph.n_assessors},)"
        )
    agg = aggregates(graph)
    return float(
        np.sqrt(np.sum(agg.C_obj * delta_v**2) + np.sum(agg.C_ass * delta_b**2))
    )


def perturbation_bound(
    graph: AssessmentGraph,
    condition: DegeneracyCondition,
) -> RobustnessReport:
    """Worst-case amplification of score changes into result changes.

    The factor is 1/sqrt(mu2) when the degeneracy is broken against a
    fixed reference value, and sqrt(2)/sqrt(mu2) for the
    confidence-weighted zero-bias condition. No tight factor is known for
    the plain zero-mean condition; the sqrt(2) factor is reported for it
    as well, without a tightness claim.
    """
    value, lam2 = mu2(graph)
    agg = aggregates(graph)
    if value <= 0.0:
        factor = math.inf
    elif condition.kind is ConditionKind.REFERENCE_VALUE:
        factor = 1.0 / math.sqrt(value)
    else:
        factor = math.sqrt(2.0) / math.sqrt(value)
    return RobustnessReport(
        lambda2=lam2,
        mu2=value,
        bound_factor=factor,
        per_object_bound=factor / np.sqrt(agg.C_obj),
        condition=condition,
    )

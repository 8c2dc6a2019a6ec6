"""Least-squares calibration of panel scores.

Three fits are offered on the same data:

* SA  -- simple averaging: per-object unweighted mean, no biases.
* IBA -- additive two-way fit (values + assessor biases), all weights 1.
* CWC -- the same fit weighted by the declared confidences.

For IBA/CWC the objective sum(c * (s - v_o - b_a)**2) determines (v, b)
only up to the shift (v + k, b - k); a degeneracy-breaking condition pins
the shift. Both the full (N_O + N_A)-dimensional linear system and the
reduced assessor-only system are implemented and agree to solver precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import (
    DataError,
    DisconnectedGraphError,
    InsufficientDataError,
    NumericalError,
)
from .model import AssessmentGraph, GraphAggregates, aggregates, connected_components

RCOND_WARN = 1e-12
RCOND_ERROR = 1e-14

_AUX_TOL = 1e-6


class Method(Enum):
    SA = "sa"
    IBA = "iba"
    CWC = "cwc"


class ConditionKind(Enum):
    ZERO_MEAN_BIAS = "zero-mean"
    CONFIDENCE_WEIGHTED_ZERO_BIAS = "cw-zero"
    REFERENCE_VALUE = "reference"


@dataclass(frozen=True)
class DegeneracyCondition:
    """Affine constraint removing the (v + k, b - k) indeterminacy.

    ``zero_mean`` forces the plain average bias to zero;
    ``confidence_weighted`` forces the confidence-weighted average bias to
    zero (the default everywhere, since it keeps the weighted average value
    equal to the weighted average score); ``reference`` pins the weighted
    average of (values minus biases) to a chosen reference value.
    """

    kind: ConditionKind
    v_ref: float | None = None

    def __post_init__(self) -> None:
        if self.kind is ConditionKind.REFERENCE_VALUE:
            if self.v_ref is None or not math.isfinite(self.v_ref):
                raise DataError("reference condition requires a finite v_ref")
        elif self.v_ref is not None:
            raise DataError(f"v_ref is only meaningful for {ConditionKind.REFERENCE_VALUE}")

    @classmethod
    def zero_mean(cls) -> "DegeneracyCondition":
        return cls(ConditionKind.ZERO_MEAN_BIAS)

    @classmethod
    def confidence_weighted(cls) -> "DegeneracyCondition":
        return cls(ConditionKind.CONFIDENCE_WEIGHTED_ZERO_BIAS)

    @classmethod
    def reference(cls, v_ref: float) -> "DegeneracyCondition":
        return cls(ConditionKind.REFERENCE_VALUE, v_ref)


DEFAULT_CONDITION = DegeneracyCondition.confidence_weighted()


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted values and biases, indexed against the graph orderings.

    ``residual`` is the weighted sum of squared discrepancies at the fit
    (weights 1 for IBA; weights 1 and b == 0 for SA). ``dof`` is
    N - N_O - N_A + 1 for IBA/CWC and N - N_O for SA.
    """

    values: np.ndarray
    biases: np.ndarray
    residual: float
    method: Method
    condition: DegeneracyCondition | None
    dof: int
    objects: tuple[str, ...]
    assessors: tuple[str, ...]

    def value_of(self, object_id: str) -> float:
        return float(self.values[self.objects.index(object_id)])

    def bias_of(self, assessor_id: str) -> float:
        return float(self.biases[self.assessors.index(assessor_id)])


def effective_graph(graph: AssessmentGraph, method: Method) -> AssessmentGraph:
    """The graph a method actually operates on (unit confidences for IBA/SA)."""
    if method is Method.CWC:
        return graph
    return graph.unit_confidences()


def _require_connected(graph: AssessmentGraph) -> None:
    comps = connected_components(graph)
    if len(comps) > 1:
        raise DisconnectedGraphError(comps)


def _condition_bias_coefficients(
    condition: DegeneracyCondition, agg: GraphAggregates
) -> tuple[np.ndarray, float]:
    """Express the condition as sum(beta_a * b_a) = gamma.

    The reference condition constrains values and biases jointly, but on
    the solution manifold of the normal equations it reduces to a pure
    bias constraint via sum_o C_o v_o = sum_o V_o - sum_a C'_a b_a.
    """
    if condition.kind is ConditionKind.ZERO_MEAN_BIAS:
        return np.ones_like(agg.C_ass), 0.0
    if condition.kind is ConditionKind.CONFIDENCE_WEIGHTED_ZERO_BIAS:
        return agg.C_ass.copy(), 0.0
    total_weighted_score = float(agg.V.sum())
    gamma = 0.5 * (total_weighted_score - agg.C_total * condition.v_ref)
    return agg.C_ass.copy(), gamma


def _condition_full_row(
    condition: DegeneracyCondition, agg: GraphAggregates
) -> tuple[np.ndarray, float]:
    """The condition as a row over the stacked unknowns (v, b)."""
    n_o = agg.C_obj.size
    n_a = agg.C_ass.size
    row = np.zeros(n_o + n_a)
    if condition.kind is ConditionKind.ZERO_MEAN_BIAS:
        row[n_o:] = 1.0
        return row, 0.0
    if condition.kind is ConditionKind.CONFIDENCE_WEIGHTED_ZERO_BIAS:
        row[n_o:] = agg.C_ass
        return row, 0.0
    row[:n_o] = agg.C_obj
    row[n_o:] = -agg.C_ass
    return row, agg.C_total * condition.v_ref


def _normalized_parts(graph: AssessmentGraph) -> tuple[GraphAggregates, np.ndarray]:
    """Aggregates and confidence matrix rescaled to mean confidence 1.

    The fit is invariant under a common confidence scale, but the linear
    systems are not: extreme scales (confidences of 1e18 from tiny
    declared uncertainties) would wreck their conditioning.
    """
    agg = aggregates(graph)
    cmean = agg.C_total / graph.n_assessments
    c = graph.confidence_matrix() / cmean
    scaled = GraphAggregates(
        V=agg.V / cmean,
        B=agg.B / cmean,
        C_obj=agg.C_obj / cmean,
        C_ass=agg.C_ass / cmean,
        C_total=agg.C_total / cmean,
        s_bar=agg.s_bar,
    )
    return scaled, c


def _check_rcond(matrix: np.ndarray, lu, piv) -> None:
    """Reciprocal-condition gate on a factorized general matrix."""
    anorm = np.linalg.norm(matrix, 1)
    try:
        rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
        if info != 0:
            return
    except Exception:  # pragma: no cover - LAPACK wrapper unavailable
        return
    if rcond < RCOND_ERROR:
        raise NumericalError(
            f"calibration system is numerically singular (rcond={rcond:.2e}); "
            "the assessment graph is connected only through negligible confidences"
        )
    if rcond < RCOND_WARN:
        warnings.warn(
            f"calibration system is ill-conditioned (rcond={rcond:.2e}); "
            "results may be sensitive to tiny score changes",
            RuntimeWarning,
            stacklevel=3,
        )


def solve_full_system(
    graph: AssessmentGraph,
    condition: DegeneracyCondition = DEFAULT_CONDITION,
    replace_row: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the stacked (N_O + N_A)-dimensional normal equations.

    One equation (by default the last assessor's) is replaced by the
    degeneracy-breaking condition; the solution is independent of which
    row is chosen because the dropped equation is implied by the rest.
    """
    _require_connected(graph)
    agg, c = _normalized_parts(graph)
    n_o, n_a = graph.n_objects, graph.n_assessors
    n = n_o + n_a

    L = np.zeros((n, n))
    L[:n_o, :n_o][np.diag_indices(n_o)] = agg.C_obj
    L[n_o:, n_o:][np.diag_indices(n_a)] = agg.C_ass
    L[:n_o, n_o:] = c.T
    L[n_o:, :n_o] = c
    rhs = np.concatenate([agg.V, agg.B])

    row, gamma = _condition_full_row(condition, agg)
    i = n - 1 if replace_row is None else replace_row
    if not 0 <= i < n:
        raise DataError(f"replace_row {i} out of range for system of size {n}")
    L[i] = row
    rhs[i] = gamma

    lu, piv = scipy.linalg.lu_factor(L)
    _check_rcond(L, lu, piv)
    sol = scipy.linalg.lu_solve((lu, piv), rhs)
    return sol[:n_o], sol[n_o:]


def _solve_reduced_with_aux(
    graph: AssessmentGraph, condition: DegeneracyCondition
) -> tuple[np.ndarray, np.ndarray, float]:
    agg, c = _normalized_parts(graph)
    n_a = graph.n_assessors

    weights = c / agg.C_obj[None, :]
    coupling = weights @ c.T  # sum_o c_ao c_a'o / C_o
    Q = coupling - np.diag(agg.C_ass)
    rhs = weights @ agg.V - agg.B

    beta, gamma = _condition_bias_coefficients(condition, agg)
    K = np.zeros((n_a + 1, n_a + 1))
    K[:n_a, :n_a] = Q
    K[:n_a, n_a] = beta
    K[n_a, :n_a] = beta
    full_rhs = np.concatenate([rhs, [gamma]])

    try:
        sol = scipy.linalg.solve(K, full_rhs, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"reduced calibration solve failed: {exc}") from exc

    b = sol[:n_a]
    v = (agg.V - c.T @ b) / agg.C_obj
    return v, b, float(sol[n_a])


def solve_reduced_system(
    graph: AssessmentGraph,
    condition: DegeneracyCondition = DEFAULT_CONDITION,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve via the N_A-dimensional assessor-only system.

    Eliminating the values leaves a singular symmetric system for the
    biases. The condition sum(beta_a b_a) = gamma is incorporated by
    appending one auxiliary unknown and the condition row, which keeps the
    matrix symmetric; the auxiliary unknown must come out zero (the
    right-hand side is orthogonal to the null direction), and a nonzero
    value indicates an internal inconsistency.
    """
    _require_connected(graph)
    v, b, aux = _solve_reduced_with_aux(graph, condition)
    scale = max(1.0, float(np.max(np.abs(graph.scores))))
    if abs(aux) > _AUX_TOL * scale:
        raise NumericalError(
            f"auxiliary unknown {aux:.3e} is not zero; the reduced system is "
            "internally inconsistent (likely severe ill-conditioning)"
        )
    return v, b


def _residual(graph: AssessmentGraph, v: np.ndarray, b: np.ndarray) -> float:
    r = graph.scores - v[graph.edge_objects] - b[graph.edge_assessors]
    return float(np.sum(graph.confidences * r * r))


# Reduced path saves work once objects heavily outnumber assessors.
REDUCED_THRESHOLD = 4


def _fit_two_way(
    graph: AssessmentGraph, condition: DegeneracyCondition, method: Method
) -> CalibrationResult:
    if graph.n_objects > REDUCED_THRESHOLD * graph.n_assessors:
        v, b = solve_reduced_system(graph, condition)
    else:
        v, b = solve_full_system(graph, condition)
    dof = graph.n_assessments - graph.n_objects - graph.n_assessors + 1
    return CalibrationResult(
        values=v,
        biases=b,
        residual=_residual(graph, v, b),
        method=method,
        condition=condition,
        dof=dof,
        objects=graph.objects,
        assessors=graph.assessors,
    )


def fit_cwc(
    graph: AssessmentGraph,
    condition: DegeneracyCondition = DEFAULT_CONDITION,
) -> CalibrationResult:
    """Confidence-weighted calibration: values and biases from weighted
    least squares on the declared confidences.

    Assessors with a single assessment are accepted, but their only effect
    is to determine their own bias (their object's value comes out as
    their score minus that bias); they add no calibration information
    about anyone else.
    """
    return _fit_two_way(graph, condition, Method.CWC)


def fit_iba(
    graph: AssessmentGraph,
    condition: DegeneracyCondition = DEFAULT_CONDITION,
) -> CalibrationResult:
    """Additive two-way fit with all confidences set to 1."""
    return _fit_two_way(graph.unit_confidences(), condition, Method.IBA)


def fit_sa(graph: AssessmentGraph) -> CalibrationResult:
    """Simple averaging: per-object means, zero biases, unit weights."""
    s = graph.scores
    n_per_obj = np.zeros(graph.n_objects)
    totals = np.zeros(graph.n_objects)
    np.add.at(n_per_obj, graph.edge_objects, 1.0)
    np.add.at(totals, graph.edge_objects, s)
    v = totals / n_per_obj
    dev = s - v[graph.edge_objects]
    return CalibrationResult(
        values=v,
        biases=np.zeros(graph.n_assessors),
        residual=float(np.sum(dev * dev)),
        method=Method.SA,
        condition=None,
        dof=graph.n_assessments - graph.n_objects,
        objects=graph.objects,
        assessors=graph.assessors,
    )


def fit(
    graph: AssessmentGraph,
    method: Method,
    condition: DegeneracyCondition = DEFAULT_CONDITION,
) -> CalibrationResult:
    """Dispatch to the requested fitting method."""
    if method is Method.SA:
        return fit_sa(graph)
    if method is Method.IBA:
        return fit_iba(graph, condition)
    return fit_cwc(graph, condition)


def apply_condition_shift(
    v: np.ndarray,
    b: np.ndarray,
    from_condition: DegeneracyCondition | None,
    to_condition: DegeneracyCondition,
    agg: GraphAggregates,
) -> tuple[np.ndarray, np.ndarray]:
    """Re-express a fit under a different degeneracy-breaking condition.

    Adds a constant k to every value and subtracts it from every bias;
    nothing else changes (in particular the residual is untouched).
    """
    del from_condition  # the target alone determines the shift
    if to_condition.kind is ConditionKind.ZERO_MEAN_BIAS:
        k = float(np.mean(b))
    elif to_condition.kind is ConditionKind.CONFIDENCE_WEIGHTED_ZERO_BIAS:
        k = float(agg.C_ass @ b / agg.C_total)
    else:
        k = float(
            (agg.C_total * to_condition.v_ref - agg.C_obj @ v + agg.C_ass @ b)
            / (2.0 * agg.C_total)
        )
    return v + k, b - k


def estimate_noise_scale(
    result: CalibrationResult, graph: AssessmentGraph
) -> tuple[float, float]:
    """Best-fit scale of the noise variance from the residual.

    Returns (R/N, R/(N-2)): the maximum-likelihood value and the posterior
    peak under a scale-invariant prior on the variance.
    """
    if result.method is Method.SA:
        raise DataError("noise-scale estimation applies to the two-way fits only")
    n = graph.n_assessments
    if n <= 2:
        raise InsufficientDataError(
            f"need more than 2 assessments to estimate the noise scale, have {n}"
        )
    return result.residual / n, result.residual / (n - 2)

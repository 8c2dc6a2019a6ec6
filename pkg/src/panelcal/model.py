"""Domain model: assessments, the assessor-object graph, and its aggregates.

A panel produces one record per (assessor, object) pair: a score plus a
positive confidence (precision, i.e. inverse variance of the score). The
records form a weighted bipartite graph; everything downstream (fitting,
robustness, evidence) is driven by per-object and per-assessor confidence
sums computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import DataError

DEFAULT_LAMBDA = 1.75

_REL_TOL_CONF = 1e-12


def confidence_from_uncertainty(sigma: float) -> float:
    """Convert a declared score uncertainty into a confidence (precision).

    The confidence is 1/sigma**2, so a score declared accurate to +-5
    points carries confidence 0.04.
    """
    if not math.isfinite(sigma) or sigma <= 0:
        raise DataError(f"uncertainty must be a positive finite number, got {sigma!r}")
    return 1.0 / (sigma * sigma)


class Level(Enum):
    """Qualitative confidence band."""

    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


@dataclass(frozen=True)
class ConfidenceLevel:
    """A qualitative confidence rating plus the scale ratio used to quantify it.

    ``lam`` is the ratio of uncertainties between adjacent bands (low to
    medium, and medium to high); it must exceed 1.
    """

    level: Level
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self) -> None:
        if not math.isfinite(self.lam) or self.lam <= 1.0:
            raise DataError(f"scale ratio must be > 1, got {self.lam!r}")


def confidence_from_level(level: ConfidenceLevel) -> float:
    """Map a qualitative rating to a numeric confidence.

    High maps to lam**2, medium to 1, low to lam**-2, so switching bands
    scales the implied uncertainty by lam.
    """
    lam = level.lam
    if level.level is Level.HIGH:
        return lam * lam
    if level.level is Level.MEDIUM:
        return 1.0
    return 1.0 / (lam * lam)


@dataclass(frozen=True)
class Assessment:
    """One edge of the assessment graph: assessor scored object.

    ``confidence`` is the precision of the score. If the assessor declared
    an explicit uncertainty, it is kept alongside and must be consistent
    with the confidence (confidence == 1/uncertainty**2).
    """

    assessor: str
    object: str
    score: float
    confidence: float
    declared_uncertainty: float | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise DataError(f"score must be finite, got {self.score!r}")
        if not math.isfinite(self.confidence) or self.confidence <= 0:
            raise DataError(
                f"confidence must be a positive finite number, got {self.confidence!r}"
            )
        if self.declared_uncertainty is not None:
            expected = confidence_from_uncertainty(self.declared_uncertainty)
            if abs(self.confidence - expected) > _REL_TOL_CONF * expected:
                raise DataError(
                    f"confidence {self.confidence} inconsistent with declared "
                    f"uncertainty {self.declared_uncertainty} (expected {expected})"
                )


@dataclass(frozen=True)
class AssessmentGraph:
    """The full edge set of a panel, with fixed assessor/object orderings.

    Orderings are first-appearance order in the input and never change;
    every vector and matrix in the package indexes against them.
    """

    assessments: tuple[Assessment, ...]
    assessors: tuple[str, ...]
    objects: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.assessments:
            raise DataError("assessment graph is empty")
        a_set = set(self.assessors)
        o_set = set(self.objects)
        if len(a_set) != len(self.assessors) or len(o_set) != len(self.objects):
            raise DataError("assessor/object lists contain repeats")
        seen: set[tuple[str, str]] = set()
        used_a: set[str] = set()
        used_o: set[str] = set()
        for asmt in self.assessments:
            key = (asmt.assessor, asmt.object)
            if key in seen:
                raise DataError(
                    f"duplicate assessment for pair {key}; one score per pair"
                )
            seen.add(key)
            if asmt.assessor not in a_set:
                raise DataError(f"assessment references unlisted assessor {asmt.assessor!r}")
            if asmt.object not in o_set:
                raise DataError(f"assessment references unlisted object {asmt.object!r}")
            used_a.add(asmt.assessor)
            used_o.add(asmt.object)
        if used_a != a_set:
            raise DataError(f"assessors with no assessments: {sorted(a_set - used_a)}")
        if used_o != o_set:
            raise DataError(f"objects with no assessments: {sorted(o_set - used_o)}")

    @classmethod
    def from_assessments(cls, assessments) -> "AssessmentGraph":
        """Build a graph, deriving orderings from first appearance."""
        assessments = tuple(assessments)
        assessors: list[str] = []
        objects: list[str] = []
        seen_a: set[str] = set()
        seen_o: set[str] = set()
        for asmt in assessments:
            if asmt.assessor not in seen_a:
                seen_a.add(asmt.assessor)
                assessors.append(asmt.assessor)
            if asmt.object not in seen_o:
                seen_o.add(asmt.object)
                objects.append(asmt.object)
        return cls(assessments, tuple(assessors), tuple(objects))

    @property
    def n_assessments(self) -> int:
        return len(self.assessments)

    @property
    def n_assessors(self) -> int:
        return len(self.assessors)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @cached_property
    def assessor_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.assessors)}

    @cached_property
    def object_index(self) -> dict[str, int]:
        return {o: i for i, o in enumerate(self.objects)}

    @cached_property
    def edge_assessors(self) -> np.ndarray:
        """Assessor index of each assessment, in assessment order."""
        idx = self.assessor_index
        return np.array([idx[a.assessor] for a in self.assessments], dtype=np.intp)

    @cached_property
    def edge_objects(self) -> np.ndarray:
        """Object index of each assessment, in assessment order."""
        idx = self.object_index
        return np.array([idx[a.object] for a in self.assessments], dtype=np.intp)

    @cached_property
    def scores(self) -> np.ndarray:
        return np.array([a.score for a in self.assessments], dtype=float)

    @cached_property
    def confidences(self) -> np.ndarray:
        return np.array([a.confidence for a in self.assessments], dtype=float)

    def confidence_matrix(self) -> np.ndarray:
        """Dense N_A x N_O matrix of confidences (zero where no assessment)."""
        c = np.zeros((self.n_assessors, self.n_objects))
        c[self.edge_assessors, self.edge_objects] = self.confidences
        return c

    def unit_confidences(self) -> "AssessmentGraph":
        """Copy of the graph with every confidence set to 1."""
        return AssessmentGraph(
            tuple(
                Assessment(a.assessor, a.object, a.score, 1.0)
                for a in self.assessments
            ),
            self.assessors,
            self.objects,
        )

    def scaled_confidences(self, factor: float) -> "AssessmentGraph":
        """Copy with every confidence multiplied by ``factor``."""
        if not math.isfinite(factor) or factor <= 0:
            raise DataError(f"scale factor must be positive, got {factor!r}")
        return AssessmentGraph(
            tuple(
                Assessment(a.assessor, a.object, a.score, a.confidence * factor)
                for a in self.assessments
            ),
            self.assessors,
            self.objects,
        )


@dataclass(frozen=True)
class GraphAggregates:
    """Confidence-weighted sums over the edge set.

    ``V``/``B`` are per-object/per-assessor weighted total scores, ``C_obj``
    and ``C_ass`` the corresponding total confidences, ``C_total`` their
    common grand total, and ``s_bar`` the weighted average score.
    """

    V: np.ndarray
    B: np.ndarray
    C_obj: np.ndarray
    C_ass: np.ndarray
    C_total: float
    s_bar: float


def aggregates(graph: AssessmentGraph) -> GraphAggregates:
    """Compute all per-object/per-assessor weighted sums in one pass."""
    c = graph.confidences
    s = graph.scores
    cs = c * s
    V = np.zeros(graph.n_objects)
    B = np.zeros(graph.n_assessors)
    C_obj = np.zeros(graph.n_objects)
    C_ass = np.zeros(graph.n_assessors)
    np.add.at(V, graph.edge_objects, cs)
    np.add.at(B, graph.edge_assessors, cs)
    np.add.at(C_obj, graph.edge_objects, c)
    np.add.at(C_ass, graph.edge_assessors, c)
    C_total = float(c.sum())
    return GraphAggregates(
        V=V,
        B=B,
        C_obj=C_obj,
        C_ass=C_ass,
        C_total=C_total,
        s_bar=float(cs.sum() / C_total),
    )


@dataclass(frozen=True)
class GraphComponent:
    """One connected component: its assessors and objects, in graph order."""

    assessors: tuple[str, ...]
    objects: tuple[str, ...]


def connected_components(graph: AssessmentGraph) -> list[GraphComponent]:
    """Partition assessors and objects by assessment-graph connectivity.

    Components are returned in order of their first assessor/object
    appearance; the result is independent of the order of the assessment
    list itself.
    """
    n_a = graph.n_assessors
    n = n_a + graph.n_objects
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ai, oi in zip(graph.edge_assessors, graph.edge_objects):
        ra, ro = find(int(ai)), find(int(oi) + n_a)
        if ra != ro:
            parent[max(ra, ro)] = min(ra, ro)

    groups: dict[int, tuple[list[str], list[str]]] = {}
    order: list[int] = []
    for i in range(n):
        root = find(i)
        if root not in groups:
            groups[root] = ([], [])
            order.append(root)
        if i < n_a:
            groups[root][0].append(graph.assessors[i])
        else:
            groups[root][1].append(graph.objects[i - n_a])
    return [
        GraphComponent(tuple(groups[r][0]), tuple(groups[r][1])) for r in order
    ]


def is_connected(graph: AssessmentGraph) -> bool:
    return len(connected_components(graph)) == 1


# ---------------------------------------------------------------------------
# Bounded-scale transforms
# ---------------------------------------------------------------------------
#
# Panels often score on a fixed range [A, B]. An additive bias model cannot
# respect such endpoints, so scores may be mapped from a slightly larger
# open interval (a, b) onto the whole real line, fitted there, and mapped
# back. Confidences transform with the inverse square of the derivative.


class TransformVariant(Enum):
    RATIONAL = "rational"
    LOG = "log"


def _check_open_interval(score: float, a: float, b: float) -> None:
    if not (a < b):
        raise DataError(f"invalid interval: a={a!r} must be < b={b!r}")
    if not (a < score < b):
        raise DataError(
            f"score {score!r} is not strictly inside ({a}, {b}); widen the "
            f"interval so no score sits on a bound"
        )


def transform_bounded_to_real(
    score: float, a: float, b: float, variant: TransformVariant
) -> float:
    """Map a score in the open interval (a, b) onto the real line.

    The rational variant (x - (a+b)/2) / ((b-x)(x-a)) is strictly
    increasing; the log variant log((b-x)/(x-a)) is strictly decreasing.
    """
    _check_open_interval(score, a, b)
    if variant is TransformVariant.RATIONAL:
        return (score - 0.5 * (a + b)) / ((b - score) * (score - a))
    return math.log((b - score) / (score - a))


def transform_derivative(
    score: float, a: float, b: float, variant: TransformVariant
) -> float:
    """Derivative of the selected transform at ``score``."""
    _check_open_interval(score, a, b)
    d = (b - score) * (score - a)
    if variant is TransformVariant.RATIONAL:
        u = score - 0.5 * (a + b)
        return (d + 2.0 * u * u) / (d * d)
    return -(b - a) / d


def transform_confidence(
    confidence: float,
    score: float,
    a: float,
    b: float,
    variant: TransformVariant,
) -> float:
    """Confidence of the transformed score: c / T'(score)**2."""
    if not math.isfinite(confidence) or confidence <= 0:
        raise DataError(f"confidence must be positive, got {confidence!r}")
    deriv = transform_derivative(score, a, b, variant)
    return confidence / (deriv * deriv)


def transform_real_to_bounded(
    value: float, a: float, b: float, variant: TransformVariant
) -> float:
    """Inverse of :func:`transform_bounded_to_real`.

    For the rational variant this selects the quadratic root inside (a, b);
    monotonicity guarantees exactly one exists.
    """
    if not (a < b):
        raise DataError(f"invalid interval: a={a!r} must be < b={b!r}")
    if variant is TransformVariant.LOG:
        # y = log((b-x)/(x-a))  =>  x = (b + a e^y) / (1 + e^y)
        if value >= 0:
            e = math.exp(-value)
            return (b * e + a) / (e + 1.0)
        e = math.exp(value)
        return (b + a * e) / (1.0 + e)
    # Rational: y (b-x)(x-a) = x - (a+b)/2, a quadratic in x.
    m = 0.5 * (a + b)
    if value == 0.0:
        return m
    # y x^2 - (y(a+b) - 1) x + (y a b - m) = 0
    qa = value
    qb = -(value * (a + b) - 1.0)
    qc = value * a * b - m
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        raise DataError(f"no real preimage for {value!r} on ({a}, {b})")
    sq = math.sqrt(disc)
    # Numerically stable pair of roots.
    q = -0.5 * (qb + math.copysign(sq, qb))
    roots = [q / qa]
    if q != 0.0:
        roots.append(qc / q)
    inside = [x for x in roots if a < x < b]
    if not inside:
        raise DataError(f"no preimage of {value!r} inside ({a}, {b})")
    return inside[0]

import numpy as np
import pytest

from panelcal import Assessment, AssessmentGraph


def graph_from_pairs(pairs, scores=None, confidences=None):
    """Build a graph from (assessor_idx, object_idx) pairs with optional data."""
    n = len(pairs)
    scores = [50.0] * n if scores is None else scores
    confidences = [1.0] * n if confidences is None else confidences
    return AssessmentGraph.from_assessments(
        Assessment(f"a{a + 1}", f"o{o + 1}", float(s), float(c))
        for (a, o), s, c in zip(pairs, scores, confidences)
    )


def _paired_topology(assessor_pairs):
    """One object per listed assessor pair."""
    pairs = []
    for o, (a1, a2) in enumerate(assessor_pairs):
        pairs.append((a1, o))
        pairs.append((a2, o))
    return pairs


# Three reference panel layouts (4 assessors, 6 objects, 2 assessors per
# object, 3 objects per assessor): fully connected, moderately connected,
# and disconnected. With unit confidences their spectral gaps are
# 1 - sqrt(1/3), 1 - sqrt(2/3), and 0.
FIG_A_PAIRS = _paired_topology([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
FIG_B_PAIRS = _paired_topology([(0, 1), (0, 1), (1, 2), (2, 3), (2, 3), (3, 0)])
FIG_C_PAIRS = _paired_topology([(0, 1), (0, 1), (0, 1), (2, 3), (2, 3), (2, 3)])


@pytest.fixture
def fig_a():
    return graph_from_pairs(FIG_A_PAIRS)


@pytest.fixture
def fig_b():
    return graph_from_pairs(FIG_B_PAIRS)


@pytest.fixture
def fig_c():
    return graph_from_pairs(FIG_C_PAIRS)


@pytest.fixture
def two_by_two():
    """Exactly consistent 2x2 panel: v = (12, 22), b = (-2, 2), residual 0."""
    return AssessmentGraph.from_assessments(
        [
            Assessment("a1", "o1", 10.0, 1.0),
            Assessment("a1", "o2", 20.0, 1.0),
            Assessment("a2", "o1", 14.0, 1.0),
            Assessment("a2", "o2", 24.0, 1.0),
        ]
    )


def random_connected_graph(
    rng: np.random.Generator,
    n_assessors: int,
    n_objects: int,
    conf_range=(0.04, 4.0),
    score_range=(0.0, 100.0),
    density=0.6,
) -> AssessmentGraph:
    """Random connected instance with random confidences and scores.

    A spanning structure (object i linked to assessor i mod N_A) keeps the
    graph connected; extra edges are added independently with the given
    density.
    """
    edges = set()
    for o in range(n_objects):
        edges.add((o % n_assessors, o))
    # link assessors through shared objects so the assessor side is connected
    for a in range(1, n_assessors):
        edges.add((a, (a - 1) % n_objects))
    for a in range(n_assessors):
        for o in range(n_objects):
            if (a, o) not in edges and rng.random() < density:
                edges.add((a, o))
    edges = sorted(edges)
    scores = rng.uniform(*score_range, size=len(edges))
    confs = rng.uniform(*conf_range, size=len(edges))
    return graph_from_pairs(edges, scores, confs)

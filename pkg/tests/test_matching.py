import itertools
import math

import numpy as np
import pytest

from duoreid.clustering import NOISE
from duoreid.matching import (PAD_COST, Matching, assignment_cost,
                              cost_matrix, linear_assignment, match_clusters,
                              relabel)


def brute_force_assignment(cost):
    """Minimum-cost perfect matching by full permutation enumeration."""
    n = cost.shape[0]
    best_cost = math.inf
    best = None
    for perm in itertools.permutations(range(n)):
        c = sum(cost[i, perm[i]] for i in range(n))
        if c < best_cost:
            best_cost = c
            best = perm
    return best, best_cost


def test_cost_matrix_landmark_values():
    p = np.array([[1.0, 0.0]])
    q = np.array([[2.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    s = cost_matrix(p, q)
    assert s[0, 0] == pytest.approx(1.0, abs=1e-15)          # aligned
    assert s[0, 1] == pytest.approx(math.e, abs=1e-12)       # orthogonal
    assert s[0, 2] == pytest.approx(math.e ** 2, abs=1e-12)  # opposite
    assert PAD_COST > math.exp(2.0)  # padding can never displace a real pair


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(13)
    for _ in range(200):
        n = int(rng.integers(1, 8))
        cost = rng.uniform(0.0, 5.0, size=(n, n))
        pairs = linear_assignment(cost)
        assert sorted(i for i, _ in pairs) == list(range(n))
        assert sorted(j for _, j in pairs) == list(range(n))
        _, want = brute_force_assignment(cost)
        assert assignment_cost(cost, pairs) == pytest.approx(want, abs=1e-9)


def test_assignment_degenerate_ties_identity():
    pairs = linear_assignment(np.ones((4, 4)))
    assert pairs == [(0, 0), (1, 1), (2, 2), (3, 3)]


def test_assignment_input_checks():
    with pytest.raises(ValueError, match="square"):
        linear_assignment(np.ones((2, 3)))
    with pytest.raises(ValueError, match="square"):
        linear_assignment(np.ones((0, 0)))
    with pytest.raises(ValueError, match="non-finite"):
        linear_assignment(np.array([[1.0, np.inf], [1.0, 1.0]]))


def test_match_square_hand_trace():
    p = np.array([[1.0, 0.0], [0.0, 1.0]])
    q = np.array([[0.0, 2.0], [5.0, 0.0]])  # q is p swapped (and scaled)
    m = match_clusters(p, q)
    assert m.pairs == [(0, 1), (1, 0)]
    assert m.rounds == [1, 1]
    assert m.n_p == 2 and m.n_q == 2
    assert all(c == pytest.approx(1.0, abs=1e-12) for c in m.costs)


def test_match_rectangular_covers_both_sides():
    # three P clusters, two Q clusters: round 1 pairs two of them, round 2
    # attaches the leftover P cluster to its cheapest Q partner
    p = np.array([[1.0, 0.0], [0.0, 1.0], [0.9, 0.1]])
    q = np.array([[1.0, 0.05], [0.0, 1.0]])
    m = match_clusters(p, q)
    m.validate()
    assert m.n_p == 3 and m.n_q == 2
    assert m.rounds.count(1) == 2
    assert m.rounds.count(2) == 1
    covered_p = {i for i, _ in m.pairs}
    covered_q = {j for _, j in m.pairs}
    assert covered_p == {0, 1, 2} and covered_q == {0, 1}
    # the round-2 pair picks the row-wise cheapest target
    k = m.rounds.index(2)
    i, j = m.pairs[k]
    s = cost_matrix(p, q)
    assert j == int(np.argmin(s[i]))
    # and the larger side maps uniquely overall
    assert len(covered_p) == len(m.pairs)


def test_match_rectangular_other_orientation():
    p = np.array([[1.0, 0.0]])
    q = np.array([[1.0, 0.1], [0.0, 1.0], [-1.0, 0.0]])
    m = match_clusters(p, q)
    m.validate()
    assert m.rounds.count(1) == 1
    assert m.rounds.count(2) == 2
    assert {j for _, j in m.pairs} == {0, 1, 2}
    assert all(i == 0 for i, _ in m.pairs)  # many-to-one onto the single P


def test_source_map_round1_precedence():
    m = Matching(pairs=[(0, 0), (1, 0)], rounds=[1, 2], costs=[1.0, 1.5],
                 n_p=2, n_q=1)
    assert m.source_map("Q") == {0: 0}      # round-1 partner wins
    assert m.source_map("P") == {0: 0, 1: 0}
    with pytest.raises(ValueError, match="source"):
        m.source_map("X")


def test_relabel_both_directions():
    m = Matching(pairs=[(0, 1), (1, 0), (2, 0)], rounds=[1, 1, 2],
                 costs=[1.0, 1.0, 2.0], n_p=3, n_q=2)
    m.validate()
    p_labels = np.array([0, 2, 1, NOISE])
    assert list(relabel(p_labels, m, source="P")) == [1, 0, 0, NOISE]
    q_labels = np.array([1, 0, NOISE])
    assert list(relabel(q_labels, m, source="Q")) == [0, 1, NOISE]


def test_relabel_uncovered_label_is_an_error():
    m = Matching(pairs=[(0, 0)], rounds=[1], costs=[1.0], n_p=1, n_q=1)
    with pytest.raises(ValueError, match="label 2 at position 1"):
        relabel(np.array([0, 2]), m, source="P")


def test_matching_validation_errors():
    with pytest.raises(ValueError, match="round-1 size"):
        Matching(pairs=[], rounds=[], costs=[], n_p=1, n_q=1).validate()
    with pytest.raises(ValueError, match="one-to-one"):
        Matching(pairs=[(0, 0), (1, 0)], rounds=[1, 1], costs=[1, 1],
                 n_p=2, n_q=2).validate()
    with pytest.raises(ValueError, match="cover"):
        Matching(pairs=[(0, 0)], rounds=[1], costs=[1.0],
                 n_p=1, n_q=2).validate()


def test_match_padded_equals_bruteforce_on_rectangles():
    # the round-1 core of a padded rectangular problem must equal the best
    # injective placement of the smaller side, found by enumeration
    rng = np.random.default_rng(23)
    for _ in range(50):
        n_p = int(rng.integers(1, 6))
        n_q = int(rng.integers(1, 6))
        p = rng.normal(size=(n_p, 3))
        q = rng.normal(size=(n_q, 3))
        s = cost_matrix(p, q)
        m = match_clusters(p, q)
        core = [(i, j) for (i, j), r in zip(m.pairs, m.rounds) if r == 1]
        got = sum(s[i, j] for i, j in core)
        if n_p <= n_q:
            best = min(sum(s[i, perm[i]] for i in range(n_p))
                       for perm in itertools.permutations(range(n_q), n_p))
        else:
            best = min(sum(s[perm[j], j] for j in range(n_q))
                       for perm in itertools.permutations(range(n_p), n_q))
        assert got == pytest.approx(best, abs=1e-9)

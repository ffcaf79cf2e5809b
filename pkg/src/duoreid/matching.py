"""Cluster correspondence across modalities and across models.

Two cluster sets are aligned by solving a minimum-cost one-to-one assignment
over an exponential cosine cost, then greedily completing the larger side so
every cluster on both sides ends up matched. Label arrays are translated
between index spaces through the resulting Matching.
"""

from dataclasses import dataclass, field

import numpy as np

from .clustering import NOISE, l2_normalize

# Rectangular problems are padded to square with this cost. It exceeds the
# largest possible real entry exp(2), so padding never displaces a real pair.
PAD_COST = 10.0


def cost_matrix(centers_p, centers_q):
    """S[i, j] = exp(1 - cos(c_i, c_j)); entries lie in [1, e^2]."""
    p = l2_normalize(centers_p, what="source center")
    q = l2_normalize(centers_q, what="target center")
    cos = np.clip(p @ q.T, -1.0, 1.0)
    return np.exp(1.0 - cos)


def linear_assignment(cost):
    """Exact minimum-cost perfect matching on a square cost matrix.

    Shortest augmenting path with potentials, O(n^3). Deterministic: rows are
    inserted in ascending order and equal-slack candidates resolve toward the
    lowest column index, so degenerate (all-equal) inputs come out as the
    identity pairing. Returns [(row, col), ...] sorted by row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] == 0:
        raise ValueError("cost must be a non-empty square matrix, got shape %s"
                         % (cost.shape,))
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix holds non-finite entries")
    n = cost.shape[0]
    u = np.zeros(n)               # row potentials
    v = np.zeros(n + 1)           # column potentials, index n is the virtual root
    row_of = np.full(n + 1, -1, dtype=np.int64)
    way = np.zeros(n, dtype=np.int64)
    for i in range(n):
        row_of[n] = i
        j0 = n
        minv = np.full(n, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            slack = cost[i0] - u[i0] - v[:n]
            improve = (~used[:n]) & (slack < minv)
            way[improve] = j0
            minv[improve] = slack[improve]
            open_slack = np.where(used[:n], np.inf, minv)
            j1 = int(np.argmin(open_slack))   # first minimum = lowest column
            delta = open_slack[j1]
            used_cols = np.flatnonzero(used)
            u[row_of[used_cols]] += delta
            v[used_cols] -= delta
            minv[~used[:n]] -= delta
            j0 = j1
            if row_of[j0] == -1:
                break
        while j0 != n:                        # flip matches along the path
            j_prev = way[j0]
            row_of[j0] = row_of[j_prev]
            j0 = j_prev
    col_of = np.empty(n, dtype=np.int64)
    col_of[row_of[:n]] = np.arange(n)
    return [(i, int(col_of[i])) for i in range(n)]


def assignment_cost(cost, pairs):
    return float(sum(cost[i, j] for i, j in pairs))


@dataclass
class Matching:
    """Correspondence between a P-side and a Q-side cluster set.

    pairs[k] = (p_id, q_id); rounds[k] = 1 for the optimal one-to-one core,
    2 for the greedy completion of the larger side; costs[k] = S[p_id, q_id].
    """

    pairs: list
    rounds: list
    costs: list
    n_p: int
    n_q: int
    extras: dict = field(default_factory=dict)

    def validate(self):
        r1 = [(i, j) for (i, j), r in zip(self.pairs, self.rounds) if r == 1]
        if len(r1) != min(self.n_p, self.n_q):
            raise ValueError("round-1 size %d != min side %d"
                             % (len(r1), min(self.n_p, self.n_q)))
        if len({i for i, _ in r1}) != len(r1) or len({j for _, j in r1}) != len(r1):
            raise ValueError("round-1 pairs are not one-to-one")
        covered_p = {i for i, _ in self.pairs}
        covered_q = {j for _, j in self.pairs}
        if covered_p != set(range(self.n_p)) or covered_q != set(range(self.n_q)):
            raise ValueError("matching does not cover every cluster on both sides")

    def source_map(self, source):
        """Canonical target id per source id; round-1 pairs take precedence."""
        if source not in ("P", "Q"):
            raise ValueError("source must be 'P' or 'Q', got %r" % (source,))
        mapping = {}
        order = sorted(range(len(self.pairs)), key=lambda k: self.rounds[k])
        for k in order:
            i, j = self.pairs[k]
            src, tgt = (i, j) if source == "P" else (j, i)
            if src not in mapping:
                mapping[src] = tgt
        return mapping


def match_clusters(centers_p, centers_q):
    """Align two cluster-center sets; every cluster on both sides is covered.

    Round 1 solves the exact assignment (rectangular inputs are padded square
    with PAD_COST and the padding discarded), pairing all of the smaller side.
    Round 2 gives every still-unmatched cluster of the larger side its
    cheapest partner anywhere on the smaller side, many-to-one allowed.
    """
    s = cost_matrix(centers_p, centers_q)
    n_p, n_q = s.shape
    n = max(n_p, n_q)
    if n_p == n_q:
        padded = s
    else:
        padded = np.full((n, n), PAD_COST)
        padded[:n_p, :n_q] = s
    core = [(i, j) for i, j in linear_assignment(padded) if i < n_p and j < n_q]
    pairs = list(core)
    rounds = [1] * len(core)
    if n_p > n_q:
        matched_p = {i for i, _ in core}
        for i in range(n_p):
            if i not in matched_p:
                pairs.append((i, int(np.argmin(s[i]))))
                rounds.append(2)
    elif n_q > n_p:
        matched_q = {j for _, j in core}
        for j in range(n_q):
            if j not in matched_q:
                pairs.append((int(np.argmin(s[:, j])), j))
                rounds.append(2)
    costs = [float(s[i, j]) for i, j in pairs]
    matching = Matching(pairs, rounds, costs, n_p, n_q)
    matching.validate()
    return matching


def relabel(labels, matching, source="P"):
    """Translate a label array from one side's index space to the other's.

    source names the space the incoming labels live in ('P' or 'Q'); each
    label is replaced by its canonical matched counterpart. NOISE passes
    through untouched; any other uncovered label is an error.
    """
    labels = np.asarray(labels, dtype=np.int64)
    mapping = matching.source_map(source)
    out = np.full_like(labels, NOISE)
    for idx, lab in enumerate(labels.flat):
        lab = int(lab)
        if lab == NOISE:
            continue
        if lab not in mapping:
            raise ValueError("label %d at position %d has no match on the %s side"
                             % (lab, idx, source))
        out.flat[idx] = mapping[lab]
    return out

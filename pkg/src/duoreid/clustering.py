"""Deterministic density clustering over cosine distance.

The clustering contract is deliberately order-free so results can be checked
against a naive reference: clusters are the connected components of the
core-point graph (points whose eps-neighborhood holds at least min_pts
points), numbered by their lowest core-point index; a border point joins the
cluster of its lowest-index core neighbor; everything else is noise.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

NOISE = -1


@dataclass
class DbscanConfig:
    """eps is a cosine-distance radius (1 - cosine similarity), inclusive."""

    eps: float = 0.6
    min_pts: int = 4

    def validate(self):
        if not 0.0 < self.eps < 2.0:
            raise ValueError("eps must lie in (0, 2), got %r" % self.eps)
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1, got %r" % self.min_pts)


@dataclass
class ClusterAssignment:
    """labels[i] in [0, cluster_count) or NOISE (-1)."""

    labels: np.ndarray
    cluster_count: int

    def validate(self):
        labels = np.asarray(self.labels)
        if labels.size and labels.min() < NOISE:
            raise ValueError("labels below the noise sentinel")
        if self.cluster_count < 0:
            raise ValueError("negative cluster_count")
        if labels.size and labels.max() >= self.cluster_count:
            raise ValueError("label %d outside [0, %d)"
                             % (labels.max(), self.cluster_count))
        present = set(labels[labels >= 0].tolist())
        if present != set(range(self.cluster_count)):
            raise ValueError("cluster ids are not contiguous from 0")


def l2_normalize(features, what="feature"):
    """Rows scaled to unit norm; a zero-norm row is an error naming the row."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise ValueError("zero-norm %s row %d cannot be normalized"
                         % (what, int(bad[0])))
    return features / norms[:, None]


def cosine_distances(features):
    """Pairwise 1 - cosine similarity, clipped into [0, 2]."""
    x = l2_normalize(features)
    d = 1.0 - x @ x.T
    np.clip(d, 0.0, 2.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def dbscan(features, config, scan_order=None):
    """Density clustering; returns a ClusterAssignment.

    The partition (which rows cluster together, which are noise) depends only
    on the distance matrix. Cluster ids are a scan artifact: clusters are
    numbered by first encounter along scan_order (default: natural row
    order), so two runs over different orders agree up to a relabeling. Ids
    therefore carry no meaning outside the run that produced them. Border
    points attach to their lowest-index core neighbor regardless of order.
    """
    config.validate()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("features must be a non-empty (N, D) array")
    n = features.shape[0]
    if scan_order is None:
        scan_order = range(n)
    else:
        scan_order = np.asarray(scan_order, dtype=np.int64)
        if sorted(scan_order.tolist()) != list(range(n)):
            raise ValueError("scan_order must be a permutation of range(%d)" % n)
    dist = cosine_distances(features)
    within = dist <= config.eps
    neighbor_counts = within.sum(axis=1)  # includes the point itself
    core = neighbor_counts >= config.min_pts

    labels = np.full(n, NOISE, dtype=np.int64)
    k = 0
    for seed in scan_order:
        if not core[seed] or labels[seed] != NOISE:
            continue
        # flood the core graph from this seed
        labels[seed] = k
        queue = deque([seed])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(within[i]):
                if core[j] and labels[j] == NOISE:
                    labels[j] = k
                    queue.append(j)
        k += 1
    # border points: lowest-index core neighbor decides the cluster
    for i in range(n):
        if core[i]:
            continue
        core_neighbors = np.flatnonzero(within[i] & core)
        if core_neighbors.size:
            labels[i] = labels[core_neighbors[0]]
    assignment = ClusterAssignment(labels, k)
    assignment.validate()
    return assignment


def cluster_centers(features, assignment):
    """(K, D) matrix of per-cluster feature means; noise is excluded.

    Raises if the assignment holds no clusters at all.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(assignment.labels)
    if len(labels) != len(features):
        raise ValueError("assignment covers %d samples, features hold %d"
                         % (len(labels), len(features)))
    k = assignment.cluster_count
    if k == 0:
        raise ValueError("no clusters to take centers of (all points are noise)")
    centers = np.zeros((k, features.shape[1]))
    for j in range(k):
        members = labels == j
        centers[j] = features[members].mean(axis=0)
    return centers

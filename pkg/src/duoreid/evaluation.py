"""Retrieval evaluation: CMC rank-k, mean average precision, mean inverse
negative penalty.

Queries of one modality are ranked against the gallery of the other by
cosine similarity, ties broken by ascending gallery index so results are
reproducible. Ground-truth identities are read here and nowhere else in the
training stack.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import l2_normalize
from .data import MODALITIES
from .encoders import encoder_forward

logger = logging.getLogger(__name__)


@dataclass
class Ranking:
    """One query's gallery ordering; `relevant` is aligned with `order`."""

    query_index: int
    order: np.ndarray
    relevant: np.ndarray


def build_rankings(query_feats, query_ids, gallery_feats, gallery_ids):
    """Cosine-ranked gallery orderings for every query.

    Strictly descending similarity; exact ties resolve to the lower gallery
    index. Features need not be pre-normalized.
    """
    q = l2_normalize(query_feats, what="query feature")
    g = l2_normalize(gallery_feats, what="gallery feature")
    query_ids = np.asarray(query_ids)
    gallery_ids = np.asarray(gallery_ids)
    if len(q) != len(query_ids) or len(g) != len(gallery_ids):
        raise ValueError("feature/identity lengths disagree")
    sims = q @ g.T
    gallery_index = np.arange(len(g))
    rankings = []
    for qi in range(len(q)):
        order = np.lexsort((gallery_index, -sims[qi]))
        relevant = gallery_ids[order] == query_ids[qi]
        rankings.append(Ranking(qi, order, relevant))
    return rankings


def _scored(rankings):
    """Rankings with at least one relevant item; warn about the rest."""
    keep = [r for r in rankings if r.relevant.any()]
    dropped = len(rankings) - len(keep)
    if dropped:
        logger.warning("%d queries have no relevant gallery item and are excluded",
                       dropped)
    if not keep:
        raise ValueError("no query has any relevant gallery item")
    return keep


def cmc(rankings, k):
    """Fraction of queries whose top-k gallery slice holds a relevant item."""
    if k < 1:
        raise ValueError("k must be >= 1, got %d" % k)
    keep = _scored(rankings)
    hits = sum(1 for r in keep if r.relevant[:k].any())
    return hits / len(keep)


def map_score(rankings):
    """Mean average precision; AP averages precision at each relevant rank."""
    keep = _scored(rankings)
    aps = []
    for r in keep:
        ranks = np.flatnonzero(r.relevant) + 1  # 1-based ranks of relevants
        precisions = np.arange(1, len(ranks) + 1) / ranks
        aps.append(precisions.mean())
    return float(np.mean(aps))


def minp(rankings):
    """Mean inverse negative penalty: relevant count over last-relevant rank."""
    keep = _scored(rankings)
    vals = []
    for r in keep:
        ranks = np.flatnonzero(r.relevant) + 1
        vals.append(len(ranks) / ranks[-1])
    return float(np.mean(vals))


def joint_feature(params_a, params_b, modality, x):
    """Average of the two models' unit embeddings, 0.5*(f_A + f_B).

    The average itself is returned; retrieval normalizes when it scores
    cosines. With params_b=None (single-model mode) this is just model A's
    embedding.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    f_a = encoder_forward(params_a, modality, x)
    if params_b is None:
        return f_a
    f_b = encoder_forward(params_b, modality, x)
    return 0.5 * (f_a + f_b)


def dataset_features(models, dataset):
    """Joint (or single-model) features for every sample, in dataset order."""
    if not models:
        raise ValueError("need at least one model's encoder params")
    params_a = models[0]
    params_b = models[1] if len(models) > 1 else None
    feats = np.zeros((len(dataset), params_a.embed_dim))
    for modality in MODALITIES:
        x, _, idx = dataset.subset(modality)
        feats[idx] = joint_feature(params_a, params_b, modality, x)
    return feats


def evaluate_retrieval(models, dataset, ks=(1, 10, 20)):
    """Both retrieval directions on one dataset.

    Returns {"I->V": {...}, "V->I": {...}} with rank-k, map and minp per
    direction; "I->V" means infrared queries against a visible gallery (the
    reporting default). ks larger than the gallery are clipped.
    """
    feats = dataset_features(models, dataset)
    metrics = {}
    for query_mod, gallery_mod in (("I", "V"), ("V", "I")):
        q_idx = dataset.indices_of(query_mod)
        g_idx = dataset.indices_of(gallery_mod)
        rankings = build_rankings(feats[q_idx], dataset.identities[q_idx],
                                  feats[g_idx], dataset.identities[g_idx])
        entry = {}
        for k in ks:
            entry["rank%d" % k] = cmc(rankings, min(k, len(g_idx)))
        entry["map"] = map_score(rankings)
        entry["minp"] = minp(rankings)
        metrics["%s->%s" % (query_mod, gallery_mod)] = entry
    return metrics

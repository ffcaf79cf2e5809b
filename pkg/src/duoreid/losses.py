"""Training objectives over memory-bank class probabilities.

Two families share one code path: the cross-entropy form -log p used for
warm-up and diagnostics, and the bounded robust form -p^gamma whose
per-sample exponent gamma comes from the reliability model. Every objective
is a lambda-weighted sum of an intra-modality term (feature scored against
its own modality's bank) and an inter-modality term (scored against the
other modality's bank at the cross-modally matched label).

Probabilities are clamped at CLAMP_FLOOR before logs/powers; clamp events
are counted for diagnostics. Memory centers are treated as constants
(stop-gradient): gradients flow to encoder parameters only.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .clustering import NOISE
from .encoders import (add_modality_grads, backward_from_embedding,
                       forward_with_cache, zeros_like_params)
from .memory import class_probability_matrix

logger = logging.getLogger(__name__)

CLAMP_FLOOR = 1e-12

_clamp_events = 0
_clamp_warned = False


def clamp_count():
    return _clamp_events


def reset_clamp_count():
    global _clamp_events
    _clamp_events = 0


def _clamp(p):
    global _clamp_events, _clamp_warned
    p = np.asarray(p, dtype=np.float64)
    low = p < CLAMP_FLOOR
    hits = int(np.count_nonzero(low))
    if hits:
        _clamp_events += hits
        if not _clamp_warned:
            logger.warning("probability clamped at %g (suppressing further warnings)",
                           CLAMP_FLOOR)
            _clamp_warned = True
    return np.maximum(p, CLAMP_FLOOR)


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=np.float64)
    if np.any(g <= 0.0) or np.any(g > 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    return g


def _check_lambda(lam):
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1], got %r" % lam)
    return float(lam)


def ce_loss(p_intra, p_inter):
    """Warm-up cross-entropy: sum of -log p over both terms and the batch."""
    pi = _clamp(np.atleast_1d(p_intra))
    pe = _clamp(np.atleast_1d(p_inter))
    if pi.shape != pe.shape:
        raise ValueError("p_intra and p_inter lengths disagree")
    return float(-(np.log(pi).sum() + np.log(pe).sum()))


def ra_term(p, gamma):
    """Bounded robust term -p**gamma, elementwise; lies in [-1, 0)."""
    g = _check_gamma(gamma)
    p = _clamp(p)
    out = -np.power(p, g)
    return float(out) if np.isscalar(gamma) and out.ndim == 0 else out


def ra_term_derivative(p, gamma):
    """d(-p^gamma)/dp = -gamma * p^(gamma-1), elementwise.

    At gamma=1 this is exactly -1 for every p in (0, 1]: the robust term
    degenerates to a constant-slope loss in p.
    """
    g = _check_gamma(gamma)
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError("p must lie in (0, 1]")
    out = -g * np.power(p, g - 1.0)
    return float(out) if out.ndim == 0 else out


def per_sample_loss(p_intra, p_inter, gamma, lam):
    """-lam*p_intra^gamma - (1-lam)*p_inter^gamma, elementwise."""
    lam = _check_lambda(lam)
    g = _check_gamma(gamma)
    pi = _clamp(p_intra)
    pe = _clamp(p_inter)
    out = -lam * np.power(pi, g) - (1.0 - lam) * np.power(pe, g)
    return float(out) if out.ndim == 0 else out


def diagnostic_loss(p_intra, p_inter, lam):
    """Gamma-free per-sample loss -lam*log p_intra - (1-lam)*log p_inter (>= 0).

    This is what the reliability model (GMM) consumes.
    """
    lam = _check_lambda(lam)
    pi = _clamp(p_intra)
    pe = _clamp(p_inter)
    return -lam * np.log(pi) - (1.0 - lam) * np.log(pe)


def term_logit_gradient(probs, label, gamma=None):
    """d(term)/d(logits) for one sample given its softmax probabilities.

    gamma=None selects the cross-entropy term -log p[label]; otherwise the
    robust term -p[label]**gamma. The robust gradient equals the CE gradient
    scaled by gamma * p[label]**gamma, so the two directions coincide.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.size:
        raise ValueError("label %d outside [0, %d)" % (label, probs.size))
    base = probs.copy()
    base[label] -= 1.0
    if gamma is None:
        return base
    g = float(_check_gamma(gamma))
    p_y = float(_clamp(probs[label]))
    return g * (p_y ** g) * base


@dataclass
class LossReport:
    """Objective value with its decomposition and per-sample diagnostics.

    total = lam*intra_term + (1-lam)*inter_term within float tolerance.
    per_sample holds the gamma-free diagnostic losses (>= 0), modality V
    block first, then I; per_sample_by_modality carries the same split out.
    """

    total: float
    intra_term: float
    inter_term: float
    per_sample: np.ndarray
    per_sample_by_modality: dict = field(default_factory=dict)


def _other(modality):
    return "I" if modality == "V" else "V"


def _term_batch(probs, labels, gammas, mode):
    """Per-sample term values and logit gradients for one (bank, label) pair.

    Rows with label NOISE contribute zero value and zero gradient. Returns
    (values (n,), logit_grads (n, K), p_at_label with 1.0 placeholders).
    """
    n, k = probs.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError("labels length %d != batch size %d" % (labels.size, n))
    valid = labels != NOISE
    if np.any(labels < NOISE):
        raise ValueError("label below the noise sentinel")
    if valid.any() and labels[valid].max() >= k:
        raise ValueError("label %d >= bank size %d (broken alignment)"
                         % (int(labels[valid].max()), k))
    p_y = np.ones(n)
    p_y[valid] = probs[valid, labels[valid]]
    p_y = _clamp(p_y)
    if mode == "pow":
        g = np.asarray(gammas, dtype=np.float64)
        if g.shape != (n,):
            raise ValueError("gammas length %d != batch size %d" % (g.size, n))
        if valid.any():
            _check_gamma(g[valid])
        powed = np.power(p_y, np.where(valid, g, 1.0))
        values = -powed
        scale = np.where(valid, g, 0.0) * powed
    elif mode == "ce":
        values = -np.log(p_y)
        scale = valid.astype(np.float64)
    else:
        raise ValueError("unknown term mode %r" % (mode,))
    onehot = np.zeros((n, k))
    onehot[valid, labels[valid]] = 1.0
    grads = (probs - onehot) * scale[:, None]
    grads[~valid] = 0.0
    values = np.where(valid, values, 0.0)
    return values, grads, p_y, valid


def _evaluate(embeds_by_mod, banks, labels_by_mod, gammas_by_mod, lam,
              intra_mode, inter_mode):
    """Shared core: per-modality term values, logit grads and probabilities."""
    lam = _check_lambda(lam)
    intra_sum = 0.0
    inter_sum = 0.0
    per_mod = {}
    grad_parts = {}
    for modality in ("V", "I"):
        if modality not in embeds_by_mod:
            continue
        v = embeds_by_mod[modality]
        q = _other(modality)
        probs_own = class_probability_matrix(banks[modality], v)
        probs_oth = class_probability_matrix(banks[q], v)
        intra_labels, inter_labels = labels_by_mod[modality]
        gammas = gammas_by_mod[modality]
        iv, ig, p_i, valid_i = _term_batch(probs_own, intra_labels, gammas,
                                           intra_mode)
        ev, eg, p_e, valid_e = _term_batch(probs_oth, inter_labels, gammas,
                                           inter_mode)
        intra_sum += iv.sum()
        inter_sum += ev.sum()
        diag = -lam * np.log(p_i) - (1.0 - lam) * np.log(p_e)
        per_mod[modality] = diag
        grad_parts[modality] = (ig, eg, probs_own.shape[1], probs_oth.shape[1])
    total = lam * intra_sum + (1.0 - lam) * inter_sum
    blocks = [per_mod[m] for m in ("V", "I") if m in per_mod]
    report = LossReport(float(total), float(intra_sum), float(inter_sum),
                        np.concatenate(blocks) if blocks else np.zeros(0),
                        per_mod)
    return report, grad_parts


def total_loss(embeds_by_mod, banks, labels_by_mod, gammas_by_mod, lam,
               intra_mode="pow", inter_mode="pow"):
    """LossReport for a batch of unit-norm embeddings.

    embeds_by_mod: modality -> (n, L) embeddings; banks: modality -> bank;
    labels_by_mod: modality -> (intra_labels, inter_labels) where intra
    labels index the same modality's bank and inter labels index the other
    modality's bank; NOISE entries are excluded from their term.
    """
    report, _ = _evaluate(embeds_by_mod, banks, labels_by_mod, gammas_by_mod,
                          lam, intra_mode, inter_mode)
    return report


def loss_gradient(raw_by_mod, banks, labels_by_mod, gammas_by_mod, lam,
                  params, intra_mode="pow", inter_mode="pow"):
    """Analytic gradient of the objective w.r.t. encoder parameters.

    raw_by_mod: modality -> (n, D) raw features, pushed through the matching
    modality encoder of `params`. Memory centers are constants. Returns
    (grads, report) with grads shaped exactly like params.
    """
    lam = _check_lambda(lam)
    grads = zeros_like_params(params)
    embeds = {}
    caches = {}
    for modality, x in raw_by_mod.items():
        enc = params.by_modality[modality]
        v, cache = forward_with_cache(enc, x)
        embeds[modality] = v
        caches[modality] = cache
    report, grad_parts = _evaluate(embeds, banks, labels_by_mod, gammas_by_mod,
                                   lam, intra_mode, inter_mode)
    for modality, (ig, eg, _, _) in grad_parts.items():
        q = _other(modality)
        d_v = lam * (ig @ banks[modality].centers) / banks[modality].tau \
            + (1.0 - lam) * (eg @ banks[q].centers) / banks[q].tau
        enc = params.by_modality[modality]
        mod_grads = backward_from_embedding(enc, caches[modality], d_v)
        add_modality_grads(grads, modality, mod_grads)
    return grads, report

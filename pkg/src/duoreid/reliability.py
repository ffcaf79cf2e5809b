"""Sample-reliability modeling from per-sample losses.

A two-component 1-d Gaussian mixture is fitted to the batch of diagnostic
losses (min-max normalized internally); the lower-mean component is read as
the clean population. Each sample's clean posterior w is then sharpened into
a per-sample loss exponent gamma in [gamma_floor, 1]: confidently clean
samples get small exponents (aggressive, CE-like optimization), suspect
samples get exponents near 1 (flat, bounded influence).
"""

from dataclasses import dataclass

import numpy as np

VARIANCE_FLOOR = 1e-6


class DegenerateLossesError(ValueError):
    """All losses identical; the mixture is unidentifiable."""


@dataclass
class RalConfig:
    mu: float = 1.0 / (np.e - 1.0)  # makes w=0 map to gamma exactly 1
    gamma_floor: float = 0.01
    gmm_max_iter: int = 100
    gmm_tol: float = 1e-6

    def validate(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if not 0.0 < self.gamma_floor <= 1.0:
            raise ValueError("gamma_floor must lie in (0, 1]")
        if self.gmm_max_iter < 1:
            raise ValueError("gmm_max_iter must be >= 1")
        if self.gmm_tol <= 0:
            raise ValueError("gmm_tol must be positive")


@dataclass
class GmmParams:
    """Two-component mixture in the original loss scale, means ascending.

    Component 0 (lower mean) is the clean one. loglik is the per-iteration
    log-likelihood trace of the internal normalized-scale EM run.
    """

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    loglik: np.ndarray


def _log_pdf(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def fit_gmm_2(losses, config=None):
    """EM fit of a two-component 1-d GMM to a loss sample.

    Losses are min-max normalized to [0, 1] for the fit (identical values
    raise DegenerateLossesError); means start at the 25th/75th percentiles,
    variances are floored at 1e-6, and iteration stops when the
    log-likelihood moves less than gmm_tol or gmm_max_iter is hit. Reported
    means/variances are mapped back to the original scale.
    """
    config = config or RalConfig()
    config.validate()
    x = np.asarray(losses, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 losses, got %d" % x.size)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite loss values")
    lo, hi = float(x.min()), float(x.max())
    span = hi - lo
    if span <= 0.0:
        raise DegenerateLossesError("all %d losses are identical (%g)"
                                    % (x.size, lo))
    z = (x - lo) / span
    q25, q75 = np.percentile(z, [25.0, 75.0])
    if q75 - q25 < 1e-12:
        q25, q75 = 0.0, 1.0
    means = np.array([q25, q75])
    variances = np.full(2, max(float(z.var()), VARIANCE_FLOOR))
    weights = np.array([0.5, 0.5])

    trace = []
    for _ in range(config.gmm_max_iter):
        # E-step in the log domain
        log_joint = np.stack([np.log(weights[k]) + _log_pdf(z, means[k], variances[k])
                              for k in range(2)], axis=1)
        log_norm = np.logaddexp(log_joint[:, 0], log_joint[:, 1])
        trace.append(float(log_norm.sum()))
        resp = np.exp(log_joint - log_norm[:, None])
        # M-step
        counts = np.maximum(resp.sum(axis=0), 1e-300)
        weights = counts / z.size
        means = (resp * z[:, None]).sum(axis=0) / counts
        variances = np.maximum(
            (resp * (z[:, None] - means) ** 2).sum(axis=0) / counts,
            VARIANCE_FLOOR)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < config.gmm_tol:
            break
    order = np.argsort(means, kind="stable")
    means = means[order]
    variances = variances[order]
    weights = weights[order]
    return GmmParams(means=lo + span * means,
                     variances=span ** 2 * variances,
                     weights=weights,
                     loglik=np.asarray(trace))


def clean_posterior(gmm, loss):
    """Posterior probability that a loss came from the lower-mean component."""
    x = np.asarray(loss, dtype=np.float64)
    log_joint = [np.log(gmm.weights[k]) + _log_pdf(x, gmm.means[k], gmm.variances[k])
                 for k in range(2)]
    log_norm = np.logaddexp(log_joint[0], log_joint[1])
    w = np.exp(log_joint[0] - log_norm)
    return float(w) if w.ndim == 0 else w


def gamma_from_posterior(w, config=None):
    """Sharpen a clean posterior into a loss exponent.

    gamma = log((1-w)^0.25 / mu + 1), clamped into [gamma_floor, 1]. With the
    default mu = 1/(e-1), w=0 gives exactly 1 and w=1 lands on the floor.
    """
    config = config or RalConfig()
    config.validate()
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("posterior must lie in [0, 1]")
    raw = np.log(np.power(1.0 - w, 0.25) / config.mu + 1.0)
    out = np.clip(raw, config.gamma_floor, 1.0)
    return float(out) if out.ndim == 0 else out


def gammas_from_losses(losses, config=None):
    """Per-sample exponents for a loss batch, with the degenerate fallback.

    Returns (gammas, gmm_or_None). When every loss is identical the fit is
    impossible and every sample falls back to the floor exponent.
    """
    config = config or RalConfig()
    x = np.asarray(losses, dtype=np.float64).ravel()
    try:
        gmm = fit_gmm_2(x, config)
    except DegenerateLossesError:
        return np.full(x.size, config.gamma_floor), None
    w = clean_posterior(gmm, x)
    return gamma_from_posterior(w, config), gmm

"""Per-modality cluster-center memory with momentum updates.

Each modality of each model keeps a bank of K cluster centers. Class
probabilities come from a temperature-scaled softmax over center-feature
inner products. The momentum update is the plain convex combination
m <- eta*m + (1-eta)*mean; callers renormalize rows separately so the raw
update keeps its exact geometric-contraction property.
"""

from dataclasses import dataclass, replace

import numpy as np

from .clustering import l2_normalize


def softmax(logits):
    """Numerically stable softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MemoryBank:
    """centers: (K, L); modality tag; momentum eta; softmax temperature tau."""

    centers: np.ndarray
    modality: str
    eta: float = 0.15
    tau: float = 0.05

    @property
    def size(self):
        return self.centers.shape[0]


def init_memory(centers, modality, eta=0.15, tau=0.05):
    """Build a bank from cluster centers, stored exactly as given."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 1:
        raise ValueError("centers must be a non-empty (K, L) matrix")
    if not np.all(np.isfinite(centers)):
        raise ValueError("non-finite center entries")
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1), got %r" % eta)
    if tau <= 0.0:
        raise ValueError("tau must be positive, got %r" % tau)
    return MemoryBank(centers.copy(), modality, float(eta), float(tau))


def update_memory(bank, class_means, present=None):
    """Momentum update m_j <- eta*m_j + (1-eta)*mean_j for present rows.

    class_means must match the bank shape row for row; `present` is an
    optional boolean mask marking which rows were observed this step (absent
    rows stay untouched). Returns a new bank; the input is not mutated.
    """
    class_means = np.asarray(class_means, dtype=np.float64)
    if class_means.shape != bank.centers.shape:
        raise ValueError("class_means shape %s != bank shape %s"
                         % (class_means.shape, bank.centers.shape))
    if present is None:
        present = np.ones(bank.size, dtype=bool)
    else:
        present = np.asarray(present, dtype=bool)
        if present.shape != (bank.size,):
            raise ValueError("present mask length %d != bank size %d"
                             % (present.size, bank.size))
    if not np.all(np.isfinite(class_means[present])):
        raise ValueError("non-finite class mean for a present row")
    centers = bank.centers.copy()
    centers[present] = bank.eta * centers[present] \
        + (1.0 - bank.eta) * class_means[present]
    return replace(bank, centers=centers)


def renormalized(bank):
    """Bank with every center row scaled to unit L2 norm."""
    return replace(bank, centers=l2_normalize(bank.centers, what="center"))


def refresh_memory(bank, new_centers):
    """Epoch-boundary refresh from freshly clustered centers.

    If the cluster count changed, the bank is rebuilt from the new centers.
    Otherwise row j is the momentum blend of the new center j with the old
    row cosine-nearest to it (ties to the lowest index), so each row always
    means "current cluster j" regardless of how the fresh clustering happened
    to number its clusters. Rows come back L2-normalized either way.
    """
    new_centers = np.asarray(new_centers, dtype=np.float64)
    if new_centers.ndim != 2 or new_centers.shape[0] < 1:
        raise ValueError("new_centers must be a non-empty (K, L) matrix")
    if new_centers.shape[0] != bank.size or new_centers.shape[1] != bank.centers.shape[1]:
        fresh = init_memory(new_centers, bank.modality, bank.eta, bank.tau)
        return renormalized(fresh)
    old_unit = l2_normalize(bank.centers, what="center")
    new_unit = l2_normalize(new_centers, what="center")
    sims = new_unit @ old_unit.T
    nearest = np.argmax(sims, axis=1)  # argmax takes the first (lowest) index on ties
    carried = init_memory(bank.centers[nearest], bank.modality, bank.eta,
                          bank.tau)
    return renormalized(update_memory(carried, new_centers))


def class_probabilities(bank, feature):
    """Softmax over (center . feature)/tau for one feature vector.

    Invariant to adding any constant to all logits (stabilized softmax);
    entries sum to 1 within float tolerance.
    """
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (bank.centers.shape[1],):
        raise ValueError("feature shape %s does not match bank dim %d"
                         % (feature.shape, bank.centers.shape[1]))
    logits = bank.centers @ feature / bank.tau
    return softmax(logits)


def class_probability_matrix(bank, features):
    """Row-wise class_probabilities for a (n, L) feature batch."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != bank.centers.shape[1]:
        raise ValueError("features shape %s does not match bank dim %d"
                         % (features.shape, bank.centers.shape[1]))
    logits = features @ bank.centers.T / bank.tau
    return softmax(logits)

"""Feature-vector datasets for two-modality re-identification experiments.

A dataset is a flat list of samples, each carrying a ground-truth identity,
a modality tag ("V" for visible, "I" for infrared) and a fixed-length feature
vector. Identities exist for evaluation and diagnostics only; the training
code never reads them.
"""

import json
from dataclasses import dataclass, field

import numpy as np

MODALITIES = ("V", "I")


@dataclass
class Sample:
    """One observation: identity label, modality tag, feature vector."""

    identity: int
    modality: str
    feature: np.ndarray


@dataclass
class Dataset:
    """Immutable-by-convention container of samples with a common feature dim.

    Arrays are kept columnar for vectorized access: features is (N, dim),
    identities and modalities are (N,).
    """

    features: np.ndarray
    identities: np.ndarray
    modalities: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.identities = np.asarray(self.identities, dtype=np.int64)
        self.modalities = np.asarray(self.modalities, dtype=object)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array, got shape %s"
                             % (self.features.shape,))
        if self.dim == 0:
            self.dim = int(self.features.shape[1])
        self.validate()

    def validate(self):
        n = len(self.features)
        if len(self.identities) != n or len(self.modalities) != n:
            raise ValueError("features, identities and modalities disagree on length")
        if self.features.shape[1] != self.dim:
            raise ValueError("feature dim %d != dataset dim %d"
                             % (self.features.shape[1], self.dim))
        if not np.all(np.isfinite(self.features)):
            bad = int(np.argwhere(~np.isfinite(self.features).all(axis=1))[0][0])
            raise ValueError("non-finite feature at sample %d" % bad)
        if np.any(self.identities < 0):
            bad = int(np.argmin(self.identities))
            raise ValueError("negative identity at sample %d" % bad)
        for m in self.modalities:
            if m not in MODALITIES:
                raise ValueError("unknown modality %r (expected one of %s)"
                                 % (m, list(MODALITIES)))
        for m in MODALITIES:
            if not np.any(self.modalities == m):
                raise ValueError("dataset has no samples of modality %s" % m)

    def __len__(self):
        return len(self.features)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.identities, other.identities)
                and np.array_equal(self.modalities, other.modalities))

    def sample(self, i):
        return Sample(int(self.identities[i]), str(self.modalities[i]),
                      self.features[i])

    def samples(self):
        return [self.sample(i) for i in range(len(self))]

    def indices_of(self, modality):
        """Positions of all samples of one modality, in dataset order."""
        if modality not in MODALITIES:
            raise ValueError("unknown modality %r" % (modality,))
        return np.flatnonzero(self.modalities == modality)

    def subset(self, modality):
        """(features, identities, indices) of one modality."""
        idx = self.indices_of(modality)
        return self.features[idx], self.identities[idx], idx

    @classmethod
    def from_samples(cls, samples, dim=None):
        if not samples:
            raise ValueError("empty sample list")
        if dim is None:
            dim = len(samples[0].feature)
        feats = np.stack([np.asarray(s.feature, dtype=np.float64) for s in samples])
        ids = np.array([s.identity for s in samples], dtype=np.int64)
        mods = np.array([s.modality for s in samples], dtype=object)
        return cls(feats, ids, mods, dim=int(dim))


@dataclass
class SynthSpec:
    """Recipe for a synthetic two-modality dataset.

    Each identity gets a Gaussian center (scale `spread`); visible samples are
    center + noise(sigma), infrared samples additionally shift by one shared
    modality-offset vector of magnitude `offset`. An `outlier_fraction` of
    samples (chosen uniformly) get their features resampled from the global
    spread while keeping their identity label, i.e. feature-level corruption.
    """

    identities: int = 20
    per_identity: int = 20   # samples per modality per identity
    dim: int = 16
    spread: float = 1.0
    sigma: float = 0.05
    offset: float = 1.0
    outlier_fraction: float = 0.0
    seed: int = 0

    def validate(self):
        if self.identities < 1:
            raise ValueError("identities must be >= 1")
        if self.per_identity < 1:
            raise ValueError("per_identity must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.spread <= 0:
            raise ValueError("spread must be > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must be in [0, 1]")


def _draw_components(spec):
    """Identity centers and the shared modality offset, in fixed rng order."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(0.0, spec.spread, size=(spec.identities, spec.dim))
    direction = rng.normal(0.0, 1.0, size=spec.dim)
    norm = np.linalg.norm(direction)
    if spec.offset == 0.0 or norm == 0.0:
        offset_vec = np.zeros(spec.dim)
    else:
        offset_vec = direction / norm * spec.offset
    return centers, offset_vec, rng


def modality_offset(spec):
    """The shared offset vector that separates infrared from visible samples."""
    spec.validate()
    _, offset_vec, _ = _draw_components(spec)
    return offset_vec


def generate_synthetic(spec):
    """Build a deterministic synthetic Dataset from a SynthSpec.

    Sample order: identities ascending; per identity, all V samples then all
    I samples. Infrared features are computed as (center + noise) + offset with
    the offset added last, so with sigma=0 an infrared feature equals the
    matching visible feature plus the offset, bit for bit.
    """
    spec.validate()
    centers, offset_vec, rng = _draw_components(spec)
    feats, ids, mods = [], [], []
    for c in range(spec.identities):
        for modality in MODALITIES:
            noise = rng.normal(0.0, spec.sigma,
                               size=(spec.per_identity, spec.dim)) \
                if spec.sigma > 0 else np.zeros((spec.per_identity, spec.dim))
            block = centers[c] + noise
            if modality == "I":
                block = block + offset_vec
            feats.append(block)
            ids.extend([c] * spec.per_identity)
            mods.extend([modality] * spec.per_identity)
    features = np.vstack(feats)
    n_total = len(features)
    n_out = int(round(spec.outlier_fraction * n_total))
    if n_out > 0:
        chosen = rng.choice(n_total, size=n_out, replace=False)
        features[chosen] = rng.normal(0.0, spec.spread, size=(n_out, spec.dim))
    return Dataset(features, np.array(ids), np.array(mods, dtype=object),
                   dim=spec.dim)


def save_dataset(dataset, path):
    """Write one JSON record per line: identity, modality, feature."""
    with open(path, "w") as f:
        for i in range(len(dataset)):
            rec = {"identity": int(dataset.identities[i]),
                   "modality": str(dataset.modalities[i]),
                   "feature": [float(x) for x in dataset.features[i]]}
            f.write(json.dumps(rec) + "\n")


def load_dataset(path):
    """Read a line-delimited dataset, validating per line.

    Malformed lines report their 1-based line number; a feature of the wrong
    length reports both the observed and the expected dimension.
    """
    feats, ids, mods = [], [], []
    dim = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError("line %d: malformed record (%s)" % (lineno, e))
            for key in ("identity", "modality", "feature"):
                if key not in rec:
                    raise ValueError("line %d: missing field %r" % (lineno, key))
            identity = rec["identity"]
            if not isinstance(identity, int) or identity < 0:
                raise ValueError("line %d: identity must be a non-negative integer"
                                 % lineno)
            modality = rec["modality"]
            if modality not in MODALITIES:
                raise ValueError("line %d: unknown modality %r" % (lineno, modality))
            feature = np.asarray(rec["feature"], dtype=np.float64)
            if feature.ndim != 1 or feature.size == 0:
                raise ValueError("line %d: feature must be a non-empty flat array"
                                 % lineno)
            if not np.all(np.isfinite(feature)):
                raise ValueError("line %d: non-finite feature value" % lineno)
            if dim is None:
                dim = feature.size
            elif feature.size != dim:
                raise ValueError("line %d: feature dim %d != dim %d"
                                 % (lineno, feature.size, dim))
            feats.append(feature)
            ids.append(identity)
            mods.append(modality)
    if not feats:
        raise ValueError("dataset file %s holds no records" % path)
    return Dataset(np.stack(feats), np.array(ids), np.array(mods, dtype=object),
                   dim=int(dim))

"""Small per-modality feature encoders with unit-norm outputs.

Each model carries one encoder per modality: either a single affine map or
one tanh hidden layer followed by an affine map. Outputs are L2-normalized,
so downstream inner products against memory centers are cosines. Both
modalities of a model start from identical weights (one draw per model seed)
so that early features of the two modalities stay comparable.
"""

from dataclasses import dataclass

import numpy as np

from .data import MODALITIES


@dataclass
class ModalityEncoder:
    weights: list  # [(fan_in, fan_out), ...]
    biases: list   # [(fan_out,), ...]

    def copy(self):
        return ModalityEncoder([w.copy() for w in self.weights],
                               [b.copy() for b in self.biases])


@dataclass
class EncoderParams:
    by_modality: dict  # modality -> ModalityEncoder

    def copy(self):
        return EncoderParams({m: e.copy() for m, e in self.by_modality.items()})

    @property
    def embed_dim(self):
        any_enc = next(iter(self.by_modality.values()))
        return any_enc.weights[-1].shape[1]


def init_encoder(dim, embed_dim, hidden=None, seed=0):
    """Fan-in-scaled uniform init; the V and I encoders share the same draw."""
    rng = np.random.default_rng(seed)
    sizes = [dim, embed_dim] if hidden is None else [dim, hidden, embed_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    shared = ModalityEncoder(weights, biases)
    return EncoderParams({m: shared.copy() for m in MODALITIES})


def forward_with_cache(enc, x):
    """Unit-norm embeddings plus the intermediates backprop needs.

    x: (n, D). Returns (v, cache); raises on a zero/non-finite embedding
    naming the batch row.
    """
    x = np.asarray(x, dtype=np.float64)
    acts = [x]
    h = x
    n_layers = len(enc.weights)
    for li in range(n_layers):
        z = h @ enc.weights[li] + enc.biases[li]
        if li < n_layers - 1:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    if not np.all(np.isfinite(h)):
        bad = int(np.argwhere(~np.isfinite(h).all(axis=1))[0][0])
        raise ValueError("non-finite embedding at batch index %d" % bad)
    norms = np.linalg.norm(h, axis=1)
    tiny = np.flatnonzero(norms < 1e-12)
    if tiny.size:
        raise ValueError("zero-norm embedding at batch index %d" % int(tiny[0]))
    v = h / norms[:, None]
    cache = {"acts": acts, "z": h, "norms": norms, "v": v}
    return v, cache


def encoder_forward(params, modality, x):
    """Unit-norm embeddings of a raw feature batch under one modality encoder."""
    if modality not in params.by_modality:
        raise ValueError("no encoder for modality %r" % (modality,))
    v, _ = forward_with_cache(params.by_modality[modality], x)
    return v


def backward_from_embedding(enc, cache, d_v):
    """Gradients of a scalar loss w.r.t. encoder params, given dLoss/dv.

    Backpropagates through the L2 normalization (v = z/|z|) and the layers.
    Returns a ModalityEncoder-shaped gradient container.
    """
    v, norms = cache["v"], cache["norms"]
    inner = np.sum(d_v * v, axis=1, keepdims=True)
    d_z = (d_v - inner * v) / norms[:, None]
    grads_w = [None] * len(enc.weights)
    grads_b = [None] * len(enc.weights)
    acts = cache["acts"]
    upstream = d_z
    for li in reversed(range(len(enc.weights))):
        a_in = acts[li]
        grads_w[li] = a_in.T @ upstream
        grads_b[li] = upstream.sum(axis=0)
        if li > 0:
            d_a = upstream @ enc.weights[li].T
            upstream = d_a * (1.0 - acts[li] ** 2)  # through tanh
    return ModalityEncoder(grads_w, grads_b)


def zeros_like_params(params):
    return EncoderParams({
        m: ModalityEncoder([np.zeros_like(w) for w in e.weights],
                           [np.zeros_like(b) for b in e.biases])
        for m, e in params.by_modality.items()})


def add_modality_grads(total, modality, grads):
    """In-place accumulate per-modality gradients into an EncoderParams-shaped sum."""
    slot = total.by_modality[modality]
    for li in range(len(slot.weights)):
        slot.weights[li] += grads.weights[li]
        slot.biases[li] += grads.biases[li]


def sgd_step(params, grads, lr):
    """params - lr * grads, as a fresh EncoderParams."""
    out = params.copy()
    for m, enc in out.by_modality.items():
        g = grads.by_modality[m]
        for li in range(len(enc.weights)):
            enc.weights[li] -= lr * g.weights[li]
            enc.biases[li] -= lr * g.biases[li]
    return out


def params_to_vector(params):
    """Flatten all parameters in a fixed order (modalities, layers, W then b)."""
    chunks = []
    for m in MODALITIES:
        enc = params.by_modality[m]
        for w, b in zip(enc.weights, enc.biases):
            chunks.append(w.ravel())
            chunks.append(b.ravel())
    return np.concatenate(chunks)


def vector_to_params(vec, template):
    """Inverse of params_to_vector against a template for the shapes."""
    vec = np.asarray(vec, dtype=np.float64)
    expected = params_to_vector(template).size
    if vec.size != expected:
        raise ValueError("vector length %d does not match template size %d"
                         % (vec.size, expected))
    out = template.copy()
    pos = 0
    for m in MODALITIES:
        enc = out.by_modality[m]
        for li in range(len(enc.weights)):
            w_n = enc.weights[li].size
            enc.weights[li] = vec[pos:pos + w_n].reshape(enc.weights[li].shape)
            pos += w_n
            b_n = enc.biases[li].size
            enc.biases[li] = vec[pos:pos + b_n].reshape(enc.biases[li].shape)
            pos += b_n
    return out

import numpy as np
import pytest

from duoreid.encoders import (EncoderParams, ModalityEncoder,
                              backward_from_embedding, encoder_forward,
                              forward_with_cache, init_encoder,
                              params_to_vector, sgd_step, vector_to_params,
                              zeros_like_params)


def affine_params(w, b):
    enc = ModalityEncoder([np.asarray(w, dtype=np.float64)],
                          [np.asarray(b, dtype=np.float64)])
    return EncoderParams({"V": enc.copy(), "I": enc.copy()})


def test_identity_affine_normalizes_input():
    params = affine_params(np.eye(2), np.zeros(2))
    v = encoder_forward(params, "V", np.array([[3.0, 4.0], [0.0, 2.0]]))
    assert np.allclose(v, [[0.6, 0.8], [0.0, 1.0]], atol=1e-15)


def test_init_shares_draw_across_modalities():
    params = init_encoder(5, 3, seed=42)
    enc_v = params.by_modality["V"]
    enc_i = params.by_modality["I"]
    for w_v, w_i in zip(enc_v.weights, enc_i.weights):
        assert np.array_equal(w_v, w_i)
        assert w_v is not w_i   # same values, separate storage
    other = init_encoder(5, 3, seed=43)
    assert not np.array_equal(other.by_modality["V"].weights[0], enc_v.weights[0])
    assert params.embed_dim == 3


def test_hidden_layer_forward_matches_manual():
    rng = np.random.default_rng(9)
    params = init_encoder(4, 3, hidden=6, seed=7)
    enc = params.by_modality["I"]
    x = rng.normal(size=(5, 4))
    v = encoder_forward(params, "I", x)
    h = np.tanh(x @ enc.weights[0] + enc.biases[0])
    z = h @ enc.weights[1] + enc.biases[1]
    want = z / np.linalg.norm(z, axis=1)[:, None]
    assert np.allclose(v, want, atol=1e-12)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)


def test_forward_error_reporting():
    params = affine_params(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError, match="zero-norm embedding at batch index 0"):
        encoder_forward(params, "V", np.ones((3, 2)))
    with pytest.raises(ValueError, match="no encoder for modality"):
        encoder_forward(affine_params(np.eye(2), np.zeros(2)), "X", np.ones((1, 2)))


def test_backward_matches_finite_differences():
    # scalar loss sum(v * G): analytic gradient vs central differences
    rng = np.random.default_rng(31)
    params = init_encoder(4, 3, hidden=5, seed=3)
    x = rng.normal(size=(6, 4))
    g_target = rng.normal(size=(6, 3))

    def loss_of(vec):
        p = vector_to_params(vec, params)
        val = 0.0
        for m in ("V", "I"):
            v, _ = forward_with_cache(p.by_modality[m], x)
            val += float(np.sum(v * g_target))
        return val

    grads = zeros_like_params(params)
    for m in ("V", "I"):
        enc = params.by_modality[m]
        v, cache = forward_with_cache(enc, x)
        mod_grads = backward_from_embedding(enc, cache, g_target)
        for li in range(len(enc.weights)):
            grads.by_modality[m].weights[li] += mod_grads.weights[li]
            grads.by_modality[m].biases[li] += mod_grads.biases[li]

    vec = params_to_vector(params)
    analytic = params_to_vector(grads)
    h = 1e-6
    for k in rng.choice(vec.size, size=25, replace=False):
        bumped = vec.copy()
        bumped[k] += h
        up = loss_of(bumped)
        bumped[k] -= 2 * h
        down = loss_of(bumped)
        numeric = (up - down) / (2 * h)
        assert analytic[k] == pytest.approx(numeric, abs=1e-5)


def test_sgd_step_and_purity():
    params = affine_params([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    grads = affine_params([[1.0, 1.0], [1.0, 1.0]], [2.0, 2.0])
    out = sgd_step(params, grads, lr=0.5)
    assert np.array_equal(out.by_modality["V"].weights[0],
                          [[0.5, -0.5], [-0.5, 0.5]])
    assert np.array_equal(out.by_modality["V"].biases[0], [-1.0, -1.0])
    # the input params are untouched
    assert np.array_equal(params.by_modality["V"].weights[0], np.eye(2))


def test_vector_round_trip():
    params = init_encoder(4, 3, hidden=5, seed=17)
    vec = params_to_vector(params)
    back = vector_to_params(vec, params)
    for m in ("V", "I"):
        for a, b in zip(params.by_modality[m].weights, back.by_modality[m].weights):
            assert np.array_equal(a, b)
        for a, b in zip(params.by_modality[m].biases, back.by_modality[m].biases):
            assert np.array_equal(a, b)
    with pytest.raises(ValueError, match="length"):
        vector_to_params(vec[:-1], params)


def test_zeros_like_params_shapes():
    params = init_encoder(4, 2, hidden=3, seed=1)
    z = zeros_like_params(params)
    for m in ("V", "I"):
        for w0, w1 in zip(params.by_modality[m].weights, z.by_modality[m].weights):
            assert w0.shape == w1.shape
            assert not w1.any()

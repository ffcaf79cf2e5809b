import numpy as np
import pytest

from duoreid.data import generate_synthetic, SynthSpec
from duoreid.encoders import EncoderParams, ModalityEncoder, init_encoder
from duoreid.evaluation import (Ranking, build_rankings, cmc,
                                dataset_features, evaluate_retrieval,
                                joint_feature, map_score, minp)


def reference_metrics(sims, query_ids, gallery_ids, k):
    """Recount CMC/mAP/mINP with plain python loops for cross-checking."""
    cmc_hits, aps, inps = [], [], []
    for qi in range(len(query_ids)):
        order = sorted(range(len(gallery_ids)),
                       key=lambda j: (-sims[qi][j], j))
        rel = [gallery_ids[j] == query_ids[qi] for j in order]
        if not any(rel):
            continue
        cmc_hits.append(1.0 if any(rel[:k]) else 0.0)
        hits = 0
        precisions = []
        last = 0
        for rank, flag in enumerate(rel, start=1):
            if flag:
                hits += 1
                precisions.append(hits / rank)
                last = rank
        aps.append(sum(precisions) / len(precisions))
        inps.append(hits / last)
    return (sum(cmc_hits) / len(cmc_hits), sum(aps) / len(aps),
            sum(inps) / len(inps))


def test_ap_and_inp_worked_example():
    # relevant at ranks 1 and 3: AP = (1 + 2/3)/2 = 5/6, INP = 2/3
    query = np.array([[1.0, 0.0]])
    gallery = np.array([[1.0, 0.0], [0.8, 0.6], [0.6, 0.8], [0.0, 1.0]])
    rankings = build_rankings(query, [0], gallery, [0, 1, 0, 1])
    assert list(rankings[0].order) == [0, 1, 2, 3]
    assert list(rankings[0].relevant) == [True, False, True, False]
    assert map_score(rankings) == pytest.approx(5.0 / 6.0, abs=1e-12)
    assert minp(rankings) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert cmc(rankings, 1) == 1.0
    assert cmc(rankings, 2) == 1.0


def test_matches_reference_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n_q = int(rng.integers(2, 10))
        n_g = int(rng.integers(3, 15))
        dim = 4
        q = rng.normal(size=(n_q, dim))
        g = rng.normal(size=(n_g, dim))
        q_ids = rng.integers(0, 4, size=n_q)
        g_ids = rng.integers(0, 4, size=n_g)
        if not np.any(np.isin(q_ids, g_ids)):
            g_ids[0] = q_ids[0]
        rankings = build_rankings(q, q_ids, g, g_ids)
        qn = q / np.linalg.norm(q, axis=1)[:, None]
        gn = g / np.linalg.norm(g, axis=1)[:, None]
        sims = qn @ gn.T
        k = int(rng.integers(1, n_g + 1))
        want_cmc, want_map, want_inp = reference_metrics(
            sims.tolist(), q_ids.tolist(), g_ids.tolist(), k)
        assert cmc(rankings, k) == pytest.approx(want_cmc, abs=1e-12)
        assert map_score(rankings) == pytest.approx(want_map, abs=1e-12)
        assert minp(rankings) == pytest.approx(want_inp, abs=1e-12)


def test_exact_ties_resolve_to_lower_gallery_index():
    query = np.array([[1.0, 0.0]])
    gallery = np.array([[2.0, 0.0], [1.0, 0.0]])  # identical directions
    rankings = build_rankings(query, [0], gallery, [1, 0])
    assert list(rankings[0].order) == [0, 1]
    # the relevant item sits at rank 2, so rank-1 misses deterministically
    assert cmc(rankings, 1) == 0.0
    assert cmc(rankings, 2) == 1.0
    assert map_score(rankings) == pytest.approx(0.5, abs=1e-15)


def test_queries_without_relevant_are_excluded(caplog):
    query = np.array([[1.0, 0.0], [0.0, 1.0]])
    gallery = np.array([[1.0, 0.0], [0.0, 1.0]])
    rankings = build_rankings(query, [0, 7], gallery, [0, 0])
    with caplog.at_level("WARNING"):
        value = cmc(rankings, 1)
    assert value == 1.0   # only the scorable query counts
    assert any("excluded" in r.message for r in caplog.records)
    hopeless = build_rankings(query, [5, 7], gallery, [0, 0])
    with pytest.raises(ValueError, match="no query"):
        map_score(hopeless)


def test_cmc_monotone_in_k():
    rng = np.random.default_rng(23)
    q = rng.normal(size=(8, 3))
    g = rng.normal(size=(12, 3))
    q_ids = rng.integers(0, 3, size=8)
    g_ids = rng.integers(0, 3, size=12)
    rankings = build_rankings(q, q_ids, g, g_ids)
    values = [cmc(rankings, k) for k in range(1, 13)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError, match="k must be"):
        cmc(rankings, 0)


def test_joint_feature_average_and_single():
    w_a = np.array([[1.0, 0.0], [0.0, 1.0]])
    w_b = np.array([[0.0, 1.0], [1.0, 0.0]])  # swaps coordinates
    make = lambda w: EncoderParams(
        {"V": ModalityEncoder([w.copy()], [np.zeros(2)]),
         "I": ModalityEncoder([w.copy()], [np.zeros(2)])})
    params_a, params_b = make(w_a), make(w_b)
    x = np.array([[3.0, 4.0]])
    joint = joint_feature(params_a, params_b, "V", x)
    # model A gives [0.6, 0.8], model B the swap [0.8, 0.6]
    assert np.allclose(joint, [[0.7, 0.7]], atol=1e-12)
    alone = joint_feature(params_a, None, "V", x)
    assert np.allclose(alone, [[0.6, 0.8]], atol=1e-12)


def test_dataset_features_order_and_eval_keys():
    spec = SynthSpec(identities=3, per_identity=4, dim=5, sigma=0.05, seed=2)
    ds = generate_synthetic(spec)
    params = init_encoder(5, 4, seed=0)
    feats = dataset_features([params], ds)
    assert feats.shape == (len(ds), 4)
    # row i really is the embedding of sample i
    from duoreid.encoders import encoder_forward
    v_idx = ds.indices_of("V")
    direct = encoder_forward(params, "V", ds.features[v_idx])
    assert np.allclose(feats[v_idx], direct, atol=1e-12)

    metrics = evaluate_retrieval([params], ds, ks=(1, 10, 20))
    assert set(metrics) == {"I->V", "V->I"}
    for entry in metrics.values():
        assert set(entry) == {"rank1", "rank10", "rank20", "map", "minp"}
        for v in entry.values():
            assert 0.0 <= v <= 1.0
    # gallery holds 12 samples, so k=20 was clipped, making it rank-12
    assert metrics["I->V"]["rank20"] >= metrics["I->V"]["rank10"]
    with pytest.raises(ValueError, match="at least one model"):
        dataset_features([], ds)


def test_build_rankings_length_checks():
    with pytest.raises(ValueError, match="lengths disagree"):
        build_rankings(np.eye(2), [0], np.eye(2), [0, 1])

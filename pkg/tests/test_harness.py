import argparse
import json
import os

import numpy as np
import pytest

from duoreid.cli import build_train_config, main, read_config_file
from duoreid.data import SynthSpec, generate_synthetic, save_dataset
from duoreid.harness import (ABLATION_VARIANTS, ExperimentPlan,
                             export_loss_distributions, export_mismatch_rates,
                             majority_identities, matching_mismatch,
                             mismatch_series, read_csv, run_ablation_suite,
                             run_gamma_sweep, separation_auc,
                             standard_benchmark_config,
                             standard_benchmark_spec, trend_slope)
from duoreid.training import TrainConfig, train


def tiny_plan(tmp_path=None, **cfg_kw):
    ds = generate_synthetic(SynthSpec(identities=5, per_identity=6, dim=8,
                                      sigma=0.05, seed=3))
    cfg = TrainConfig(epochs=1, warmup_epochs=1, batch_size=16, lr=3.5e-4,
                      embed_dim=8, hidden=0)
    cfg.dbscan.eps = 0.2
    cfg.dbscan.min_pts = 3
    for k, v in cfg_kw.items():
        setattr(cfg, k, v)
    return ExperimentPlan(name="tiny", dataset=ds, base_config=cfg,
                          seeds=[(1, 2)],
                          out_dir=str(tmp_path) if tmp_path else "")


def test_separation_auc_landmarks():
    assert separation_auc([0.0, 0.1], [1.0, 1.1]) == 1.0
    assert separation_auc([1.0, 1.1], [0.0, 0.1]) == 0.0
    # identical distributions score exactly one half through midranks
    assert separation_auc([0.3, 0.7], [0.3, 0.7]) == 0.5
    rng = np.random.default_rng(0)
    same = rng.normal(size=200)
    assert separation_auc(same, same) == 0.5
    with pytest.raises(ValueError, match="each side"):
        separation_auc([], [1.0])


def test_majority_identities_with_ties():
    labels = np.array([0, 0, 0, 1, 1, -1])
    ids = np.array([7, 7, 3, 5, 2, 9])
    maj = majority_identities(labels, ids, 2)
    assert maj[0] == 7
    # cluster 1 splits 1-1 between ids 2 and 5: the lowest id wins
    assert maj[1] == 2
    # empty cluster handles gracefully
    assert majority_identities(np.array([0]), np.array([4]), 2)[1] == -1


def test_matching_mismatch_rate():
    mdict = {"pairs": [[0, 0], [1, 1], [2, 0]]}
    maj_p = np.array([10, 11, 12])
    maj_q = np.array([10, 99])
    # pair (0,0) agrees, (1,1) and (2,0) disagree
    assert matching_mismatch(mdict, maj_p, maj_q) == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError, match="no pairs"):
        matching_mismatch({"pairs": []}, maj_p, maj_q)


def test_trend_slope():
    assert trend_slope([0, 1, 2, 3], [0.9, 0.6, 0.4, 0.1]) < 0
    assert trend_slope([0, 1, 2], [0.5, 0.5, 0.5]) == 0.0
    assert trend_slope([0], [0.5]) == 0.0


def test_config_file_and_cli_precedence(tmp_path):
    path = os.path.join(tmp_path, "run.cfg")
    with open(path, "w") as f:
        f.write("# comment line\n")
        f.write("lr = 0.002\n")
        f.write("eps = 0.33   # inline comment\n")
        f.write("disable_ral_intra = true\n")
        f.write("single_model = A\n")

    cfg = build_train_config(argparse.Namespace(config=path))
    assert cfg.lr == 0.002
    assert cfg.dbscan.eps == 0.33
    assert cfg.disable_ral_intra is True
    assert cfg.single_model == "A"

    # an explicit flag beats the file
    cfg2 = build_train_config(argparse.Namespace(config=path, lr=0.003))
    assert cfg2.lr == 0.003
    assert cfg2.dbscan.eps == 0.33

    bad = os.path.join(tmp_path, "bad.cfg")
    with open(bad, "w") as f:
        f.write("nonsense line\n")
    with pytest.raises(ValueError, match="line 1"):
        read_config_file(bad)

    unknown = os.path.join(tmp_path, "unknown.cfg")
    with open(unknown, "w") as f:
        f.write("no_such_key = 1\n")
    with pytest.raises(ValueError, match="unknown config key"):
        build_train_config(argparse.Namespace(config=unknown))


def test_cli_end_to_end(tmp_path, capsys):
    data_path = os.path.join(tmp_path, "data.jsonl")
    rc = main(["generate", "--identities", "5", "--per-identity", "6",
               "--dim", "8", "--sigma", "0.05", "--seed", "3",
               "--out", data_path])
    assert rc == 0
    assert os.path.exists(data_path)

    out_dir = os.path.join(tmp_path, "run")
    rc = main(["train", "--dataset", data_path, "--out-dir", out_dir,
               "--epochs", "1", "--warmup-epochs", "1", "--eps", "0.2",
               "--min-pts", "3", "--embed-dim", "8", "--batch-size", "16"])
    assert rc == 0
    for name in ("run_log.json", "checkpoint_a.json", "checkpoint_b.json",
                 "metrics.json"):
        assert os.path.exists(os.path.join(out_dir, name))
    metrics = json.load(open(os.path.join(out_dir, "metrics.json")))
    assert set(metrics) == {"I->V", "V->I"}

    rc = main(["eval", "--dataset", data_path,
               "--checkpoint-a", os.path.join(out_dir, "checkpoint_a.json"),
               "--checkpoint-b", os.path.join(out_dir, "checkpoint_b.json"),
               "--out", os.path.join(tmp_path, "eval.json")])
    assert rc == 0
    shown = capsys.readouterr().out
    assert "I->V" in shown and "rank1" in shown
    assert os.path.exists(os.path.join(tmp_path, "eval.json"))


def test_cli_export_from_noisy_run(tmp_path):
    data_path = os.path.join(tmp_path, "data.jsonl")
    ds = generate_synthetic(SynthSpec(identities=5, per_identity=8, dim=8,
                                      sigma=0.05, seed=4))
    save_dataset(ds, data_path)
    out_dir = os.path.join(tmp_path, "run")
    rc = main(["train", "--dataset", data_path, "--out-dir", out_dir,
               "--epochs", "2", "--warmup-epochs", "1", "--eps", "0.2",
               "--min-pts", "3", "--embed-dim", "8", "--noise-rate", "0.25"])
    assert rc == 0
    export_dir = os.path.join(tmp_path, "export")
    rc = main(["export", "--run-log", os.path.join(out_dir, "run_log.json"),
               "--dataset", data_path, "--out-dir", export_dir])
    assert rc == 0
    sep = read_csv(os.path.join(export_dir, "separation.csv"))
    assert sep and all(0.0 <= row["auc"] <= 1.0 for row in sep)
    hist = read_csv(os.path.join(export_dir, "loss_hist.csv"))
    assert hist and {"epoch", "model", "tag", "bin_lo", "bin_hi", "count"} \
        == set(hist[0])
    rates = read_csv(os.path.join(export_dir, "mismatch.csv"))
    assert rates and all(0.0 <= row["rate"] <= 1.0 for row in rates)
    kinds = {row["kind"] for row in rates}
    assert kinds == {"cross_modal", "cross_model"}


def test_ablation_suite_covers_all_variants(tmp_path):
    plan = tiny_plan(tmp_path)
    result = run_ablation_suite(plan)
    names = {row["variant"] for row in result["rows"]}
    for variant, _ in ABLATION_VARIANTS:
        assert variant in names
    assert "full" in result["summary"]
    # the co-trained encoders also get scored individually
    assert {"full_test_a", "full_test_b"} <= names
    ok_rows = [r for r in result["rows"] if r["error"] is None]
    for row in ok_rows:
        assert 0.0 <= row["rank1"] <= 1.0
    assert os.path.exists(os.path.join(tmp_path, "ablation.json"))
    saved = json.load(open(os.path.join(tmp_path, "ablation.json")))
    assert saved["summary"].keys() == result["summary"].keys()


def test_ablation_suite_records_failures(monkeypatch, tmp_path):
    import duoreid.harness as harness
    calls = {"n": 0}
    real_train = harness.train

    def flaky(dataset, cfg):
        calls["n"] += 1
        if cfg.disable_ccm_cross_model:
            raise RuntimeError("synthetic failure")
        return real_train(dataset, cfg)

    monkeypatch.setattr(harness, "train", flaky)
    result = run_ablation_suite(tiny_plan())
    failed = [r for r in result["rows"] if r["error"]]
    assert len(failed) == 1
    assert failed[0]["variant"] == "wo_ccm_cross_model"
    assert "synthetic failure" in failed[0]["error"]
    # the suite kept going: every other variant produced metrics
    assert {r["variant"] for r in result["rows"] if r["error"] is None} \
        >= {"full", "single_a", "single_b"}


def test_gamma_sweep_rows(tmp_path):
    plan = tiny_plan(tmp_path)
    result = run_gamma_sweep(plan, [0.5, 1.0])
    gammas = [row["gamma"] for row in result["rows"]]
    assert gammas == [0.5, 1.0, "adaptive"]
    assert set(result["summary"]) == {"0.5", "1.0", "adaptive"}
    assert os.path.exists(os.path.join(tmp_path, "gamma_sweep.json"))


def test_plan_config_isolation():
    plan = tiny_plan()
    derived = plan.config_for((7, 8), fixed_gamma=0.5)
    derived.dbscan.eps = 0.9
    derived.ral.gamma_floor = 0.5
    assert plan.base_config.dbscan.eps == 0.2
    assert plan.base_config.ral.gamma_floor == 0.01
    assert plan.base_config.fixed_gamma == 0.0
    assert (derived.seed_a, derived.seed_b) == (7, 8)


def test_mismatch_series_on_clean_run():
    plan = tiny_plan()
    state_a, state_b, log = train(plan.dataset, plan.base_config)
    rows = mismatch_series(log, plan.dataset)
    assert rows
    for row in rows:
        assert row["kind"] in ("cross_modal", "cross_model")
        assert 0.0 <= row["rate"] <= 1.0


def test_standard_benchmark_helpers():
    spec = standard_benchmark_spec()
    assert spec.identities == 20 and spec.per_identity == 20
    cfg = standard_benchmark_config(epochs=5)
    assert cfg.epochs == 5
    cfg.validate()
    with pytest.raises(ValueError, match="unknown config field"):
        standard_benchmark_config(bogus=1)

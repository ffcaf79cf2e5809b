"""Experiment harness: ablation suites, exponent sweeps, noise diagnostics.

Everything here sits above the trainer: it may read ground-truth identities
(for mismatch analysis) and the injected flip tags (for loss-separation
scores), which the trainer itself never touches.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .clustering import NOISE
from .data import MODALITIES, SynthSpec, generate_synthetic
from .evaluation import evaluate_retrieval
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

REPORT_DIRECTION = "I->V"


def standard_benchmark_spec(seed=0):
    """The fixed synthetic benchmark: 20 identities, 20 samples per modality
    per identity, separable clusters with a moderate modality offset."""
    return SynthSpec(identities=20, per_identity=20, dim=16, spread=1.0,
                     sigma=0.08, offset=1.0, outlier_fraction=0.0, seed=seed)


def standard_benchmark_config(**overrides):
    """Training defaults for the standard benchmark; kwargs override fields."""
    cfg = TrainConfig(epochs=20, warmup_epochs=2, batch_size=32, lr=3.5e-4,
                      embed_dim=16, hidden=32)
    cfg.dbscan.eps = 0.15
    cfg.dbscan.min_pts = 4
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ValueError("unknown config field %r" % key)
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


@dataclass
class ExperimentPlan:
    """A named batch of runs over one dataset.

    seeds: list of (seed_a, seed_b) pairs; every variant runs once per pair
    on identical data and identical seeds so rows are comparable.
    """

    name: str
    dataset: object
    base_config: TrainConfig
    seeds: list = field(default_factory=lambda: [(1, 2)])
    out_dir: str = ""

    def config_for(self, seed_pair, **overrides):
        cfg = replace(self.base_config,
                      dbscan=replace(self.base_config.dbscan),
                      ral=replace(self.base_config.ral))
        cfg.seed_a, cfg.seed_b = seed_pair
        for key, value in overrides.items():
            setattr(cfg, key, value)
        cfg.validate()
        return cfg


ABLATION_VARIANTS = (
    ("full", {}),
    ("wo_ral_intra", {"disable_ral_intra": True}),
    ("wo_ral_inter", {"disable_ral_inter": True}),
    ("wo_ccm_cross_modal", {"disable_ccm_cross_modal": True}),
    ("wo_ccm_cross_model", {"disable_ccm_cross_model": True}),
    ("single_a", {"single_model": "A"}),
    ("single_b", {"single_model": "B"}),
)


def _evaluate_models(models, dataset):
    metrics = evaluate_retrieval([m.params for m in models if m is not None],
                                 dataset)
    head = metrics[REPORT_DIRECTION]
    return {"rank1": head["rank1"], "map": head["map"], "minp": head["minp"],
            "all_directions": metrics}


def run_one(plan, variant, overrides, seed_pair):
    """One training run plus evaluation; returns a result row."""
    cfg = plan.config_for(seed_pair, **overrides)
    row = {"variant": variant, "seed_a": seed_pair[0], "seed_b": seed_pair[1],
           "error": None}
    try:
        state_a, state_b, run_log = train(plan.dataset, cfg)
        row.update(_evaluate_models([state_a, state_b], plan.dataset))
        run_log.final_metrics = row["all_directions"]
        row["run_log"] = run_log
        row["states"] = (state_a, state_b)
    except Exception as e:
        logger.warning("run %s/%s failed: %s", variant, seed_pair, e)
        row["error"] = str(e)
    return row


def run_ablation_suite(plan):
    """Full method plus the ablation variants, identical seeds throughout.

    Also reports the co-trained model tested single ('full_test_a'/'_b'),
    reusing the 'full' runs. A failed run is recorded and the suite goes on.
    Returns {"rows": [...], "summary": {variant: mean rank1}}.
    """
    rows = []
    for seed_pair in plan.seeds:
        full_row = None
        for variant, overrides in ABLATION_VARIANTS:
            row = run_one(plan, variant, overrides, seed_pair)
            rows.append(row)
            if variant == "full":
                full_row = row
        if full_row and not full_row["error"]:
            state_a, state_b = full_row["states"]
            for name, state in (("full_test_a", state_a), ("full_test_b", state_b)):
                sub = {"variant": name, "seed_a": seed_pair[0],
                       "seed_b": seed_pair[1], "error": None}
                sub.update(_evaluate_models([state], plan.dataset))
                rows.append(sub)
    summary = {}
    for row in rows:
        if row["error"] is None:
            summary.setdefault(row["variant"], []).append(row["rank1"])
    summary = {k: float(np.mean(v)) for k, v in summary.items()}
    result = {"rows": rows, "summary": summary}
    if plan.out_dir:
        _write_table(result, os.path.join(plan.out_dir, "ablation.json"))
    return result


def run_gamma_sweep(plan, gammas):
    """Fixed-exponent runs over a gamma grid plus the adaptive setting."""
    rows = []
    for seed_pair in plan.seeds:
        for gamma in list(gammas) + ["adaptive"]:
            overrides = {} if gamma == "adaptive" else {"fixed_gamma": float(gamma)}
            row = run_one(plan, "gamma=%s" % gamma, overrides, seed_pair)
            row["gamma"] = gamma
            rows.append(row)
    summary = {}
    for row in rows:
        if row["error"] is None:
            summary.setdefault(str(row["gamma"]), []).append(row["rank1"])
    summary = {k: float(np.mean(v)) for k, v in summary.items()}
    result = {"rows": rows, "summary": summary}
    if plan.out_dir:
        _write_table(result, os.path.join(plan.out_dir, "gamma_sweep.json"))
    return result


def _write_table(result, path):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    clean_rows = []
    for row in result["rows"]:
        clean_rows.append({k: v for k, v in row.items()
                           if k not in ("run_log", "states")})
    with open(path, "w") as f:
        json.dump({"rows": clean_rows, "summary": result["summary"]}, f, indent=1)


def separation_auc(clean_losses, noisy_losses):
    """Probability that a random noisy loss exceeds a random clean one.

    Midranks handle ties, so identical distributions score exactly 0.5 and
    perfect separation scores 1.0.
    """
    clean = np.asarray(clean_losses, dtype=np.float64)
    noisy = np.asarray(noisy_losses, dtype=np.float64)
    if clean.size == 0 or noisy.size == 0:
        raise ValueError("need at least one loss on each side")
    ranks = stats.rankdata(np.concatenate([clean, noisy]))
    noisy_ranks = ranks[clean.size:]
    u = noisy_ranks.sum() - noisy.size * (noisy.size + 1) / 2.0
    return float(u / (clean.size * noisy.size))


def _epoch_tags(run_log, epoch_entry, model_id):
    """(losses, noisy_mask, valid_mask) for one model at one epoch.

    Losses are the model's plain-CE losses under its OWN label set and the
    noisy tag marks its own injected flips. Self-training absorbs a flip
    (the loss decays as the encoder adapts to it); co-training only absorbs
    where the peer's labels confirm it, so the separation stays sharper.
    """
    me = epoch_entry["models"][model_id]
    losses, noisy, valid = [], [], []
    for m in MODALITIES:
        losses.extend(me["per_sample_own_ce"][m])
        noisy.extend(me["flipped"][m])
        valid.extend(v != NOISE for v in me["labels_own"][m])
    return np.asarray(losses), np.asarray(noisy, bool), np.asarray(valid, bool)


def export_loss_distributions(run_log, out_dir, bins=20):
    """Per-epoch clean/noisy loss histograms plus AUC separation scores.

    Writes loss_hist.csv (epoch, model, tag, bin_lo, bin_hi, count) and
    separation.csv (epoch, model, auc); returns the separation rows.
    Only joint-phase epochs with at least one tagged sample are scored.
    """
    os.makedirs(out_dir, exist_ok=True)
    hist_rows = []
    sep_rows = []
    for entry in run_log.epochs:
        if entry["phase"] != "joint":
            continue
        for model_id in entry["models"]:
            losses, noisy, valid = _epoch_tags(run_log, entry, model_id)
            keep = valid
            if not keep.any() or not noisy[keep].any() or noisy[keep].all():
                continue
            clean_l = losses[keep & ~noisy]
            noisy_l = losses[keep & noisy]
            auc = separation_auc(clean_l, noisy_l)
            sep_rows.append({"epoch": entry["epoch"], "model": model_id,
                             "auc": auc})
            lo = float(losses[keep].min())
            hi = float(losses[keep].max())
            edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
            for tag, arr in (("clean", clean_l), ("noisy", noisy_l)):
                counts, _ = np.histogram(arr, bins=edges)
                for b in range(bins):
                    hist_rows.append({"epoch": entry["epoch"], "model": model_id,
                                      "tag": tag, "bin_lo": edges[b],
                                      "bin_hi": edges[b + 1],
                                      "count": int(counts[b])})
    _write_csv(os.path.join(out_dir, "loss_hist.csv"),
               ["epoch", "model", "tag", "bin_lo", "bin_hi", "count"], hist_rows)
    _write_csv(os.path.join(out_dir, "separation.csv"),
               ["epoch", "model", "auc"], sep_rows)
    return sep_rows


def majority_identities(cluster_labels, identities, k):
    """Per-cluster majority ground-truth identity; ties to the lowest id."""
    cluster_labels = np.asarray(cluster_labels)
    identities = np.asarray(identities)
    out = np.full(k, -1, dtype=np.int64)
    for j in range(k):
        ids = identities[cluster_labels == j]
        if ids.size == 0:
            continue
        values, counts = np.unique(ids, return_counts=True)
        out[j] = values[np.argmax(counts)]  # unique() is sorted: lowest id wins ties
    return out


def matching_mismatch(matching_dict, maj_p, maj_q):
    """Fraction of matched pairs whose majority identities disagree."""
    pairs = matching_dict["pairs"]
    if not pairs:
        raise ValueError("matching holds no pairs")
    bad = sum(1 for i, j in pairs if maj_p[i] != maj_q[j])
    return bad / len(pairs)


def mismatch_series(run_log, dataset):
    """Per-epoch mismatch rates for every recorded matching.

    Rows: {"epoch", "kind": "cross_modal"|"cross_model", "part", "rate"};
    cross-modal parts are model ids, cross-model parts are modalities.
    Cluster majorities come from the pre-flip cluster assignments.
    """
    ids = {m: dataset.subset(m)[1] for m in MODALITIES}
    rows = []
    for entry in run_log.epochs:
        if entry["phase"] != "joint":
            continue
        for model_id, mdict in entry["matchings"]["cross_modal"].items():
            me = entry["models"][model_id]
            maj = {m: majority_identities(me["labels_cluster"][m], ids[m],
                                          me["cluster_counts"][m])
                   for m in MODALITIES}
            rows.append({"epoch": entry["epoch"], "kind": "cross_modal",
                         "part": model_id,
                         "rate": matching_mismatch(mdict, maj["V"], maj["I"])})
        for m, mdict in entry["matchings"]["cross_model"].items():
            ma = entry["models"]["A"]
            mb = entry["models"]["B"]
            maj_a = majority_identities(ma["labels_cluster"][m], ids[m],
                                        ma["cluster_counts"][m])
            maj_b = majority_identities(mb["labels_cluster"][m], ids[m],
                                        mb["cluster_counts"][m])
            rows.append({"epoch": entry["epoch"], "kind": "cross_model",
                         "part": m,
                         "rate": matching_mismatch(mdict, maj_a, maj_b)})
    return rows


def export_mismatch_rates(run_log, dataset, out_path):
    """Write the mismatch-rate time series as CSV; returns the rows."""
    rows = mismatch_series(run_log, dataset)
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    _write_csv(out_path, ["epoch", "kind", "part", "rate"], rows)
    return rows


def trend_slope(epochs, rates):
    """Robust (Theil-Sen) slope of a rate series over epochs."""
    epochs = np.asarray(epochs, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if epochs.size < 2:
        return 0.0
    if np.allclose(rates, rates[0]):
        return 0.0
    return float(stats.theilslopes(rates, epochs)[0])


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path):
    """Re-parse a harness CSV export into a list of dicts (numbers coerced)."""
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            parsed = {}
            for key, val in row.items():
                try:
                    parsed[key] = int(val)
                except ValueError:
                    try:
                        parsed[key] = float(val)
                    except ValueError:
                        parsed[key] = val
            out.append(parsed)
    return out

"""Co-training loop for two models over a two-modality dataset.

Each epoch: encode everything, cluster each modality per model, refresh the
memory banks, align clusters across modalities then across models, hand each
model the other's labels translated into its own index spaces, derive
per-sample loss exponents from the loss distribution, then run batched
gradient steps (model A first, then B, on each batch) with per-batch bank
momentum updates.

The trainer never reads ground-truth identities. Epochs are atomic: all
functions here build new states and leave their inputs untouched, so a
failure inside an epoch simply leaves the previous states standing.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import (NOISE, DbscanConfig, cluster_centers, dbscan,
                         l2_normalize)
from .data import MODALITIES
from .encoders import encoder_forward, init_encoder, sgd_step
from .losses import loss_gradient, total_loss
from .matching import Matching, match_clusters, relabel
from .memory import (MemoryBank, init_memory, refresh_memory, renormalized,
                     update_memory)
from .reliability import RalConfig, gammas_from_losses

CHECKPOINT_VERSION = 1
RUNLOG_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 50
    warmup_epochs: int = 2
    batch_size: int = 32
    lr: float = 3.5e-4
    decay_factor: float = 10.0
    decay_period: int = 25
    lam: float = 0.6
    eta: float = 0.15
    tau: float = 0.05
    embed_dim: int = 16
    hidden: int = 0              # 0 = plain affine encoder
    seed_a: int = 1
    seed_b: int = 2
    dbscan: DbscanConfig = field(default_factory=DbscanConfig)
    ral: RalConfig = field(default_factory=RalConfig)
    # ablation switches
    disable_ral_intra: bool = False
    disable_ral_inter: bool = False
    disable_ccm_cross_modal: bool = False
    disable_ccm_cross_model: bool = False
    single_model: str = ""       # "" (dual), "A" or "B"
    fixed_gamma: float = 0.0     # > 0 freezes every exponent at this value
    # diagnostics
    noise_rate: float = 0.0      # fraction of pseudo-labels flipped per modality
    noise_seed: int = 97
    jitter_sigma: float = 0.0    # optional raw-feature augmentation

    def validate(self):
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.decay_factor <= 0 or self.decay_period < 1:
            raise ValueError("decay_factor must be > 0 and decay_period >= 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.embed_dim < 1 or self.hidden < 0:
            raise ValueError("bad encoder sizes")
        if self.single_model not in ("", "A", "B"):
            raise ValueError("single_model must be '', 'A' or 'B'")
        if self.fixed_gamma and not 0.0 < self.fixed_gamma <= 1.0:
            raise ValueError("fixed_gamma must lie in (0, 1]")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        self.dbscan.validate()
        self.ral.validate()

    def to_dict(self):
        return {
            "epochs": self.epochs, "warmup_epochs": self.warmup_epochs,
            "batch_size": self.batch_size, "lr": self.lr,
            "decay_factor": self.decay_factor, "decay_period": self.decay_period,
            "lam": self.lam, "eta": self.eta, "tau": self.tau,
            "embed_dim": self.embed_dim, "hidden": self.hidden,
            "seed_a": self.seed_a, "seed_b": self.seed_b,
            "eps": self.dbscan.eps, "min_pts": self.dbscan.min_pts,
            "mu": self.ral.mu, "gamma_floor": self.ral.gamma_floor,
            "gmm_max_iter": self.ral.gmm_max_iter, "gmm_tol": self.ral.gmm_tol,
            "disable_ral_intra": self.disable_ral_intra,
            "disable_ral_inter": self.disable_ral_inter,
            "disable_ccm_cross_modal": self.disable_ccm_cross_modal,
            "disable_ccm_cross_model": self.disable_ccm_cross_model,
            "single_model": self.single_model, "fixed_gamma": self.fixed_gamma,
            "noise_rate": self.noise_rate, "noise_seed": self.noise_seed,
            "jitter_sigma": self.jitter_sigma,
        }


@dataclass
class PseudoLabelSet:
    """Labels a model carries after one epoch's alignment.

    own: per modality, this model's (possibly noise-flipped) cluster labels.
    train_intra/train_inter: the labels the model is actually trained with,
    already translated into its own bank index spaces (own labels in
    single-model mode, the peer's labels in dual mode).
    flipped: per modality, which own labels the noise harness flipped.
    """

    own: dict
    train_intra: dict
    train_inter: dict
    flipped: dict


@dataclass
class ModelState:
    model_id: str
    params: object               # EncoderParams
    banks: dict = None           # modality -> MemoryBank
    labels: PseudoLabelSet = None
    flip_anchors: dict = None    # modality -> anchor rows per flipped row


def lr_at_epoch(cfg, epoch):
    """Step-decayed learning rate; epoch is the zero-based joint-epoch index."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr * cfg.decay_factor ** (-(epoch // cfg.decay_period))


def init_model(model_id, dim, cfg):
    seed = cfg.seed_a if model_id == "A" else cfg.seed_b
    hidden = cfg.hidden if cfg.hidden > 0 else None
    params = init_encoder(dim, cfg.embed_dim, hidden=hidden, seed=seed)
    return ModelState(model_id, params)


def make_flip_sets(dataset, cfg):
    """Fixed per-modality sample rows whose labels the harness corrupts.

    Drawn once per run from the noise seed and shared by both models and all
    variants of a run, so every configuration corrupts the same rows. What a
    corrupted row's label becomes is model-specific: at the first epoch with
    noise active each model freezes the row's runner-up cluster (its strongest
    wrong choice, the mistake the model itself would plausibly make) as a set
    of anchor rows, and thereafter relabels the row like its anchors in the
    model's current cluster ids. Anchoring by data rows keeps the target
    meaningful across per-epoch reclustering, so training on the corrupt label
    can genuinely pull the row into the target cluster, after which the
    injected label and the model's own view coincide.
    """
    rng = np.random.default_rng([cfg.noise_seed, 31])
    sets = {}
    for m in MODALITIES:
        n = len(dataset.indices_of(m))
        mask = np.zeros(n, dtype=bool)
        n_flip = int(round(cfg.noise_rate * n))
        if n_flip > 0:
            mask[rng.choice(n, size=n_flip, replace=False)] = True
        sets[m] = {"mask": mask, "rows": np.flatnonzero(mask)}
    return sets


def _freeze_anchors(embeds, centers, labels, rows, mask):
    """Anchor rows of the runner-up cluster per flipped row, frozen once.

    The target is the highest-similarity cluster other than the row's own
    (the label error the model itself is closest to making), and its
    unflipped members become the anchors. Rows without a valid own label, or
    with only one cluster to choose from, freeze empty and stay clean.
    """
    k = centers.shape[0]
    unit = l2_normalize(centers, what="center")
    out = []
    for i in rows:
        if labels[i] == NOISE or k < 2:
            out.append(np.empty(0, dtype=np.int64))
            continue
        sims = unit @ embeds[i]
        sims[labels[i]] = -np.inf
        target = int(np.argmax(sims))
        members = np.flatnonzero((labels == target) & ~mask)
        if members.size == 0:
            members = np.flatnonzero(labels == target)
        out.append(members)
    return out


def _other(modality):
    return "I" if modality == "V" else "V"


def _positions(dataset):
    pos = np.full(len(dataset), -1, dtype=np.int64)
    for m in MODALITIES:
        idx = dataset.indices_of(m)
        pos[idx] = np.arange(len(idx))
    return pos


def _identity_masked(labels, k_target):
    """Cross-space identity mapping for ablations: ids >= K become NOISE."""
    labels = np.asarray(labels, dtype=np.int64)
    out = labels.copy()
    out[(labels != NOISE) & (labels >= k_target)] = NOISE
    return out


@dataclass
class _Prep:
    """Per-model epoch-start products: features, clusters, banks, own labels.

    centers live in the model's own embedding space; raw_centers summarise the
    same clusters in the shared input space, the only coordinates in which two
    independently initialised models are mutually comparable.
    """

    embeds: dict
    assigns: dict
    centers: dict
    raw_centers: dict
    banks: dict
    own: dict
    own_inter: dict
    flipped: dict
    flip_anchors: dict
    cross_modal: Matching


def _prep_model(state, dataset, cfg, flip_sets):
    embeds, assigns, centers, raw_centers = {}, {}, {}, {}
    for m in MODALITIES:
        x, _, _ = dataset.subset(m)
        embeds[m] = encoder_forward(state.params, m, x)
        a = dbscan(embeds[m], cfg.dbscan)
        if a.cluster_count == 0:
            raise RuntimeError("model %s: clustering left every %s sample as noise"
                               % (state.model_id, m))
        assigns[m] = a
        centers[m] = cluster_centers(embeds[m], a)
        raw_centers[m] = cluster_centers(x, a)
    banks = {}
    for m in MODALITIES:
        if state.banks is None:
            banks[m] = init_memory(l2_normalize(centers[m], what="center"), m,
                                   cfg.eta, cfg.tau)
        else:
            banks[m] = refresh_memory(state.banks[m], centers[m])
    noise_on = cfg.noise_rate > 0 and flip_sets is not None
    anchors = state.flip_anchors
    if noise_on and anchors is None:
        anchors = {m: _freeze_anchors(embeds[m], centers[m],
                                      assigns[m].labels,
                                      flip_sets[m]["rows"],
                                      flip_sets[m]["mask"])
                   for m in MODALITIES}
    own, flipped = {}, {}
    for m in MODALITIES:
        base = assigns[m].labels
        labels = base.copy()
        mask = np.zeros(len(labels), dtype=bool)
        if noise_on:
            for i, anc in zip(flip_sets[m]["rows"], anchors[m]):
                if base[i] == NOISE or anc.size == 0:
                    continue
                votes = base[anc]
                votes = votes[votes != NOISE]
                if votes.size == 0:
                    continue
                # majority anchor cluster; ties resolve to the lowest id
                labels[i] = int(np.argmax(np.bincount(votes)))
                mask[i] = True
        own[m] = labels
        flipped[m] = mask
    cross_modal = match_clusters(centers["V"], centers["I"])  # P=V, Q=I
    own_inter = {}
    for m in MODALITIES:
        k_other = assigns[_other(m)].cluster_count
        if cfg.disable_ccm_cross_modal:
            own_inter[m] = _identity_masked(own[m], k_other)
        else:
            own_inter[m] = relabel(own[m], cross_modal,
                                   source="P" if m == "V" else "Q")
    return _Prep(embeds, assigns, centers, raw_centers, banks, own, own_inter,
                 flipped, anchors, cross_modal)


def _starred_labels(prep_consumer, prep_source, cross_model, source_side, cfg):
    """The source model's labels translated into the consumer's index spaces.

    cross_model: modality -> Matching between the two models' clusters of
    that modality; source_side names the matching side ('P' or 'Q') that the
    source model's ids live on. Intra labels cross models within a modality;
    inter labels were already crossed between modalities inside the source
    model (prep_source.own_inter) and here cross models within the other
    modality.
    """
    intra, inter = {}, {}
    for m in MODALITIES:
        if cfg.disable_ccm_cross_model:
            intra[m] = _identity_masked(prep_source.own[m],
                                        prep_consumer.assigns[m].cluster_count)
            inter[m] = _identity_masked(prep_source.own_inter[m],
                                        prep_consumer.assigns[_other(m)].cluster_count)
        else:
            intra[m] = relabel(prep_source.own[m], cross_model[m],
                               source=source_side)
            inter[m] = relabel(prep_source.own_inter[m], cross_model[_other(m)],
                               source=source_side)
    return intra, inter


def _term_modes(cfg, warmup):
    if warmup:
        return "ce", "ce"
    return ("ce" if cfg.disable_ral_intra else "pow",
            "ce" if cfg.disable_ral_inter else "pow")


def _epoch_diagnostics(prep, train_intra, train_inter, cfg, warmup):
    """Diagnostic losses, exponents and the epoch-start loss report."""
    labels = {m: (train_intra[m], train_inter[m]) for m in MODALITIES}
    ones = {m: np.ones(len(prep.embeds[m])) for m in MODALITIES}
    diag_report = total_loss(prep.embeds, prep.banks, labels, ones, cfg.lam,
                             intra_mode="ce", inter_mode="ce")
    gammas, gamma_stats = {}, {}
    for m in MODALITIES:
        diag = diag_report.per_sample_by_modality[m]
        valid = train_intra[m] != NOISE
        g = np.ones(len(diag))
        if warmup:
            gamma_stats[m] = None
        elif cfg.fixed_gamma:
            g[valid] = cfg.fixed_gamma
            gamma_stats[m] = {"mean": cfg.fixed_gamma, "min": cfg.fixed_gamma,
                              "max": cfg.fixed_gamma, "mode": "fixed"}
        else:
            if valid.any():
                fitted, _ = gammas_from_losses(diag[valid], cfg.ral)
                g[valid] = fitted
                gamma_stats[m] = {"mean": float(fitted.mean()),
                                  "min": float(fitted.min()),
                                  "max": float(fitted.max()),
                                  "mode": "adaptive"}
            else:
                gamma_stats[m] = None
        gammas[m] = g
    intra_mode, inter_mode = _term_modes(cfg, warmup)
    report = total_loss(prep.embeds, prep.banks, labels, gammas, cfg.lam,
                        intra_mode=intra_mode, inter_mode=inter_mode)
    return diag_report, report, gammas, gamma_stats


def _matching_dict(matching):
    return {"pairs": [[int(i), int(j)] for i, j in matching.pairs],
            "rounds": [int(r) for r in matching.rounds],
            "costs": [float(c) for c in matching.costs],
            "n_p": matching.n_p, "n_q": matching.n_q}


def _model_log(state_id, prep, train_intra, diag_report, report, gamma_stats,
               cfg):
    # plain-CE losses under the model's own labels: the training labels may
    # come from the peer, but injected-flip absorption is a property of the
    # model's own label set, so the noise diagnostics key off these
    own_labels = {m: (prep.own[m], prep.own_inter[m]) for m in MODALITIES}
    ones = {m: np.ones(len(prep.embeds[m])) for m in MODALITIES}
    own_report = total_loss(prep.embeds, prep.banks, own_labels, ones, cfg.lam,
                            intra_mode="ce", inter_mode="ce")
    return {
        "loss_total": report.total,
        "loss_intra": report.intra_term,
        "loss_inter": report.inter_term,
        "loss_ce4": diag_report.intra_term + diag_report.inter_term,
        "cluster_counts": {m: prep.assigns[m].cluster_count for m in MODALITIES},
        "noise_counts": {m: int(np.sum(prep.assigns[m].labels == NOISE))
                         for m in MODALITIES},
        "gamma": gamma_stats,
        "per_sample_diagnostic": {m: diag_report.per_sample_by_modality[m].tolist()
                                  for m in MODALITIES},
        "per_sample_own_ce": {m: own_report.per_sample_by_modality[m].tolist()
                              for m in MODALITIES},
        "labels_train": {m: train_intra[m].tolist() for m in MODALITIES},
        "labels_own": {m: prep.own[m].tolist() for m in MODALITIES},
        "labels_cluster": {m: prep.assigns[m].labels.tolist() for m in MODALITIES},
        "flipped": {m: prep.flipped[m].tolist() for m in MODALITIES},
    }


def _batch_bank_update(banks, params, raw_by_mod, labels_by_mod):
    """Momentum-update bank rows observed in this batch, then renormalize.

    labels_by_mod must be the model's OWN labels: slots stay anchored to the
    model's own clusters, so label traffic from the peer cannot drag a slot
    off its cluster (a wrong peer label is then visibly wrong, not absorbed
    into the bank)."""
    out = dict(banks)
    for m, x in raw_by_mod.items():
        labels = labels_by_mod[m]
        live = labels != NOISE
        if not live.any():
            continue
        v = encoder_forward(params, m, x)
        bank = out[m]
        means = np.zeros_like(bank.centers)
        present = np.zeros(bank.size, dtype=bool)
        for j in np.unique(labels[live]):
            means[j] = v[labels == j].mean(axis=0)
            present[j] = True
        out[m] = renormalized(update_memory(bank, means, present))
    return out


def _run_batches(entries, dataset, cfg, lr, rng, warmup):
    """Shared batched-SGD loop. entries: list of dicts, one per model, updated
    in place with new params/banks; update order inside a batch follows list
    order (A before B)."""
    pos = _positions(dataset)
    perm = rng.permutation(len(dataset))
    intra_mode, inter_mode = _term_modes(cfg, warmup)
    for start in range(0, len(perm), cfg.batch_size):
        batch = perm[start:start + cfg.batch_size]
        raw, idx_by_mod = {}, {}
        for m in MODALITIES:
            sel = batch[np.asarray(dataset.modalities[batch] == m, dtype=bool)]
            if sel.size == 0:
                continue
            x = dataset.features[sel]
            if cfg.jitter_sigma > 0:
                x = x + rng.normal(0.0, cfg.jitter_sigma, size=x.shape)
            raw[m] = x
            idx_by_mod[m] = pos[sel]
        if not raw:
            continue
        for entry in entries:
            labels = {m: (entry["train_intra"][m][idx_by_mod[m]],
                          entry["train_inter"][m][idx_by_mod[m]]) for m in raw}
            gam = {m: entry["gammas"][m][idx_by_mod[m]] for m in raw}
            grads, _ = loss_gradient(raw, entry["banks"], labels, gam, cfg.lam,
                                     entry["params"], intra_mode=intra_mode,
                                     inter_mode=inter_mode)
            entry["params"] = sgd_step(entry["params"], grads, lr)
            own = {m: entry["own"][m][idx_by_mod[m]] for m in raw}
            entry["banks"] = _batch_bank_update(entry["banks"], entry["params"],
                                                raw, own)


def _finish_state(state, entry, prep):
    labels = PseudoLabelSet(own=prep.own,
                            train_intra=entry["train_intra"],
                            train_inter=entry["train_inter"],
                            flipped=prep.flipped)
    return ModelState(state.model_id, entry["params"], entry["banks"], labels,
                      flip_anchors=prep.flip_anchors)


def warm_up(state, dataset, cfg, flip_sets=None, epochs=None):
    """Single-model warm-up: CE on the model's own labels.

    Cross-modal alignment still runs (the inter term needs it); no adaptive
    exponents and no cross-model traffic. Returns (new_state, epoch_logs).
    """
    cfg.validate()
    epochs = cfg.warmup_epochs if epochs is None else epochs
    logs = []
    seed = cfg.seed_a if state.model_id == "A" else cfg.seed_b
    for e in range(epochs):
        prep = _prep_model(state, dataset, cfg, flip_sets)
        diag_report, report, gammas, gamma_stats = _epoch_diagnostics(
            prep, prep.own, prep.own_inter, cfg, warmup=True)
        entry = {"params": state.params, "banks": prep.banks,
                 "train_intra": prep.own, "train_inter": prep.own_inter,
                 "own": prep.own, "gammas": gammas}
        rng = np.random.default_rng([seed, 101, e])
        _run_batches([entry], dataset, cfg, cfg.lr, rng, warmup=True)
        state = _finish_state(state, entry, prep)
        logs.append({
            "epoch": e, "phase": "warmup", "lr": cfg.lr,
            "models": {state.model_id: _model_log(state.model_id, prep,
                                                  prep.own, diag_report,
                                                  report, gamma_stats, cfg)},
            "matchings": {"cross_modal": {state.model_id:
                                          _matching_dict(prep.cross_modal)},
                          "cross_model": {}},
        })
    return state, logs


def train_epoch(state_a, state_b, dataset, cfg, epoch, flip_sets=None):
    """One joint epoch; returns (new_a, new_b, epoch_log).

    state_b may be None (single-model mode): the lone model trains on its own
    labels. In dual mode each model consumes the other's labels, translated
    through the cross-modal then cross-model matchings. Inputs are left
    untouched, so a raised error rolls the epoch back by construction.
    """
    cfg.validate()
    lr = lr_at_epoch(cfg, epoch)
    prep_a = _prep_model(state_a, dataset, cfg, flip_sets)
    matchings = {"cross_modal": {state_a.model_id: _matching_dict(prep_a.cross_modal)},
                 "cross_model": {}}
    if state_b is None:
        diag, report, gammas, gstats = _epoch_diagnostics(
            prep_a, prep_a.own, prep_a.own_inter, cfg, warmup=False)
        entries = [{"params": state_a.params, "banks": prep_a.banks,
                    "train_intra": prep_a.own, "train_inter": prep_a.own_inter,
                    "own": prep_a.own, "gammas": gammas}]
        model_logs = {state_a.model_id: _model_log(state_a.model_id, prep_a,
                                                   prep_a.own, diag, report,
                                                   gstats, cfg)}
        preps = [prep_a]
        states = [state_a]
    else:
        prep_b = _prep_model(state_b, dataset, cfg, flip_sets)
        matchings["cross_modal"][state_b.model_id] = _matching_dict(prep_b.cross_modal)
        # the two embedding spaces share no coordinate system, so the models'
        # clusters are compared by their centers in the raw input space
        cross_model = {m: match_clusters(prep_a.raw_centers[m],
                                         prep_b.raw_centers[m])
                       for m in MODALITIES}   # P = A clusters, Q = B clusters
        matchings["cross_model"] = {m: _matching_dict(cross_model[m])
                                    for m in MODALITIES}
        a_intra, a_inter = _starred_labels(prep_a, prep_b, cross_model, "Q", cfg)
        b_intra, b_inter = _starred_labels(prep_b, prep_a, cross_model, "P", cfg)
        diag_a, report_a, gammas_a, gstats_a = _epoch_diagnostics(
            prep_a, a_intra, a_inter, cfg, warmup=False)
        diag_b, report_b, gammas_b, gstats_b = _epoch_diagnostics(
            prep_b, b_intra, b_inter, cfg, warmup=False)
        entries = [
            {"params": state_a.params, "banks": prep_a.banks,
             "train_intra": a_intra, "train_inter": a_inter,
             "own": prep_a.own, "gammas": gammas_a},
            {"params": state_b.params, "banks": prep_b.banks,
             "train_intra": b_intra, "train_inter": b_inter,
             "own": prep_b.own, "gammas": gammas_b},
        ]
        model_logs = {
            state_a.model_id: _model_log(state_a.model_id, prep_a, a_intra,
                                         diag_a, report_a, gstats_a, cfg),
            state_b.model_id: _model_log(state_b.model_id, prep_b, b_intra,
                                         diag_b, report_b, gstats_b, cfg),
        }
        preps = [prep_a, prep_b]
        states = [state_a, state_b]
    rng = np.random.default_rng([cfg.seed_a, cfg.seed_b, 202, epoch])
    _run_batches(entries, dataset, cfg, lr, rng, warmup=False)
    new_states = [_finish_state(s, e, p) for s, e, p in zip(states, entries, preps)]
    log = {"epoch": epoch, "phase": "joint", "lr": lr,
           "models": model_logs, "matchings": matchings}
    if state_b is None:
        return new_states[0], None, log
    return new_states[0], new_states[1], log


@dataclass
class RunLog:
    """Structured record of one training run; JSON round-trippable."""

    config: dict
    dataset_info: dict
    epochs: list = field(default_factory=list)
    flip_sets: dict = field(default_factory=dict)
    final_metrics: dict = None
    format_version: int = RUNLOG_VERSION

    def to_dict(self):
        return {"format_version": self.format_version, "config": self.config,
                "dataset_info": self.dataset_info, "flip_sets": self.flip_sets,
                "epochs": self.epochs, "final_metrics": self.final_metrics}

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != RUNLOG_VERSION:
            raise ValueError("unsupported run-log version %r"
                             % (doc.get("format_version"),))
        return cls(config=doc["config"], dataset_info=doc["dataset_info"],
                   epochs=doc["epochs"], flip_sets=doc["flip_sets"],
                   final_metrics=doc.get("final_metrics"))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def train(dataset, cfg):
    """Full run: warm-up both models, then cfg.epochs joint epochs.

    Returns (state_a, state_b_or_None, run_log). Any error inside an epoch
    propagates wrapped with the epoch index; already-completed epochs remain
    valid in the returned exception's context.
    """
    cfg.validate()
    flip_sets = make_flip_sets(dataset, cfg) if cfg.noise_rate > 0 else None
    run_log = RunLog(config=cfg.to_dict(),
                     dataset_info={"n": len(dataset), "dim": dataset.dim,
                                   "n_v": int(len(dataset.indices_of("V"))),
                                   "n_i": int(len(dataset.indices_of("I")))},
                     flip_sets={m: {"mask": flip_sets[m]["mask"].tolist(),
                                    "rows": flip_sets[m]["rows"].tolist()}
                                for m in MODALITIES} if flip_sets else {})
    if cfg.single_model:
        model_ids = [cfg.single_model]
    else:
        model_ids = ["A", "B"]
    states = {mid: init_model(mid, dataset.dim, cfg) for mid in model_ids}
    for mid in model_ids:
        try:
            # warm-up bootstraps on the model's own labels; injected noise
            # only enters the joint phase, where the robust machinery runs
            states[mid], logs = warm_up(states[mid], dataset, cfg, None)
        except Exception as e:
            raise RuntimeError("warm-up failed for model %s: %s" % (mid, e)) from e
        run_log.epochs.extend(logs)
    state_a = states[model_ids[0]]
    state_b = states[model_ids[1]] if len(model_ids) > 1 else None
    for epoch in range(cfg.epochs):
        try:
            state_a, state_b, log = train_epoch(state_a, state_b, dataset, cfg,
                                                epoch, flip_sets)
        except Exception as e:
            raise RuntimeError("epoch %d aborted (models rolled back): %s"
                               % (epoch, e)) from e
        run_log.epochs.append(log)
    return state_a, state_b, run_log


def save_checkpoint(state, path):
    """Encoder params and banks as versioned decimal-text JSON."""
    doc = {"format_version": CHECKPOINT_VERSION, "model_id": state.model_id,
           "encoders": {}, "banks": None}
    for m, enc in state.params.by_modality.items():
        doc["encoders"][m] = {"weights": [w.tolist() for w in enc.weights],
                              "biases": [b.tolist() for b in enc.biases]}
    if state.banks is not None:
        doc["banks"] = {m: {"centers": bank.centers.tolist(),
                            "eta": bank.eta, "tau": bank.tau}
                        for m, bank in state.banks.items()}
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    from .encoders import EncoderParams, ModalityEncoder
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint version %r"
                         % (doc.get("format_version"),))
    by_mod = {}
    for m, enc in doc["encoders"].items():
        by_mod[m] = ModalityEncoder([np.asarray(w) for w in enc["weights"]],
                                    [np.asarray(b) for b in enc["biases"]])
    banks = None
    if doc.get("banks"):
        banks = {m: MemoryBank(np.asarray(b["centers"]), m, b["eta"], b["tau"])
                 for m, b in doc["banks"].items()}
    return ModelState(doc["model_id"], EncoderParams(by_mod), banks, None)

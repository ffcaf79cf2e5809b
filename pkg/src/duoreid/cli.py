"""Command-line front end.

Subcommands: generate, train, eval, ablate, sweep-gamma, export.
Options shared with the training config can also come from a --config file
of key=value lines; explicit command-line flags win over file values.
"""

import argparse
import json
import os
import sys

from .data import SynthSpec, generate_synthetic, load_dataset, save_dataset
from .evaluation import evaluate_retrieval
from .harness import (ExperimentPlan, export_loss_distributions,
                      export_mismatch_rates, run_ablation_suite,
                      run_gamma_sweep)
from .training import (RunLog, TrainConfig, load_checkpoint, save_checkpoint,
                       train)

# dest -> (flattened config key, parser kwargs); bool fields become
# store_true flags, everything else takes a typed value
_CONFIG_FLAGS = [
    ("--epochs", "epochs", int),
    ("--warmup-epochs", "warmup_epochs", int),
    ("--batch-size", "batch_size", int),
    ("--lr", "lr", float),
    ("--decay-factor", "decay_factor", float),
    ("--decay-period", "decay_period", int),
    ("--lambda", "lam", float),
    ("--eta", "eta", float),
    ("--tau", "tau", float),
    ("--embed-dim", "embed_dim", int),
    ("--hidden", "hidden", int),
    ("--seed-a", "seed_a", int),
    ("--seed-b", "seed_b", int),
    ("--eps", "eps", float),
    ("--min-pts", "min_pts", int),
    ("--mu", "mu", float),
    ("--gamma-floor", "gamma_floor", float),
    ("--gmm-max-iter", "gmm_max_iter", int),
    ("--gmm-tol", "gmm_tol", float),
    ("--disable-ral-intra", "disable_ral_intra", bool),
    ("--disable-ral-inter", "disable_ral_inter", bool),
    ("--disable-ccm-cross-modal", "disable_ccm_cross_modal", bool),
    ("--disable-ccm-cross-model", "disable_ccm_cross_model", bool),
    ("--single-model", "single_model", str),
    ("--fixed-gamma", "fixed_gamma", float),
    ("--noise-rate", "noise_rate", float),
    ("--noise-seed", "noise_seed", int),
    ("--jitter", "jitter_sigma", float),
]

_NESTED = {"eps": ("dbscan", "eps"), "min_pts": ("dbscan", "min_pts"),
           "mu": ("ral", "mu"), "gamma_floor": ("ral", "gamma_floor"),
           "gmm_max_iter": ("ral", "gmm_max_iter"),
           "gmm_tol": ("ral", "gmm_tol")}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def read_config_file(path):
    """Parse key=value lines; '#' starts a comment, blank lines are skipped."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s line %d: expected key=value, got %r"
                                 % (path, lineno, raw.strip()))
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def _set_config_key(cfg, key, value):
    if key in _NESTED:
        holder_name, attr = _NESTED[key]
        holder = getattr(cfg, holder_name)
        current = getattr(holder, attr)
        setattr(holder, attr, _coerce(current, value))
        return
    if not hasattr(cfg, key):
        raise ValueError("unknown config key %r" % key)
    setattr(cfg, key, _coerce(getattr(cfg, key), value))


def _coerce(current, value):
    if not isinstance(value, str):
        return value
    if isinstance(current, bool):
        low = value.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValueError("expected a boolean, got %r" % value)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def build_train_config(args):
    """Defaults, then --config file entries, then explicit CLI flags."""
    cfg = TrainConfig()
    file_values = {}
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
    for key, val in file_values.items():
        _set_config_key(cfg, key, val)
    for _, key, _ in _CONFIG_FLAGS:
        if key in vars(args):        # argparse.SUPPRESS: present only if given
            _set_config_key(cfg, key, vars(args)[key])
    cfg.validate()
    return cfg


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    for flag, dest, typ in _CONFIG_FLAGS:
        if typ is bool:
            parser.add_argument(flag, dest=dest, action="store_true",
                                default=argparse.SUPPRESS)
        else:
            parser.add_argument(flag, dest=dest, type=typ,
                                default=argparse.SUPPRESS)


def _parse_seeds(text):
    pairs = []
    for part in text.split(","):
        a, _, b = part.partition(":")
        pairs.append((int(a), int(b or a)))
    return pairs


def build_parser():
    parser = argparse.ArgumentParser(
        prog="duoreid",
        description="Cross-modality retrieval trainer with dual models, "
                    "adaptive robust losses and cluster matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic two-modality dataset")
    p.add_argument("--identities", type=int, default=20)
    p.add_argument("--per-identity", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.08)
    p.add_argument("--offset", type=float, default=1.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train on a dataset and save artifacts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)

    p = sub.add_parser("eval", help="score saved checkpoints on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", default=None)
    p.add_argument("--ks", default="1,10,20")
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="run the ablation suite")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seeds", default=None,
                   help="comma list of a:b seed pairs, e.g. 1:2,3:4")
    _add_config_flags(p)

    p = sub.add_parser("sweep-gamma", help="fixed-exponent sweep plus adaptive")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--gammas", default="0.25,0.5,0.75,1.0")
    p.add_argument("--seeds", default=None)
    _add_config_flags(p)

    p = sub.add_parser("export", help="loss histograms and mismatch rates "
                                      "from a saved run log")
    p.add_argument("--run-log", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    return parser


def _cmd_generate(args):
    spec = SynthSpec(identities=args.identities, per_identity=args.per_identity,
                     dim=args.dim, spread=args.spread, sigma=args.sigma,
                     offset=args.offset, outlier_fraction=args.outlier_fraction,
                     seed=args.seed)
    dataset = generate_synthetic(spec)
    save_dataset(dataset, args.out)
    print("wrote %d samples (dim %d) to %s" % (len(dataset), dataset.dim,
                                               args.out))
    return 0


def _cmd_train(args):
    dataset = load_dataset(args.dataset)
    cfg = build_train_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    state_a, state_b, run_log = train(dataset, cfg)
    models = [state_a.params] + ([state_b.params] if state_b else [])
    metrics = evaluate_retrieval(models, dataset)
    run_log.final_metrics = metrics
    run_log.save(os.path.join(args.out_dir, "run_log.json"))
    save_checkpoint(state_a, os.path.join(args.out_dir,
                                          "checkpoint_%s.json"
                                          % state_a.model_id.lower()))
    if state_b:
        save_checkpoint(state_b, os.path.join(args.out_dir, "checkpoint_b.json"))
    with open(os.path.join(args.out_dir, "metrics.json"), "w") as f:
        json.dump(metrics, f, indent=1)
    _print_metrics(metrics)
    return 0


def _print_metrics(metrics):
    for direction, vals in metrics.items():
        parts = ["%s=%.4f" % (k, v) for k, v in sorted(vals.items())]
        print("%s  %s" % (direction, "  ".join(parts)))


def _cmd_eval(args):
    dataset = load_dataset(args.dataset)
    models = [load_checkpoint(args.checkpoint_a).params]
    if args.checkpoint_b:
        models.append(load_checkpoint(args.checkpoint_b).params)
    ks = tuple(int(k) for k in args.ks.split(","))
    metrics = evaluate_retrieval(models, dataset, ks=ks)
    _print_metrics(metrics)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(metrics, f, indent=1)
    return 0


def _make_plan(args, name):
    dataset = load_dataset(args.dataset)
    cfg = build_train_config(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else [(cfg.seed_a, cfg.seed_b)]
    return ExperimentPlan(name=name, dataset=dataset, base_config=cfg,
                          seeds=seeds, out_dir=args.out_dir)


def _print_summary(summary):
    width = max(len(k) for k in summary)
    for name in sorted(summary, key=summary.get, reverse=True):
        print("%-*s  rank1=%.4f" % (width, name, summary[name]))


def _cmd_ablate(args):
    result = run_ablation_suite(_make_plan(args, "ablation"))
    _print_summary(result["summary"])
    failed = [r for r in result["rows"] if r["error"]]
    for row in failed:
        print("FAILED %s (seeds %s:%s): %s" % (row["variant"], row["seed_a"],
                                               row["seed_b"], row["error"]))
    return 0


def _cmd_sweep(args):
    gammas = [float(g) for g in args.gammas.split(",")]
    result = run_gamma_sweep(_make_plan(args, "gamma-sweep"), gammas)
    _print_summary(result["summary"])
    return 0


def _cmd_export(args):
    run_log = RunLog.load(args.run_log)
    dataset = load_dataset(args.dataset)
    sep = export_loss_distributions(run_log, args.out_dir)
    rates = export_mismatch_rates(run_log, dataset,
                                  os.path.join(args.out_dir, "mismatch.csv"))
    print("wrote %d separation rows and %d mismatch rows to %s"
          % (len(sep), len(rates), args.out_dir))
    return 0


_COMMANDS = {"generate": _cmd_generate, "train": _cmd_train, "eval": _cmd_eval,
             "ablate": _cmd_ablate, "sweep-gamma": _cmd_sweep,
             "export": _cmd_export}


def main(argv=None):
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

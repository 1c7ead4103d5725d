"""Command-line entry point: synth | train | eval | ablate | report | gradcheck.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

Config files are flat ``key = value`` text ('#' comments); command-line
flags override file values.  Keys mirror TrainConfig plus the synthetic
cohort spec fields.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import data, evaluate, gradients, model, synth, training
from .errors import (
    CheckpointFormatError,
    DataError,
    NumericalError,
    SumlearnError,
    UsageError,
)

TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(model.TrainConfig)}
SYNTH_KEYS = {f.name: f.type for f in dataclasses.fields(synth.SynthSpec)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config(path):
    """Parse a flat key = value config file into a dict of strings."""
    out = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path} line {line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(raw, typ):
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    return raw


def _collect(config_file, cli_values, schema):
    """Merge config-file values and CLI overrides against a dataclass schema."""
    merged = {}
    if config_file:
        for key, raw in read_config(config_file).items():
            if key in schema:
                merged[key] = _coerce(raw, schema[key])
    for key, value in cli_values.items():
        if value is not None:
            merged[key] = value
    return merged


def _train_config_from(args, extra=None):
    values = {
        "learning_rate": args.lr,
        "lr_summary": getattr(args, "lr_summary", None),
        "batch_size": getattr(args, "batch_size", None),
        "max_epochs": getattr(args, "epochs", None),
        "eval_interval": getattr(args, "eval_interval", None),
        "patience": getattr(args, "patience", None),
        "alpha": getattr(args, "alpha", None),
        "tau_hs": getattr(args, "tau_hs", None),
        "tau_temp": getattr(args, "tau_temp", None),
        "mode": getattr(args, "mode", None),
        "penalty": getattr(args, "penalty", None),
    }
    if extra:
        values.update(extra)
    schema = dict(TRAIN_KEYS)
    schema["lr_summary"] = float
    merged = _collect(getattr(args, "config", None), values, schema)
    return model.TrainConfig(**merged)


def _load_cohort(args, T, variables=None, categorical=None):
    cat = categorical if categorical is not None else ()
    if getattr(args, "cohort_dir", None):
        base = Path(args.cohort_dir)
        return data.ingest_csv(
            base / "timeseries.csv", base / "static.csv", base / "labels.csv",
            T, categorical_columns=cat, variables=variables,
        )
    if not (args.timeseries and args.static and args.labels):
        raise UsageError("provide --cohort-dir or all of --timeseries/--static/--labels")
    return data.ingest_csv(
        args.timeseries, args.static, args.labels, T,
        categorical_columns=cat, variables=variables,
    )


def _add_cohort_args(p):
    p.add_argument("--cohort-dir", help="directory with timeseries/static/labels.csv")
    p.add_argument("--timeseries")
    p.add_argument("--static")
    p.add_argument("--labels")
    p.add_argument("--categorical", help="comma-separated categorical static columns")


def cmd_synth(args):
    merged = _collect(args.config, {
        "n_examples": args.n, "n_variables": args.d, "T": args.t,
        "prevalence": args.prevalence, "seed": args.seed,
    }, SYNTH_KEYS)
    spec = synth.SynthSpec(**merged)
    batch, descriptor = synth.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth.write_cohort(batch, out)
    synth.write_truth(descriptor, out)
    print(f"realized prevalence: {descriptor['prevalence_realized']:.4f}")
    print(f"cohort written to {out}")
    return 0


def _fit_one_seed(raw, config, test_fraction, seed, out_dir):
    """Split, normalize, train and persist one seed's artifacts."""
    train_raw, test_raw = data.split_by_patient(raw, test_fraction, seed)
    median = data.compute_population_median(train_raw)
    stats = data.fit_normalization(data.build_batch(train_raw, median))
    batch_train_all = data.apply_normalization(
        data.build_batch(train_raw, median), stats
    )
    batch_test = data.apply_normalization(data.build_batch(test_raw, median), stats)
    fit_batch, val_batch = data.split_by_patient(
        batch_train_all, config.val_fraction, seed + 1
    )
    config = dataclasses.replace(config, seed=seed)
    fit = training.train(fit_batch, val_batch, config)

    sp, mp = fit.best_summary_params, fit.best_model_params
    train_scores = model.predict(batch_train_all, sp, mp, config.mode)
    test_scores = model.predict(batch_test, sp, mp, config.mode)
    metrics = {
        "seed": seed,
        "train_auc": evaluate.auc(train_scores, batch_train_all.y),
        "test_auc": evaluate.auc(test_scores, batch_test.y),
        "stopped_epoch": fit.stopped_epoch,
        "best_val_auc": fit.best_val_auc,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_checkpoint(
        out_dir / "model.ckpt", sp, mp, stats, config,
        raw.variable_names, batch_train_all.static_names, raw.T, seed,
    )
    (out_dir / "history.jsonl").write_text(fit.history_jsonl())
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=1, sort_keys=True))
    return metrics


def cmd_train(args):
    config = _train_config_from(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    categorical = args.categorical.split(",") if args.categorical else ()
    raw = _load_cohort(args, args.t, categorical=categorical)
    out = Path(args.out)
    all_metrics = []
    for seed in seeds:
        metrics = _fit_one_seed(
            raw, config, args.test_fraction, seed, out / f"seed_{seed}"
        )
        print(
            f"seed {seed}: train AUC {metrics['train_auc']:.4f}, "
            f"test AUC {metrics['test_auc']:.4f}"
        )
        all_metrics.append(metrics)

    test_aucs = np.array([m["test_auc"] for m in all_metrics])
    train_aucs = np.array([m["train_auc"] for m in all_metrics])
    se = float(test_aucs.std(ddof=1) / np.sqrt(len(test_aucs))) if len(test_aucs) > 1 else 0.0
    summary = {
        "seeds": seeds,
        "train_auc_mean": float(train_aucs.mean()),
        "test_auc_mean": float(test_aucs.mean()),
        "test_auc_se": se,
        "formatted": f"{test_aucs.mean():.4f} ± {se:.4f}",
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    print(f"test AUC: {summary['formatted']}")
    return 0


def _load_eval_inputs(args):
    ckpt = model.load_checkpoint(args.checkpoint)
    raw = _load_cohort(args, ckpt["T"], variables=ckpt["variable_names"])
    batch = data.build_batch(raw, ckpt["stats"].population_median)
    if batch.static_names != ckpt["static_names"]:
        raise DataError(
            "static columns do not match checkpoint: "
            f"{batch.static_names} vs {ckpt['static_names']}"
        )
    batch = data.apply_normalization(batch, ckpt["stats"])
    return ckpt, batch


def cmd_eval(args):
    ckpt, batch = _load_eval_inputs(args)
    scores = model.predict(
        batch, ckpt["summary_params"], ckpt["model_params"], ckpt["config"].mode
    )
    result = {"auc": evaluate.auc(scores, batch.y), "n_examples": batch.n_examples}
    print(json.dumps(result, indent=1, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=1, sort_keys=True))
    return 0


def cmd_ablate(args):
    ckpt, batch = _load_eval_inputs(args)
    n_list = [int(n) for n in args.n_list.split(",")]
    pairs = evaluate.ablation_curve(
        ckpt["summary_params"], ckpt["model_params"], batch,
        ckpt["config"].mode, n_list,
    )
    tsv = evaluate.ablation_tsv(pairs)
    Path(args.out).write_text(tsv)
    print(tsv, end="")
    return 0


def cmd_report(args):
    ckpt = model.load_checkpoint(args.checkpoint)
    rows = evaluate.key_feature_report(
        ckpt["summary_params"], ckpt["model_params"], ckpt["stats"],
        ckpt["variable_names"], ckpt["T"], args.top_k,
    )
    tsv = evaluate.report_tsv(rows)
    if args.out:
        Path(args.out).write_text(tsv)
    print(tsv, end="")
    return 0


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    N, D, T = 8, 3, 12
    from .data import ClinicalBatch
    from .summaries import N_SUMMARIES, SummaryParams
    M = (rng.random((N, D, T)) < 0.7).astype(float)
    M[:, :, -2:] = 1.0  # keep every soft window populated: FD cannot
    X = rng.standard_normal((N, D, T))  # resolve eps-floor-dominated slopes
    S = rng.standard_normal((N, 2))
    y = np.array([0, 1] * (N // 2), dtype=float)
    batch = ClinicalBatch(
        X, M, S, y, [f"p{i}" for i in range(N)],
        [f"var{d}" for d in range(D)], ["s0", "s1"],
    )
    config = model.TrainConfig(mode="relaxed", tau_temp=0.1, alpha=1e-3)
    sp = SummaryParams(
        rng.uniform(2.5, T - 1.5, size=(D, N_SUMMARIES)),
        rng.uniform(0.5, 1.5, size=D),
        rng.uniform(-1.5, -0.5, size=D),
        config.tau_temp,
    )
    names = model.feature_names_for(batch.variable_names, batch.static_names, T,
                                    config.mode)
    mp = model.ModelParams(
        0.5 * rng.standard_normal(len(names)), 0.1, names
    )
    report = gradients.finite_difference_check(
        sp, mp, batch, config, eps_fd=args.epsilon, seed=args.seed
    )
    status = "PASS" if report.passed(args.tolerance) else "FAIL"
    print(
        f"{status}: max relative error {report.max_rel_error:.3e} "
        f"(worst: {report.worst.block}{report.worst.index}, "
        f"analytic {report.worst.analytic:.3e}, numeric {report.worst.numeric:.3e})"
    )
    return 0 if status == "PASS" else 3


def build_parser():
    parser = _Parser(prog="sumlearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--prevalence", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train across one or more seeds")
    _add_cohort_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seeds", default="0", help="comma-separated seed list")
    p.add_argument("--t", type=int, default=24, help="hours per example")
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--mode", choices=model.MODES)
    p.add_argument("--penalty", choices=model.PENALTIES)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-summary", dest="lr_summary", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-interval", dest="eval_interval", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau-hs", dest="tau_hs", type=float)
    p.add_argument("--tau-temp", dest="tau_temp", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="AUC of a checkpoint on a cohort")
    p.add_argument("--checkpoint", required=True)
    _add_cohort_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="top-N coefficient ablation curve")
    p.add_argument("--checkpoint", required=True)
    _add_cohort_args(p)
    p.add_argument("--n-list", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="key-feature interpretability report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=15)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SumlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

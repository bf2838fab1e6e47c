"""Command-line surface: simulate, fit, evaluate, diagnose, discretize, export.

Every option can also be supplied through ``--config file.json`` (keys are the
long option names with underscores); explicit flags win over the file, the
file wins over built-in defaults, and unknown keys are rejected.  Exit status
is 0 on success, 1 on usage errors, 2 on malformed data or artifacts, 3 on
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .diagnostics import DiagnosticsReport, EvalSplit, background_qq, \
    categorical_accuracy, hellinger_divergence, kendall_distance_correlation, \
    phi_rmse, split_eval
from .em import FitConfig, GammaPrior, NumericalError, e_step, fit
from .io import DataFormatError, atomic_write, discretize_counts, \
    load_counts_csv, load_embedding_csv, load_events_csv, load_model, \
    load_report, reorder_to_labels, save_events_csv, save_model, save_report, \
    write_curve_csv, write_embedding_csv, write_qq_csv
from .model import EmbeddingPair, ModelParams, influence_matrix
from .simulate import ground_truth_branching, sample_ground_truth, simulate_thinning
from .spectral import init_params

SCHEMA_VERSION = 1


class UsageError(Exception):
    """Bad or inconsistent options; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit on its own; route errors through the
    # dispatcher instead so it owns the exit status.
    def error(self, message):
        raise UsageError(message)


# Built-in defaults, applied after the config file.  argparse itself defaults
# everything to None so "was this flag given" stays decidable.
_DEFAULTS = {
    "simulate": {
        "n": None, "m": 2, "R": 1, "N": None, "T": None, "seed": 0,
        "out_events": "events.csv", "out_truth": "truth_model.json",
    },
    "fit": {
        "events": None, "mode": "hhg-b", "epochs": 500, "R": 1, "m": 2,
        "eps": None, "eps1": None, "eps2": None, "dm_alpha": 1.0,
        "inner_steps": 4, "prior_alpha": 1.0, "prior_beta": 0.0,
        "branching_floor": 1e-12, "seed": 0, "frozen_embedding": None,
        "horizon": None, "train_end": None, "out": "model.json",
        "out_final": None, "report": None,
    },
    "evaluate": {
        "events": None, "model": None, "split_time": None, "test_days": None,
        "horizon": None, "out": None,
    },
    "diagnose": {
        "events": None, "model": None, "truth_model": None,
        "split_time": None, "test_days": None, "horizon": None, "seed": 0,
        "out": None,
    },
    "discretize": {
        "counts": None, "threshold": 10.0, "out": "events.csv",
    },
    "export": {
        "what": None, "model": None, "report": None, "diagnostics": None,
        "out": None,
    },
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="hawkesgeo",
                     description="Hawkes processes with latent geometric "
                                 "excitation structure.")
    sub = parser.add_subparsers(dest="command")

    def opt(p, name, type_=None, help_="", choices=None):
        kwargs = {"default": None, "help": help_}
        if type_ is not None:
            kwargs["type"] = type_
        if choices is not None:
            kwargs["choices"] = choices
        p.add_argument(name, **kwargs)

    p = sub.add_parser("simulate", help="sample a ground truth and a record from it")
    opt(p, "--n", int, "number of event types (required)")
    opt(p, "--m", int, "embedding dimension (default 2)")
    opt(p, "--R", int, "number of kernel bases (default 1)")
    opt(p, "--N", int, "target number of events (stop after the Nth)")
    opt(p, "--T", float, "time horizon (alternative to --N)")
    opt(p, "--seed", int, "seed for sampling and simulation (default 0)")
    opt(p, "--out-events", help_="events CSV path (default events.csv)")
    opt(p, "--out-truth", help_="ground-truth model path (default truth_model.json)")
    opt(p, "--config", help_="JSON file with option values")

    p = sub.add_parser("fit", help="estimate a model from an event record")
    opt(p, "--events", help_="events CSV path (required)")
    opt(p, "--mode", help_="estimator mode (default hhg-b)",
        choices=["hhg-a", "hhg-b", "hhg-dm", "frb", "geo"])
    opt(p, "--epochs", int, "EM epochs (default 500)")
    opt(p, "--R", int, "number of kernel bases (default 1)")
    opt(p, "--m", int, "embedding dimension (default 2)")
    opt(p, "--eps", float, "hhg-a learning rate (default n/N)")
    opt(p, "--eps1", float, "hhg-b curvature regularizer (default off)")
    opt(p, "--eps2", float, "hhg-b shrinkage regularizer (hhg-b needs eps1 or eps2)")
    opt(p, "--dm-alpha", float, "density-normalization exponent (default 1)")
    opt(p, "--inner-steps", int, "hhg-b inner steps per epoch (default 4)")
    opt(p, "--prior-alpha", float, "Gamma prior shape on decay rates (default 1)")
    opt(p, "--prior-beta", float, "Gamma prior rate on decay rates (default 0)")
    opt(p, "--branching-floor", float, "attribution floor (default 1e-12)")
    opt(p, "--seed", int, "seed (default 0)")
    opt(p, "--frozen-embedding", help_="coordinates CSV; required for geo, "
                                       "otherwise an initialization")
    opt(p, "--horizon", float, "override the record horizon")
    opt(p, "--train-end", float, "drop events at or after this time before fitting")
    opt(p, "--out", help_="best-scoring model path (default model.json)")
    opt(p, "--out-final", help_="also write the last-epoch model here")
    opt(p, "--report", help_="fit report path (learning curve etc.)")
    opt(p, "--config", help_="JSON file with option values")

    p = sub.add_parser("evaluate", help="per-event log-likelihood across a time split")
    opt(p, "--events", help_="events CSV path (required)")
    opt(p, "--model", help_="model path (required)")
    opt(p, "--split-time", float, "train/test boundary")
    opt(p, "--test-days", float, "alternative: test window is the last so many days")
    opt(p, "--horizon", float, "override the record horizon")
    opt(p, "--out", help_="write the JSON summary here instead of stdout")
    opt(p, "--config", help_="JSON file with option values")

    p = sub.add_parser("diagnose", help="residual and recovery diagnostics for a fit")
    opt(p, "--events", help_="events CSV path (required)")
    opt(p, "--model", help_="fitted model path (required)")
    opt(p, "--truth-model", help_="ground-truth model; enables recovery metrics")
    opt(p, "--split-time", float, "train/test boundary for split metrics")
    opt(p, "--test-days", float, "alternative: test window is the last so many days")
    opt(p, "--horizon", float, "override the record horizon")
    opt(p, "--seed", int, "seed for residual sampling (default 0)")
    opt(p, "--out", help_="write the JSON report here instead of stdout")
    opt(p, "--config", help_="JSON file with option values")

    p = sub.add_parser("discretize", help="turn cumulative daily counts into events")
    opt(p, "--counts", help_="counts CSV path (required)")
    opt(p, "--threshold", float, "count increment per event (default 10)")
    opt(p, "--out", help_="events CSV path (default events.csv)")
    opt(p, "--config", help_="JSON file with option values")

    p = sub.add_parser("export", help="plot-ready CSVs from saved artifacts")
    opt(p, "--what", help_="what to export", choices=["embedding", "curve", "qq"])
    opt(p, "--model", help_="model path (for --what embedding)")
    opt(p, "--report", help_="fit report path (for --what curve)")
    opt(p, "--diagnostics", help_="diagnose output path (for --what qq)")
    opt(p, "--out", help_="output CSV path")
    opt(p, "--config", help_="JSON file with option values")

    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from built-in defaults."""
    defaults = _DEFAULTS[args.command]
    if args.config is not None:
        try:
            with open(args.config) as f:
                doc = json.load(f)
        except OSError as exc:
            raise DataFormatError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.config}: not valid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise DataFormatError(f"{args.config}: expected a JSON object")
        unknown = sorted(set(doc) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: "
                             + ", ".join(unknown))
        for key, value in doc.items():
            if getattr(args, key) is None:
                setattr(args, key, value)
    for key, value in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _labels_for(record):
    return list(record.labels) if record.labels else [str(k) for k in range(record.n)]


def _load_aligned_model(path, record):
    """Load a model and reorder its types to match the record's labels."""
    params, labels = load_model(path, with_labels=True)
    target = _labels_for(record)
    if list(labels) == target:
        return params
    return reorder_to_labels(params, labels, target)


def _split_time(args, record) -> float | None:
    if args.split_time is not None and args.test_days is not None:
        raise UsageError("give either --split-time or --test-days, not both")
    if args.split_time is not None:
        return float(args.split_time)
    if args.test_days is not None:
        t = record.horizon - float(args.test_days)
        if t < 0.0:
            raise UsageError("--test-days exceeds the record horizon")
        return t
    return None


def _frozen_embedding(args, record):
    emb_labels, X, Y = load_embedding_csv(args.frozen_embedding)
    target = _labels_for(record)
    missing = [lab for lab in target if lab not in emb_labels]
    if missing:
        raise DataFormatError("embedding file lacks coordinates for: "
                              + ", ".join(missing))
    perm = [emb_labels.index(lab) for lab in target]
    X = X[perm]
    Y = X if Y is None else Y[perm]
    return EmbeddingPair(X, Y)


def _write_json(doc: dict, path) -> None:
    with atomic_write(path) as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _emit_json(doc: dict, path) -> None:
    if path is None:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        _write_json(doc, path)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    _require(args, "n")
    if args.N is None and args.T is None:
        raise UsageError("give --N or --T")
    # Independent child streams so the truth draw does not shift the
    # simulation draw when only one of them changes.
    s_truth, s_sim = np.random.SeedSequence(args.seed).spawn(2)
    truth = sample_ground_truth(args.n, m=args.m, R=args.R, seed=s_truth)
    record = simulate_thinning(truth, T=args.T, seed=s_sim, target_events=args.N)
    save_events_csv(record, args.out_events)
    save_model(truth.params, args.out_truth,
               labels=[str(k) for k in range(args.n)])
    print(f"simulate: {record.N} events over {record.n} types, horizon "
          f"{record.horizon:.6g} -> {args.out_events}, {args.out_truth}")
    return 0


def _fit_config(args, record) -> FitConfig:
    kwargs = dict(
        mode=args.mode, epochs=args.epochs, R=args.R, m=args.m,
        eps=args.eps, eps1=args.eps1, dm_alpha=args.dm_alpha,
        inner_steps=args.inner_steps,
        prior=GammaPrior(args.prior_alpha, args.prior_beta),
        branching_floor=args.branching_floor, seed=args.seed,
    )
    if args.eps2 is not None:
        kwargs["eps2"] = args.eps2
    try:
        return FitConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_fit(args) -> int:
    _require(args, "events")
    record = load_events_csv(args.events, horizon=args.horizon)
    if args.train_end is not None:
        record = record.truncated(args.train_end)
    if record.N == 0:
        raise DataFormatError("cannot fit an empty record")

    init = None
    if args.frozen_embedding is not None:
        emb = _frozen_embedding(args, record)
        if args.m is not None and args.m != emb.reception.shape[1]:
            raise UsageError("--m disagrees with the frozen embedding's dimension")
        args.m = emb.reception.shape[1]
    elif args.mode == "geo":
        raise UsageError("mode geo requires --frozen-embedding")
    config = _fit_config(args, record)
    if args.frozen_embedding is not None:
        init = init_params(record, R=config.R, m=config.m,
                           alpha=config.dm_alpha, embedding=emb)

    report = fit(record, config, init=init)

    labels = _labels_for(record)
    save_model(report.params_best, args.out, labels=labels)
    if args.out_final is not None:
        save_model(report.params_final, args.out_final, labels=labels)
    if args.report is not None:
        recorded = {
            "mode": config.mode, "epochs": config.epochs, "R": config.R,
            "m": config.m, "eps": config.eps, "eps1": config.eps1,
            "eps2": config.eps2, "dm_alpha": config.dm_alpha,
            "inner_steps": config.inner_steps,
            "prior_alpha": config.prior.alpha, "prior_beta": config.prior.beta,
            "branching_floor": config.branching_floor, "seed": config.seed,
        }
        save_report(report, args.report, config=recorded)

    best_ll = report.curve[report.best_epoch]
    print(f"fit[{config.mode}]: {report.curve.size} epochs, best train "
          f"log-likelihood {best_ll:.6f} at epoch {report.best_epoch} "
          f"({report.wall_time:.1f}s) -> {args.out}")
    if report.aborted_epoch is not None:
        print(f"fit[{config.mode}]: aborted at epoch {report.aborted_epoch} "
              "(non-finite objective); wrote the last finite snapshot",
              file=sys.stderr)
        return 3
    return 0


def _cmd_evaluate(args) -> int:
    _require(args, "events", "model")
    record = load_events_csv(args.events, horizon=args.horizon)
    params = _load_aligned_model(args.model, record)
    split_time = _split_time(args, record)
    if split_time is None:
        raise UsageError("give --split-time or --test-days")
    train, test = split_eval(record, params, EvalSplit(split_time))
    n_train = int(np.sum(record.times < split_time))

    def opt_float(v):
        # a zero-intensity event scores -inf; keep the document strict JSON
        if v is None or not np.isfinite(v):
            return None
        return float(v)

    doc = {
        "schema_version": SCHEMA_VERSION,
        "split_time": split_time,
        "n_train": n_train,
        "n_test": record.N - n_train,
        "train_ll_per_event": opt_float(train),
        "test_ll_per_event": opt_float(test),
    }
    _emit_json(doc, args.out)
    return 0


def _cmd_diagnose(args) -> int:
    _require(args, "events", "model")
    record = load_events_csv(args.events, horizon=args.horizon)
    params = _load_aligned_model(args.model, record)
    rep = DiagnosticsReport()

    split_time = _split_time(args, record)
    if split_time is not None:
        rep.train_ll_per_event, rep.test_ll_per_event = \
            split_eval(record, params, EvalSplit(split_time))
        rep.n_train = int(np.sum(record.times < split_time))
        rep.n_test = record.N - rep.n_train
        window = (split_time, record.horizon)
    else:
        rep.n_train = record.N
        window = (0.0, record.horizon)

    rep.accuracy, rep.accuracy_naive = categorical_accuracy(record, params, window)
    branching = e_step(record, params)
    rep.qq_points = background_qq(record, params, branching, seed=args.seed)

    if args.truth_model is not None:
        truth = _load_aligned_model(args.truth_model, record)
        rep.hellinger = hellinger_divergence(
            branching, ground_truth_branching(record, truth))
        rep.phi_rmse = phi_rmse(influence_matrix(params), influence_matrix(truth))
        if isinstance(params, ModelParams) and isinstance(truth, ModelParams):
            rep.kendall_tau = kendall_distance_correlation(
                params.embedding, truth.embedding)
        else:
            rep.notes.append("kendall_tau needs embeddings on both models")
    else:
        rep.notes.append("no truth model: hellinger/phi_rmse/kendall_tau skipped")

    def opt_float(v):
        # degenerate fits can produce nan metrics (e.g. a collapsed embedding
        # has no distance ranking); keep the document strict-JSON parseable
        if v is None or not np.isfinite(v):
            return None
        return float(v)

    doc = {
        "schema_version": SCHEMA_VERSION,
        "train_ll_per_event": opt_float(rep.train_ll_per_event),
        "test_ll_per_event": opt_float(rep.test_ll_per_event),
        "n_train": rep.n_train,
        "n_test": rep.n_test,
        "accuracy": opt_float(rep.accuracy),
        "accuracy_naive": opt_float(rep.accuracy_naive),
        "hellinger": opt_float(rep.hellinger),
        "phi_rmse": opt_float(rep.phi_rmse),
        "kendall_tau": opt_float(rep.kendall_tau),
        "qq_points": ([] if rep.qq_points is None
                      else [[float(a), float(b)] for a, b in rep.qq_points]),
        "notes": rep.notes,
    }
    _emit_json(doc, args.out)
    return 0


def _cmd_discretize(args) -> int:
    _require(args, "counts")
    series = load_counts_csv(args.counts)
    record = discretize_counts(series, threshold=args.threshold)
    save_events_csv(record, args.out)
    print(f"discretize: {record.N} events over {record.n} locations -> {args.out}")
    return 0


def _cmd_export(args) -> int:
    _require(args, "what")
    if args.what == "embedding":
        _require(args, "model")
        params, labels = load_model(args.model, with_labels=True)
        if not isinstance(params, ModelParams):
            raise UsageError("this model has no embedding to export")
        out = args.out or "embedding.csv"
        write_embedding_csv(params, labels, out)
    elif args.what == "curve":
        _require(args, "report")
        out = args.out or "curve.csv"
        write_curve_csv(load_report(args.report), out)
    else:
        _require(args, "diagnostics")
        try:
            with open(args.diagnostics) as f:
                doc = json.load(f)
        except OSError as exc:
            raise DataFormatError(f"cannot read diagnostics: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(
                f"{args.diagnostics}: not valid JSON ({exc})") from None
        points = doc.get("qq_points")
        if not isinstance(points, list):
            raise DataFormatError("diagnostics file lacks qq_points")
        out = args.out or "qq.csv"
        write_qq_csv(np.asarray(points, dtype=np.float64).reshape(-1, 2), out)
    print(f"export[{args.what}] -> {out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "diagnose": _cmd_diagnose,
    "discretize": _cmd_discretize,
    "export": _cmd_export,
}


def cli_dispatch(argv) -> int:
    """Run one subcommand; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        args = _resolve(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # invalid values that slipped past flag parsing (bad horizon, etc.)
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return code if isinstance(code, int) else 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command line interface: ``ipl <command> ...``.

Exit codes: 0 success, 2 bad input or configuration, 3 numerical or
evaluation failure.  All tabular output is comma-delimited.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings
from pathlib import Path

import numpy as np

from .earlywarn import (
    build_warning_tree,
    consecutive_warning_horizon,
    render_rules,
    warning_metrics,
    warning_pool,
)
from .interpret import perturbation_analysis, rank_features, sparsity_accuracy_sweep
from .io import (
    ColumnRoles,
    InputError,
    ModelBundle,
    RunConfig,
    creation_time,
    infer_roles,
    load_config,
    load_model,
    load_series,
    parse_float_list,
    parse_int_list,
    read_csv,
    save_model,
    write_csv,
)
from .pipeline import fit_ipl
from .solver import AdmmConfig, SolverDivergence
from .timeseries import (
    LagSpec,
    chronological_split,
    lag_embed,
    simulate_alarm,
    simulate_benchmark,
    simulate_prices,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class EvaluationError(RuntimeError):
    """Numerical or evaluation failure (exit code 3)."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out(path):
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", newline="", encoding="utf-8")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def _resolve_seed(seed):
    if seed is not None:
        return int(seed)
    seed = int(np.random.SeedSequence().entropy % (2**32))
    print(f"# seed={seed}", file=sys.stderr)
    return seed


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for f in dataclasses.fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            overrides[f.name] = val
    return cfg.update(**overrides).validate()


def _split_sizes(text):
    sizes = parse_float_list(text)
    if len(sizes) not in (2, 3):
        raise InputError("split needs two or three sizes, e.g. 0.8,0.2")
    return sizes


def _embed(series, lag: LagSpec):
    try:
        return lag_embed(series, lag)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _train_test(args, roles: ColumnRoles, lag: LagSpec, split: str | None):
    """Embedded (train, test) from ``--train/--test`` or ``--data`` plus a split."""
    if args.train and args.test:
        return (_embed(load_series(args.train, roles), lag), _embed(load_series(args.test, roles), lag))
    if args.data:
        split = args.split or split
        if not split:
            raise InputError("--data needs --split (or pass --train and --test)")
        ds = _embed(load_series(args.data, roles), lag)
        try:
            parts = chronological_split(ds, _split_sizes(split))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        return parts.train, parts.test
    raise InputError("pass --train and --test, or --data with --split")


def _roles_with(bundle: ModelBundle, args) -> ColumnRoles:
    roles = bundle.roles
    if getattr(args, "stride", None):
        roles = dataclasses.replace(roles, stride=args.stride)
    return roles


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "benchmark":
        train, test, truth = simulate_benchmark(
            args.t_train, args.t_test, seed, include_temporal=args.temporal,
            noise_sd=args.noise_sd, add_irrelevant=args.add_irrelevant, noisy_test=args.noisy_test,
        )
        from .interpret import term_name

        rows = [[term_name(a, truth.feature_names), " ".join(map(str, a)), c] for a, c in truth.terms]
        write_csv(out / "truth.csv", ["term", "exponents", "coefficient"], rows)
    else:
        total = args.t_train + args.t_test
        if args.kind == "prices":
            series = simulate_prices(total, seed)
        else:
            series = simulate_alarm(total, seed)
        train, test = series.slice(0, args.t_train), series.slice(args.t_train, total)
    offset = 0
    for name, s in (("train", train), ("test", test)):
        header = ["t", *s.feature_names, s.target_name]
        rows = [[offset + i, *s.features[i], s.targets[i]] for i in range(len(s))]
        write_csv(out / f"{name}.csv", header, rows)
        offset += len(s)
    (out / "manifest.txt").write_text(
        f"kind = {args.kind}\nseed = {seed}\nt_train = {args.t_train}\nt_test = {args.t_test}\n",
        encoding="utf-8",
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    header, _ = read_csv(args.data)
    target = cfg.target
    timestamp = cfg.timestamp
    if timestamp is None and "t" in header and target != "t":
        timestamp = "t"
    features = tuple(f.strip() for f in cfg.features.split(",")) if cfg.features else None
    roles = infer_roles(header, target, timestamp, features, direction_k=cfg.direction_k, stride=cfg.stride)
    series = load_series(args.data, roles)
    lag = LagSpec(cfg.lx, cfg.ly)
    ds = _embed(series, lag)
    if cfg.split:
        try:
            ds = chronological_split(ds, _split_sizes(cfg.split)).train
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    if cfg.loss != "squared" and not np.all(np.isin(ds.y, (-1.0, 1.0))):
        raise InputError(f"{cfg.loss} loss needs targets in {{-1, 1}}; set direction_k for price series")
    admm = AdmmConfig(alpha=cfg.alpha, beta=cfg.beta, max_iters=cfg.max_iters,
                      tol_primal=cfg.tol_primal, tol_dual=cfg.tol_dual)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fitted = fit_ipl(ds, cfg.degree, cfg.loss, cfg.threshold, cfg.centers, cfg.center_seed,
                         cfg.scale, admm, cfg.method, cfg.threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    bundle = ModelBundle(fitted, roles, None, creation_time(), dataclasses.asdict(cfg))
    save_model(args.out, bundle)
    rep = fitted.report
    if not rep.converged:
        print(f"warning: solver stopped at max_iters={cfg.max_iters} without meeting tolerances",
              file=sys.stderr)
    fh = _out(args.summary)
    write_csv(fh, ["key", "value"],
              [[k, v] for k, v in rep.summary().items()]
              + [["wall_time", rep.wall_time], ["rows", len(ds)], ["terms", len(fitted.sparse.terms)]])
    _close(fh)
    return EXIT_OK


def cmd_predict(args) -> int:
    bundle = load_model(args.model)
    model = bundle.fitted.model
    lag = model.lag_spec or LagSpec()
    roles = _roles_with(bundle, args)
    series = load_series(args.data, roles, require_target=lag.ly > 0 or roles.direction_k is not None)
    ds = _embed(series, lag)
    scores = bundle.fitted.predict(ds.X, use_kernel=args.use_kernel)
    classify = model.loss != "squared"
    index = ds.timestamps if ds.timestamps is not None else range(lag.warmup, lag.warmup + len(ds))
    header = [roles.timestamp or "row", "prediction"] + (["label"] if classify else [])
    rows = []
    for t, s in zip(index, np.atleast_1d(scores)):
        rows.append([t, float(s)] + ([1 if s >= 0 else -1] if classify else []))
    fh = _out(args.out)
    write_csv(fh, header, rows)
    _close(fh)
    return EXIT_OK


def cmd_explain(args) -> int:
    bundle = load_model(args.model)
    threshold = args.threshold if args.threshold is not None else bundle.fitted.threshold
    if threshold < 0:
        raise InputError("threshold must be non-negative")
    report = rank_features(bundle.fitted, threshold)
    rows = report.to_rows()
    fh = _out(args.out)
    write_csv(fh, rows[0], rows[1:args.top_k + 1])
    _close(fh)
    return EXIT_OK


def cmd_perturb(args) -> int:
    bundle = load_model(args.model)
    cfg = bundle.config
    lag = bundle.fitted.model.lag_spec or LagSpec()
    train, test = _train_test(args, _roles_with(bundle, args), lag, cfg.get("split"))
    features = [f.strip() for f in args.features.split(",")] if args.features else list(test.feature_names)
    unknown = [f for f in features if f not in test.feature_names]
    if unknown:
        raise InputError(f"unknown features: {', '.join(unknown)}")
    alphas = parse_float_list(args.alphas)
    seed = _resolve_seed(args.seed)
    try:
        rows = perturbation_analysis(train, test, features, alphas, args.trials, seed, args.threads)
    except ValueError as exc:
        raise EvaluationError(str(exc)) from exc
    fh = _out(args.out)
    write_csv(fh, ["alpha", "feature", "mean_degradation", "std_error"],
              [[r.alpha, r.feature, r.mean_degradation, r.std_error] for r in rows])
    _close(fh)
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle = load_model(args.model)
    lag = bundle.fitted.model.lag_spec or LagSpec()
    train, test = _train_test(args, _roles_with(bundle, args), lag, bundle.config.get("split"))
    for ds in (train, test):
        if not np.all(np.isin(ds.y, (-1.0, 1.0))):
            raise InputError("sweep needs classification targets in {-1, 1}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = sparsity_accuracy_sweep(bundle.fitted, train, test, parse_int_list(args.k), args.metric,
                                      threads=args.threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if any(not np.isfinite(s) for s in res.scores):
        raise EvaluationError("metric undefined: test set holds a single class")
    fh = _out(args.out)
    write_csv(fh, ["k", res.metric], list(zip(res.k_values, res.scores)))
    _close(fh)
    print(f"# max_fluctuation={res.max_fluctuation!r}", file=sys.stderr)
    return EXIT_OK


def cmd_warn(args) -> int:
    bundle = load_model(args.model)
    lag = bundle.fitted.model.lag_spec or LagSpec()
    train, test = _train_test(args, _roles_with(bundle, args), lag, bundle.config.get("split"))
    for ds in (train, test):
        if not np.all(np.isin(ds.y, (-1.0, 1.0))):
            raise InputError("warning trees need labels in {-1, 1}")
    report = rank_features(bundle.fitted, bundle.fitted.threshold)
    try:
        names, indices = warning_pool(report, args.pool_size)
    except ValueError as exc:
        raise EvaluationError(str(exc)) from exc
    from .polycore import monomial_features

    tree = build_warning_tree(monomial_features(train.X, indices), train.y, names, args.depth,
                              args.min_leaf, indices)
    pred = tree.predict(test.X)
    metrics = warning_metrics(test.y, pred)
    for flag in metrics.flags:
        print(f"warning: {flag}", file=sys.stderr)
    episodes = consecutive_warning_horizon(pred, test.y)
    rules = render_rules(tree)
    sys.stdout.write(rules)
    write_csv(sys.stdout, ["metric", "value"], list(metrics.as_dict().items()))
    if args.out:
        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{prefix}_rules.txt").write_text(rules, encoding="utf-8")
        write_csv(f"{prefix}_metrics.csv", ["metric", "value"], list(metrics.as_dict().items()))
        write_csv(f"{prefix}_episodes.csv", ["start", "length", "transition"],
                  [[e.start, e.length, int(e.transition)] for e in episodes])
    if args.model_out:
        save_model(args.model_out, dataclasses.replace(bundle, tree=tree))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
    p.add_argument("--stride", type=int, default=None, help="keep every n-th input row")


def _eval_data(p):
    p.add_argument("model", help="model file written by 'ipl fit'")
    p.add_argument("--train", help="training CSV")
    p.add_argument("--test", help="evaluation CSV")
    p.add_argument("--data", help="single CSV, split chronologically")
    p.add_argument("--split", help="sizes such as 0.8,0.2 or 0.6,0.2,0.2")
    p.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipl", description="Interpretable polynomial learning for time series.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic train/test CSVs")
    p.add_argument("--kind", choices=("benchmark", "prices", "alarm"), default="benchmark")
    p.add_argument("--t-train", type=int, default=4000)
    p.add_argument("--t-test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.add_argument("--temporal", action=argparse.BooleanOptionalAction, default=True,
                   help="include the autoregressive target term")
    p.add_argument("--add-irrelevant", action="store_true", help="append an unused x6 column")
    p.add_argument("--noisy-test", action="store_true", help="add noise to test targets too")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model and write the model file")
    p.add_argument("data", help="training CSV")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--summary", help="write the fit summary here (default stdout)")
    p.add_argument("--loss", choices=("squared", "hinge", "logistic"))
    p.add_argument("--degree", type=int)
    p.add_argument("--lx", type=int)
    p.add_argument("--ly", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--centers", choices=("first", "uniform", "subsample"))
    p.add_argument("--center-seed", dest="center_seed", type=int)
    p.add_argument("--no-scale", dest="scale", action="store_const", const=False)
    p.add_argument("--method", choices=("auto", "pinv", "admm"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol-primal", dest="tol_primal", type=float)
    p.add_argument("--tol-dual", dest="tol_dual", type=float)
    p.add_argument("--target")
    p.add_argument("--timestamp")
    p.add_argument("--features", help="comma-separated feature columns (default: all others)")
    p.add_argument("--direction-k", dest="direction_k", type=int, help="fit k-step price direction labels")
    p.add_argument("--split", help="fit on the first block of this chronological split")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="score a CSV with a fitted model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--use-kernel", action="store_true", help="use the kernel form instead of the polynomial")
    p.add_argument("--out", help="output path (default stdout)")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="ranked monomial importance table")
    p.add_argument("model")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--threshold", type=float, default=None, help="default: the model's threshold")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("perturb", help="noise-injection feature importance")
    _eval_data(p)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--features", help="comma-separated embedded feature names (default: all)")
    p.add_argument("--seed", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("sweep", help="classifier score against number of ranked terms")
    _eval_data(p)
    p.add_argument("--k", default="1..15", help="values of k, e.g. 1..15 or 1,3,5")
    p.add_argument("--metric", choices=("auc", "accuracy"), default="auc")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("warn", help="fit and evaluate a rule tree over top-ranked terms")
    _eval_data(p)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--pool-size", dest="pool_size", type=int, default=3)
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=5)
    p.add_argument("--model-out", help="write the model file with the tree attached")
    _common(p)
    p.set_defaults(func=cmd_warn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = None if args.command == "fit" else 1
    try:
        for name in ("trials", "top_k", "pool_size", "min_leaf"):
            if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
                raise InputError(f"--{name.replace('_', '-')} must be >= 1")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise InputError("--threads must be >= 1")
        if getattr(args, "stride", None) is not None and args.stride < 1:
            raise InputError("--stride must be >= 1")
        if getattr(args, "depth", 0) < 0:
            raise InputError("--depth must be >= 0")
        return args.func(args)
    except BrokenPipeError:
        sys.stderr.close()
        return EXIT_OK
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverDivergence, EvaluationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

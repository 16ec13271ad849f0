"""Command-line entry point.

Exit status: 0 on success, 1 on a domain error (bad data, invalid ranking,
...), 2 on a usage error. Every subcommand takes ``--seed`` and writes only to
paths named by its flags. ``--config FILE`` reads flat ``key = value`` lines
(keys are flag names without dashes); explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as D
from . import harness as Hn
from . import interpret as I
from . import models as M
from . import rank_aggregation as R
from . import weight_seed as W
from .errors import DomainError


def _csv_list(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


def _int_list(s: str) -> list[int]:
    return [int(p) for p in _csv_list(s)]


def _float_list(s: str) -> list[float]:
    return [float(p) for p in _csv_list(s)]


def _seed(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {s}")
    return v


def _read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _schema_args(p: argparse.ArgumentParser, features_required: bool = True) -> None:
    p.add_argument("--features", type=_csv_list, required=features_required,
                   help="comma-separated feature column names" + ("" if features_required else
                        " (default: taken from the profile / checkpoint)"))
    p.add_argument("--label", default="label", help="name of the 0/1 target column")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="random seed (64-bit)")
    common.add_argument("--config", help="flat key = value file with flag defaults")

    parser = argparse.ArgumentParser(prog="humanseed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("elicit", parents=[common], help="show sample rows and record one user's ranking")
    p.add_argument("--data", required=True)
    _schema_args(p)
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--profile", required=True, help="ranking profile JSON to append to")
    p.add_argument("--user-id", required=True)
    p.add_argument("--ranking", type=_csv_list, help="features, most important first (skips the prompt)")
    p.add_argument("--directions", help="either F comma-separated +1/-1 flags in feature order, "
                                        "or name:-1 pairs (unlisted features count as +1)")
    p.add_argument("--definitions", help="JSON file mapping feature name to a description")

    p = sub.add_parser("aggregate", parents=[common], help="aggregate a profile into seed weights")
    p.add_argument("--profile", required=True)
    p.add_argument("--method", choices=["kemeny", "mc4", "borda"], default="kemeny")
    p.add_argument("--iterations", type=int, default=100, help="MC4 power-iteration cap")
    p.add_argument("--out", required=True, help="seed weight file to write")

    p = sub.add_parser("seed", parents=[common], help="apply the sign-and-rescale step to raw scores")
    p.add_argument("--scores", type=_float_list, required=True)
    p.add_argument("--signs", type=_int_list, help="per-feature +1/-1 (default all +1)")
    p.add_argument("--profile", help="take signs from this profile's direction votes instead")
    p.add_argument("--features", type=_csv_list)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train an SVM or MLP and write a checkpoint")
    p.add_argument("--data", required=True)
    _schema_args(p)
    p.add_argument("--model", choices=["mlp", "svm"], default="mlp")
    p.add_argument("--init", choices=["random", "seeded"], default="random")
    p.add_argument("--weights", help="seed weight file (required with --init seeded)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--sample-size", type=int, help="draw a biased training subsample of this size")
    p.add_argument("--tp-rate", type=float, default=0.5)
    p.add_argument("--out", required=True, help="checkpoint file")
    p.add_argument("--metrics-out", help="optional JSON file for test metrics")

    p = sub.add_parser("explain", parents=[common], help="attributions for a trained MLP checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    _schema_args(p, features_required=False)
    p.add_argument("--layer", type=int, default=1)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--method", choices=["combined", "ig", "conductance", "all"], default="combined")
    p.add_argument("--max-rows", type=int, help="attribute a seeded random subset of this many rows")
    p.add_argument("--out", required=True)

    p = sub.add_parser("grid", parents=[common], help="run the experiment grid")
    p.add_argument("--data", required=True)
    _schema_args(p, features_required=False)
    p.add_argument("--profile", help="ranking profile (needed for seeded modes)")
    p.add_argument("--model", choices=["mlp", "svm"], default="mlp")
    p.add_argument("--sizes", type=_int_list, default=[500, 1000, 1500, 2000])
    p.add_argument("--tp-rates", type=_float_list, default=[0.2, 0.4, 0.6, 0.8])
    p.add_argument("--epochs", type=_int_list, default=[50, 200])
    p.add_argument("--inits", type=_csv_list, default=["random", "borda", "mc4", "kemeny"])
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--timing", action="store_true", help="fill wall_ms (makes output run-dependent)")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--report", help="seeded-vs-random comparison CSV")

    p = sub.add_parser("synth", parents=[common], help="generate synthetic data and simulated rankings")
    p.add_argument("--n-features", type=int, default=12)
    p.add_argument("--rows", type=int, default=6400)
    p.add_argument("--users", type=int, default=5)
    p.add_argument("--perturbation", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--data-out", required=True)
    p.add_argument("--profile-out", required=True)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = _read_config(known.config)
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = subparsers.choices.get(command)
    if sp is None:
        return
    dests = {a.dest: a for a in sp._actions}
    defaults = {}
    for k, v in values.items():
        if k not in dests:
            parser.error(f"--config: unknown option {k!r} for {command}")
        action = dests[k]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = action.type(v) if action.type else v
        action.required = False
    sp.set_defaults(**defaults)


def _load_data(args, features=None) -> D.Dataset:
    names = args.features or features
    if not names:
        raise DomainError("no feature list: pass --features")
    return D.load_csv(args.data, D.FeatureSchema(tuple(names), args.label))


def _parse_directions(spec: str | None, names: list[str]) -> tuple[int, ...]:
    if not spec:
        return tuple([1] * len(names))
    parts = _csv_list(spec)
    if all(":" not in p for p in parts):
        if len(parts) != len(names):
            raise DomainError(f"--directions gives {len(parts)} flags for {len(names)} features")
        return tuple(R._parse_direction(p) for p in parts)
    flags = dict.fromkeys(names, 1)
    for p in parts:
        name, _, val = p.partition(":")
        if name not in flags:
            raise DomainError(f"--directions names unknown feature {name!r}")
        flags[name] = R._parse_direction(val.strip())
    return tuple(flags[n] for n in names)


def cmd_elicit(args) -> int:
    ds = _load_data(args)
    names = list(ds.schema.feature_names)
    if args.rows < 1 or args.rows > len(ds):
        raise DomainError(f"--rows must be in 1..{len(ds)}, got {args.rows}")
    ranking = dirs = None
    if args.ranking is not None:
        ranking = R.Ranking.from_names(args.ranking, names)
        dirs = _parse_directions(args.directions, names)
    idx = np.sort(np.random.default_rng(args.seed).choice(len(ds), args.rows, replace=False))
    print(",".join(names + [ds.schema.label_name]))
    for i in idx:
        print(",".join(f"{v:g}" for v in ds.X[i]) + f",{int(ds.y[i])}")
    if args.definitions:
        defs = json.loads(Path(args.definitions).read_text(encoding="utf-8"))
        print()
        for n in names:
            print(f"{n}: {defs.get(n, '(no description)')}")

    path = Path(args.profile)
    doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {"features": names, "users": []}
    if doc.get("features") != names:
        raise DomainError(f"{path}: profile features {doc.get('features')} differ from {names}")
    if any(u.get("user_id") == args.user_id for u in doc["users"]):
        raise DomainError(f"{path}: user {args.user_id!r} already has an entry")

    if ranking is None:
        ranking, dirs = _prompt(names)

    doc["users"].append({
        "user_id": args.user_id,
        "ranking": ranking.names(names),
        "directions": {n: d for n, d in zip(names, dirs)},
    })
    R.profile_from_dict(doc)  # validate the whole file before writing
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"recorded ranking for {args.user_id}: {', '.join(ranking.names(names))}")
    return 0


def _prompt(names):
    print("\nRank all features in decreasing order of importance (comma-separated).")
    while True:
        try:
            line = input("ranking> ")
        except EOFError:
            raise DomainError("input ended before a ranking was entered") from None
        try:
            ranking = R.Ranking.from_names(_csv_list(line), names)
            break
        except DomainError as exc:
            print(f"  {exc}; try again")
    print("List features whose large values point to the negative class (comma-separated, may be empty).")
    while True:
        try:
            line = input("negative> ")
        except EOFError:
            line = ""
        neg = _csv_list(line)
        unknown = [n for n in neg if n not in names]
        if not unknown:
            return ranking, tuple(-1 if n in neg else 1 for n in names)
        print(f"  unknown features {unknown}; try again")


def cmd_aggregate(args) -> int:
    profile = R.load_profile(args.profile)
    method = R.canonical_method(args.method)
    agg = R.mc4(profile, args.iterations) if method == "mc4" else R.aggregate(profile, method)
    sw = W.seed_from_profile(profile, agg) if profile.directions is not None else W.seed_from_aggregate(
        agg, np.ones(profile.n_items, dtype=int), profile.feature_names)
    W.seed_to_file(sw, args.out)
    names = profile.feature_names
    print(f"{method} ranking: {', '.join(agg.ranking.names(names))}")
    if agg.cost is not None:
        print(f"total Kendall-tau distance: {agg.cost:g}")
    for n, v in zip(names, sw.values):
        print(f"  {n:>20s} {v:+.6f}")
    return 0


def cmd_seed(args) -> int:
    if args.profile:
        profile = R.load_profile(args.profile)
        signs = W.resolve_directions(W.DirectionVotes.from_profile(profile))
        names = args.features or profile.feature_names
    else:
        signs = args.signs if args.signs is not None else [1] * len(args.scores)
        names = args.features
    sw = W.seed_from_scores(args.scores, signs, "scores", names)
    W.seed_to_file(sw, args.out)
    print(" ".join(f"{v:+.6f}" for v in sw.values))
    return 0


def cmd_train(args) -> int:
    ds = _load_data(args)
    train_ds, test_ds = D.train_test_split(ds, args.train_fraction, args.seed)
    if args.sample_size:
        train_ds = D.biased_sample(train_ds, D.SampleSpec(args.sample_size, args.tp_rate, args.seed))
    train_ds, scaler = D.standardize(train_ds)
    test_ds = D.apply_scaler(test_ds, scaler)
    cfg = M.TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
                        rng_seed=args.seed, l2=args.l2)
    if args.init == "seeded":
        if not args.weights:
            raise DomainError("--init seeded needs --weights")
        cfg = M.seeded_config(cfg, args.weights, ds.schema.feature_names)
    model = M.train(train_ds, cfg, args.model)
    metrics = M.evaluate(model, test_ds)
    M.save_checkpoint(args.out, model, cfg, scaler, ds.schema.feature_names)
    summary = {"accuracy": metrics.accuracy, "f1": metrics.f1, "tp": metrics.tp, "fp": metrics.fp,
               "fn": metrics.fn, "tn": metrics.tn, "n_train": len(train_ds), "n_test": len(test_ds)}
    if args.metrics_out:
        Path(args.metrics_out).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"test accuracy {metrics.accuracy:.4f}  F1 {metrics.f1:.4f}  "
          f"(TP {metrics.tp} FP {metrics.fp} FN {metrics.fn} TN {metrics.tn})")
    if isinstance(model, M.LinearSVM):
        print("feature weights: " + ", ".join(
            f"{n}={w:+.4f}" for n, w in zip(ds.schema.feature_names, M.svm_feature_importance(model))))
    return 0


def cmd_explain(args) -> int:
    ckpt = M.load_checkpoint(args.checkpoint)
    if not isinstance(ckpt.model, M.MLP):
        raise DomainError("attributions need an MLP checkpoint; an SVM's importance is its weight vector")
    ds = _load_data(args, ckpt.feature_names)
    if ckpt.scaler is not None:
        ds = D.apply_scaler(ds, ckpt.scaler)
    if args.max_rows and args.max_rows < len(ds):
        idx = np.sort(np.random.default_rng(args.seed).choice(len(ds), args.max_rows, replace=False))
        ds = ds.subset(idx)
    res = I.dataset_average_attributions(ckpt.model, ds, args.layer, I.AttributionConfig(steps=args.steps))
    methods = {
        "combined": ["layer_feature_importance"],
        "ig": ["integrated_gradients"],
        "conductance": ["conductance"],
        "all": list(I.METHODS),
    }[args.method]
    rows = I.attribution_rows(res, ds.schema.feature_names, methods)
    I.write_attribution_csv(args.out, rows)
    print(f"wrote {len(rows)} attribution rows; mean completeness gap {res.completeness_gap:.2e}, "
          f"mean layer-{args.layer} conservation gap {res.conservation_gap:.2e}")
    return 0


def cmd_grid(args) -> int:
    profile = R.load_profile(args.profile) if args.profile else None
    features = args.features or (profile.feature_names if profile else None)
    ds = _load_data(args, features)
    if profile is not None and profile.feature_names != ds.schema.feature_names:
        raise DomainError("profile features do not match the data columns")
    cfg = Hn.GridConfig(
        sample_sizes=tuple(args.sizes), tp_rates=tuple(args.tp_rates), epoch_settings=tuple(args.epochs),
        init_modes=tuple(args.inits), repetitions=args.reps, base_seed=args.seed, model=args.model,
        learning_rate=args.lr, batch_size=args.batch_size, record_timing=args.timing,
    )
    result = Hn.run_grid(cfg, ds, profile, jobs=max(1, args.jobs))
    Hn.write_results_csv(result, args.out)
    n_skip = len(result.skipped)
    print(f"{len(result.records)} records ({n_skip} skipped) -> {args.out}")
    report = Hn.seeded_vs_random_report(result)
    if args.report:
        Hn.write_report_csv(report, args.report)
    for row in report.rows:
        print(f"  n={row['sample_size']} tp={row['tp_rate']:.2f} ep={row['epochs']} {row['aggregator']:>12s}: "
              f"acc {row['random_acc_mean']:.4f} -> {row['seeded_acc_mean']:.4f}  "
              f"win-rate {row['acc_win_rate']:.2f}")
    for msg in report.missing:
        print(f"  missing: {msg}", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    spec = Hn.SyntheticSpec(args.n_features, args.rows, None, args.noise, args.users, args.perturbation)
    ds, profile, _ = Hn.generate_synthetic(spec, args.seed)
    D.write_csv(ds, args.data_out)
    R.save_profile(profile, args.profile_out)
    print(f"{len(ds)} rows ({ds.n_positive} positive), {profile.n_users} simulated users")
    return 0


COMMANDS = {
    "elicit": cmd_elicit, "aggregate": cmd_aggregate, "seed": cmd_seed, "train": cmd_train,
    "explain": cmd_explain, "grid": cmd_grid, "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

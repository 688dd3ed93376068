"""Command line driver: ``rssloc {generate,split,fit,train,evaluate,reproduce}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import PlmParams
from .dataset import SplitSpec, generate_synthetic, load_csv, save_csv, split, split_indices
from .estimators import DnnEstimator, MleConfig, MleEstimator, ProximityEstimator
from .evaluation import evaluate, format_table, save_cdf_csv, save_report
from .mlp import MlpArch, TrainConfig, load_model, save_model, train
from .plm_fit import fit_ls, pool_fit_input
from .scenario import load_scenario, load_track, make_corridor_scenario, make_track, save_scenario, save_track

log = logging.getLogger("rssloc")

# Data-generating setup for the synthetic corridor reproduction.
CORRIDOR_PARAMS = PlmParams(p0=-30.9, beta=1.82, sigma2_db=11.83, d_cor=1.0)
CORRIDOR_TRACK = dict(x_start=9.0, x_end=79.32, step=0.12, y_lanes=[0.8, 1.2, 1.4, 1.8])


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def cmd_generate(args) -> None:
    scenario = load_scenario(args.scenario)
    params = PlmParams.from_dict(_read_json(args.params))
    track = load_track(args.track, scenario)
    data = generate_synthetic(scenario, params, track, _rng(args.seed, 0))
    save_csv(data, args.out)
    log.info("wrote %d samples to %s", len(data), args.out)


def cmd_split(args) -> None:
    # operates on raw rows so the split never rewrites numbers
    with open(args.data, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{args.data}: empty file")
    header, body = rows[0], rows[1:]
    train_idx, test_idx = split_indices(len(body), SplitSpec(args.fraction, args.seed))
    for path, idx in ((args.out_train, train_idx), (args.out_test, test_idx)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(body[i] for i in idx)
    log.info("split %d rows into %d / %d", len(body), len(train_idx), len(test_idx))


def cmd_fit(args) -> None:
    scenario = load_scenario(args.scenario)
    data = load_csv(args.data, scenario)
    res = fit_ls(pool_fit_input(data, args.su))
    out = res.to_dict()
    out["scope"] = "pooled" if args.su is None else f"su_{args.su}"
    _write_json(out, args.out)
    print(f"P0 = {res.p0_hat:.4f} dBm, beta = {res.beta_hat:.4f}, sigma2 = {res.sigma2_hat:.4f} dB^2")


def cmd_train(args) -> None:
    scenario = load_scenario(args.scenario)
    data = load_csv(args.data, scenario)
    cfg = dict(_read_json(args.config)) if args.config else {}
    arch_kw = cfg.pop("arch", {})
    cfg["seed"] = args.seed
    config = TrainConfig.from_dict(cfg)
    arch = MlpArch(input_dim=scenario.n_su, **arch_kw)
    model, history = train(data, config, arch, _rng(args.seed, 2))
    save_model(model, args.out)
    if args.log:
        _write_json(history.to_dict(), args.log)
    log.info("trained %d epochs, best epoch %d", history.epochs, history.best_epoch)


def _build_estimator(args, scenario):
    if args.estimator == "proximity":
        return ProximityEstimator(scenario)
    if args.estimator == "mle":
        if not args.mle_config:
            raise UsageError("--estimator mle requires --mle-config")
        return MleEstimator(scenario, MleConfig.from_dict(_read_json(args.mle_config)))
    if not args.model:
        raise UsageError("--estimator dnn requires --model")
    return DnnEstimator(scenario, load_model(args.model))


def cmd_evaluate(args) -> None:
    scenario = load_scenario(args.scenario)
    data = load_csv(args.data, scenario)
    est = _build_estimator(args, scenario)
    report = evaluate(est, data, planar=args.planar)
    save_report(report, args.out)
    if args.cdf_csv:
        save_cdf_csv(report, args.cdf_csv)
    print(format_table([report]))


def run_paper_synthetic(seed: int, out_dir, max_epochs: int | None = None,
                        planar: bool = False) -> dict:
    """Synthetic corridor pipeline: generate, split 75/25, fit, train, evaluate all estimators."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = make_corridor_scenario()
    params = CORRIDOR_PARAMS
    track = make_track(scenario, dedup_turnaround=False, **CORRIDOR_TRACK)
    save_scenario(scenario, out / "scenario.json")
    _write_json(params.to_dict(), out / "params.json")
    save_track(track, out / "track.json")

    data = generate_synthetic(scenario, params, track, _rng(seed, 0))
    train_set, test_set = split(data, SplitSpec(0.75, seed))
    save_csv(data, out / "data.csv")
    save_csv(train_set, out / "train.csv")
    save_csv(test_set, out / "test.csv")
    log.info("dataset: %d samples, %d train / %d test", len(data), len(train_set), len(test_set))

    fit = fit_ls(pool_fit_input(train_set))
    _write_json(fit.to_dict(), out / "plm.json")

    config = TrainConfig(seed=seed)
    if max_epochs is not None:
        config = TrainConfig(seed=seed, max_epochs=max_epochs)
    model, history = train(train_set, config, MlpArch(scenario.n_su), _rng(seed, 2))
    save_model(model, out / "model.bin")
    _write_json(history.to_dict(), out / "train_log.json")
    log.info("trained %d epochs (best %d)", history.epochs, history.best_epoch)

    mle_cfg = MleConfig(params=params)
    _write_json(mle_cfg.to_dict(), out / "mle.json")
    estimators = [
        DnnEstimator(scenario, model),
        MleEstimator(scenario, mle_cfg),
        ProximityEstimator(scenario),
    ]
    reports = []
    for est in estimators:
        rep = evaluate(est, test_set, planar=planar)
        save_report(rep, out / f"report_{est.name}.json")
        save_cdf_csv(rep, out / f"cdf_{est.name}.csv")
        reports.append(rep)

    summary = {
        "preset": "paper-synthetic",
        "seed": seed,
        "planar": planar,
        "n_samples": len(data),
        "n_train": len(train_set),
        "n_test": len(test_set),
        "plm_fit": fit.to_dict(),
        "training": {
            "epochs": history.epochs,
            "best_epoch": history.best_epoch,
            "best_val_loss": history.val_loss[history.best_epoch],
        },
        "estimators": {r.estimator: r.summary() for r in reports},
    }
    _write_json(summary, out / "report.json")
    return summary


def cmd_reproduce(args) -> None:
    summary = run_paper_synthetic(args.seed, args.out_dir, args.max_epochs, args.planar)
    stats = summary["estimators"]
    print(f"{'Estimator':<12}{'Mean LE':>11}{'SD':>11}{'Max. LE':>11}{'Min. LE':>11}")
    for name, s in stats.items():
        print(f"{name:<12}{s['mean']:>9.4f} m{s['sd']:>9.4f} m{s['max']:>9.4f} m{s['min']:>9.4f} m")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rssloc", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a labeled RSS dataset")
    g.add_argument("--scenario", required=True)
    g.add_argument("--params", required=True, help="JSON with p0, beta, sigma2_db, d_cor")
    g.add_argument("--track", required=True, help="JSON with points, or x_start/x_end/step/y_lanes")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("split", help="seeded shuffle and train/test split of a dataset CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--fraction", type=float, default=0.75)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out-train", required=True)
    s.add_argument("--out-test", required=True)
    s.set_defaults(func=cmd_split)

    f = sub.add_parser("fit", help="least-squares path-loss fit")
    f.add_argument("--data", required=True)
    f.add_argument("--scenario", required=True)
    f.add_argument("--out", required=True)
    scope = f.add_mutually_exclusive_group()
    scope.add_argument("--su", type=int, default=None, help="fit a single sensing unit")
    scope.add_argument("--pooled", action="store_true", help="pool all sensing units (default)")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("train", help="train the MLP position regressor")
    t.add_argument("--data", required=True)
    t.add_argument("--scenario", required=True)
    t.add_argument("--config", help="JSON overriding TrainConfig fields; optional 'arch' object")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="write the per-epoch training log here")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="localization errors, statistics and CDF")
    e.add_argument("--data", required=True)
    e.add_argument("--scenario", required=True)
    e.add_argument("--estimator", required=True, choices=["proximity", "mle", "dnn"])
    e.add_argument("--model")
    e.add_argument("--mle-config")
    e.add_argument("--out", required=True)
    e.add_argument("--cdf-csv")
    e.add_argument("--planar", action="store_true", help="2-D errors (ignore z)")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("reproduce", help="end-to-end synthetic corridor experiment")
    r.add_argument("--preset", required=True, choices=["paper-synthetic"])
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--max-epochs", type=int, default=None)
    r.add_argument("--planar", action="store_true")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"rssloc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

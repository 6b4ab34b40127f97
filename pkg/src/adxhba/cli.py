"""Command-line entry point: ``python -m adxhba <command>``.

Commands
--------
run       one publisher against one advertiser for one seed
sweep     every advertiser parameter point against every publisher
nn        the neural-net adversary protocols (single and mixture)
estimate  the random-querying tail estimator against a named distribution
report    re-aggregate one or more result CSVs

Shared flags are ``--config`` (YAML or JSON, keys as in
:class:`~adxhba.harness.ExperimentConfig`), ``--seed`` (base seed),
``--desk`` (desk-scale preset) and ``--out`` (output directory).  Failures
print a JSON error object on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .advertisers import AdvertiserSpec, random_spec
from .distributions import DISTRIBUTIONS, BidDistribution, revenue_argmax
from .harness import (
    ADVERTISERS,
    INTEGER_PARAMS,
    PUBLISHERS,
    ExperimentConfig,
    MetricsReport,
    emit_results,
    run_matchup,
    run_nn_protocol,
    run_sweep,
)
from .km import RandomKM, bidder_env

INT_KEYS = INTEGER_PARAMS | {"hidden_layers", "hidden_units", "window", "train_first"}


def parse_params(text: str | None) -> dict:
    """``"mu=0.45,var=4e-6"`` -> ``{"mu": 0.45, "var": 4e-06}``."""
    out = {}
    for item in filter(None, (text or "").split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"parameter {item!r} is not of the form name=value")
        key = key.strip()
        out[key] = int(value) if key in INT_KEYS else float(value)
    return out


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, desk=args.desk)
    else:
        cfg = ExperimentConfig.desk() if args.desk else ExperimentConfig.full()
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    if args.out:
        cfg.out = args.out
    return cfg


def make_spec(kind: str, params: dict) -> AdvertiserSpec:
    if kind in DISTRIBUTIONS:
        return random_spec(kind, **params)
    return AdvertiserSpec(kind, params)


def cmd_run(args) -> dict:
    cfg = load_config(args)
    spec = make_spec(args.advertiser, parse_params(args.params))
    seed = cfg.seeds[0]
    log, row, pub = run_matchup(cfg, spec, args.publisher, seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.publisher}_{spec.label}_{seed}"
    log.write_csv(out / f"{stem}_episode.csv")
    report = MetricsReport([row])
    emit_results(report, out / f"{stem}_result.csv")
    files = [str(out / f"{stem}_episode.csv"), str(out / f"{stem}_result.csv")]
    if hasattr(pub, "write_beliefs"):
        pub.write_beliefs(out / f"{stem}_beliefs.csv")
        files.append(str(out / f"{stem}_beliefs.csv"))
    print(f"{row.publisher} vs {row.advertiser}({row.param_id}) seed {seed}: revenue {row.revenue:.4f}, "
          f"online-opt {row.online_opt_revenue:.4f}, ratio {row.competitive_ratio:.4f}")
    return {"files": files, "competitive_ratio": row.competitive_ratio}


def cmd_sweep(args) -> dict:
    cfg = load_config(args)
    if args.advertisers:
        cfg.advertisers = args.advertisers.split(",")
    if args.publishers:
        cfg.publishers = args.publishers.split(",")
    if args.workers:
        cfg.workers = args.workers
    cfg.__post_init__()

    def progress(i, n, cell):
        if not args.quiet:
            print(f"[{i}/{n}] {cell.label}({cell.param_id})", file=sys.stderr)

    report = run_sweep(cfg, progress)
    csv_path, json_path = emit_results(report, Path(cfg.out) / "sweep.csv", Path(cfg.out) / "sweep.json")
    print(report.table(), end="")
    return {"files": [str(csv_path), str(json_path)], "errors": len(report.errors)}


def cmd_nn(args) -> dict:
    cfg = load_config(args)
    depths = [int(d) for d in args.depths.split(",")] if args.depths else None
    modes = ["single", "mixture"] if args.mode == "both" else [args.mode]
    files = []
    for mode in modes:
        report = run_nn_protocol(mode, cfg, depths)
        base = Path(cfg.out) / f"nn_{mode}"
        csv_path, json_path = emit_results(report, base.with_suffix(".csv"), base.with_suffix(".json"))
        mse = Path(cfg.out) / f"nn_{mode}_mse.csv"
        mse.write_text("hidden_layers,seed,trained_against,initial_mse,final_mse\n" + "".join(
            f"{d},{s},{p},{a:.9g},{b:.9g}\n" for d, s, p, a, b in report.extras["nn_mse"]))
        files += [str(csv_path), str(json_path), str(mse)]
        print(f"{mode}:")
        print(report.table(), end="")
    return {"files": files}


def cmd_estimate(args) -> dict:
    dist = BidDistribution(args.dist, **parse_params(args.params))
    seed = args.seed or 0
    streams = np.random.default_rng(seed).spawn(2)
    km = RandomKM(args.k, args.l, args.k_c, dist.grid, streams[0], args.estimator)
    env = bidder_env(dist, streams[1])
    while not km.done:
        km.observe(env(km.next_reserve()))
    out = Path(args.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    km.write_trace(out / f"estimate_{args.dist}_{seed}.csv")
    tail = dist.tail()
    best = revenue_argmax(tail, dist.grid)
    rev = np.arange(dist.grid + 1) / dist.grid * tail
    result = {"distribution": args.dist, "params": parse_params(args.params), "seed": seed,
              "reserve": km.result / dist.grid, "phase1_reserve": km.phase1_price / dist.grid,
              "optimal_reserve": best / dist.grid, "revenue_fraction": float(rev[km.result] / rev[best])}
    (out / f"estimate_{args.dist}_{seed}.json").write_text(json.dumps(result, indent=2) + "\n")
    print(json.dumps(result))
    return {"files": [str(out / f"estimate_{args.dist}_{seed}.csv"), str(out / f"estimate_{args.dist}_{seed}.json")]}


def cmd_report(args) -> dict:
    report = MetricsReport()
    for path in args.csv:
        report.extend(MetricsReport.from_csv(Path(path).read_text()))
    out = Path(args.out or "results")
    csv_path, json_path = emit_results(report, out / "report.csv", out / "report.json")
    print(report.table(), end="")
    return {"files": [str(csv_path), str(json_path)]}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON experiment configuration")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--desk", action="store_true", help="start from the desk-scale preset")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="adxhba", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="one matchup")
    p.add_argument("--advertiser", required=True, choices=sorted(set(ADVERTISERS) | set(DISTRIBUTIONS) | {"nn"}))
    p.add_argument("--params", help="advertiser parameters, e.g. mu=0.45,var=4e-6")
    p.add_argument("--publisher", default="hba-km", choices=PUBLISHERS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep")
    p.add_argument("--advertisers", help="comma-separated subset of " + ",".join(ADVERTISERS))
    p.add_argument("--publishers", help="comma-separated subset of " + ",".join(PUBLISHERS))
    p.add_argument("--workers", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("nn", parents=[common], help="neural-net adversary protocols")
    p.add_argument("--mode", choices=["single", "mixture", "both"], default="both")
    p.add_argument("--depths", help="hidden-layer counts, e.g. 1,2,3,4")
    p.set_defaults(func=cmd_nn)

    p = sub.add_parser("estimate", parents=[common], help="random-querying tail estimate")
    p.add_argument("--dist", required=True, choices=sorted(DISTRIBUTIONS))
    p.add_argument("--params", help="distribution parameters, e.g. high=0.8")
    p.add_argument("--k", type=int, default=2000)
    p.add_argument("--l", type=int, default=20)
    p.add_argument("--k-c", dest="k_c", type=int, default=500)
    p.add_argument("--estimator", choices=["isotonic", "ratio"], default="isotonic")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", parents=[common], help="re-aggregate result CSVs")
    p.add_argument("csv", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

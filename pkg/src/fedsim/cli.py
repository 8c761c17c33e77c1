"""Command line entry point: ``fedsim run | compare | gen-data | inspect``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import engine
from .config import ExperimentSpec, load_spec
from .errors import ConfigError, DivergenceError
from .params import save_checkpoint
from .tasks import export_federation

logger = logging.getLogger("fedsim")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

ROUNDS_SUFFIX = ".rounds.jsonl"


def trapezoid_auc(losses: list[float]) -> float:
    return float(sum(0.5 * (a + b) for a, b in zip(losses[:-1], losses[1:])))


def summarize(losses: list[float], threshold: float | None = None) -> dict:
    best = min(range(len(losses)), key=lambda r: (losses[r], r))
    hit = None
    if threshold is not None:
        hit = next((r for r, v in enumerate(losses) if v <= threshold), None)
    return {
        "rounds": len(losses),
        "final_loss": losses[-1],
        "best_round": best,
        "best_loss": losses[best],
        "auc": trapezoid_auc(losses),
        "loss_threshold": threshold,
        "rounds_to_threshold": None if hit is None else hit + 1,
    }


def _load_spec(args) -> ExperimentSpec:
    spec = load_spec(args.config)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    return spec


def cmd_run(args) -> int:
    spec = _load_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, cfg in spec.configs:
        logger.info("running %s (%s, %d rounds)", name, cfg.strategy.strategy, cfg.rounds)
        result = engine.simulate(cfg, workers=args.workers)
        engine.write_records(out / f"{name}{ROUNDS_SUFFIX}", result.records)
        engine.write_records(out / f"{name}.timing.jsonl", result.records, include_timing=True)
        save_checkpoint(out / f"{name}.params", result.final_model)
        summary[name] = {
            "strategy": cfg.strategy.strategy,
            "selection_rule": cfg.selection_rule,
            **summarize([r.global_model_loss for r in result.records], spec.loss_threshold),
        }
        logger.info("%s: final loss %.6g", name, summary[name]["final_loss"])
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _result_streams(out: Path) -> dict[str, list[engine.RoundRecord]]:
    streams = {}
    for path in sorted(out.glob(f"*{ROUNDS_SUFFIX}")):
        streams[path.name[: -len(ROUNDS_SUFFIX)]] = engine.read_records(path)
    return streams


def cmd_compare(args) -> int:
    out = Path(args.out)
    streams = _result_streams(out)
    if len(streams) < 2:
        print(f"error: need at least two result streams in {out}, found {len(streams)}", file=sys.stderr)
        return EXIT_USAGE

    header = f"{'name':<24} {'final_loss':>14} {'best_round':>10} {'auc':>14}"
    print(header)
    print("-" * len(header))
    rows = []
    for name, records in streams.items():
        s = summarize([r.global_model_loss for r in records])
        print(f"{name:<24} {s['final_loss']:>14.6g} {s['best_round']:>10d} {s['auc']:>14.6g}")
        rows.extend((r.round, name, repr(r.global_model_loss)) for r in records)

    with open(out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "strategy", "loss"])
        writer.writerows(sorted(rows, key=lambda row: (row[0], row[1])))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    spec = _load_spec(args)
    _, cfg = spec.configs[0]
    clients, test = engine.build_federation(cfg)
    paths = export_federation(clients, test, args.out)
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    streams = _result_streams(Path(args.out))
    if args.name is not None:
        streams = {k: v for k, v in streams.items() if k == args.name}
    if not streams:
        print(f"error: no matching result streams in {args.out}", file=sys.stderr)
        return EXIT_USAGE
    for name, records in streams.items():
        match = [r for r in records if r.round == args.round]
        if not match:
            print(f"error: {name} has no round {args.round}", file=sys.stderr)
            return EXIT_USAGE
        rec = match[0]
        print(f"{name} round {rec.round}: global loss {rec.global_model_loss:.6g}, selected {rec.selected_ids}")
        print(f"  {'id':>4} {'size':>6} {'cost':>12} {'p':>10} {'d':>10} {'i':>10} {'weight':>10}")
        for c in rec.clients:
            flag = " (stale)" if c.stale else ""
            print(f"  {c.id:>4} {c.size:>6} {c.cost:>12.6g} {c.p:>10.6f} {c.d:>10.6f} {c.i:>10.6f} {c.weight:>10.6f}{flag}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description="Federated aggregation strategy simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every config in an experiment spec")
    p.add_argument("--config", required=True, help="experiment spec (YAML)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--workers", type=int, default=1, help="threads for local training")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="tabulate result streams in an output directory")
    p.add_argument("--out", required=True, help="directory written by 'run'")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-data", help="export the federation of a spec as CSV files")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("inspect", help="print per-client weight breakdowns for one round")
    p.add_argument("--out", required=True, help="directory written by 'run'")
    p.add_argument("--round", type=int, required=True)
    p.add_argument("--name", default=None, help="restrict to one config name")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

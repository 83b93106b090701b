"""``retrostar`` command line: benchmark grids, single searches, data and model tools.

Exit codes: 0 on success, 1 when a run fails at runtime (I/O, bad data),
2 on usage errors. ``RETROSTAR_LOG`` sets the logging level (e.g. DEBUG).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .domains.cache import CacheError, load_cache, write_blocks, write_cache
from .domains.htn import TEST_SEEDS, TRAIN_SEEDS, HtnParams, generate_htn, generate_htn_table, htn_route_dataset
from .domains.routes import RouteDataset, extract_route_dataset
from .search import HaltMode
from .value import TrainConfig, load_oracle, mean_losses, train

log = logging.getLogger("retrostar")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return vals


def _range(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    try:
        lo, hi = (int(p) for p in parts)
    except ValueError:
        lo, hi = (float(p) for p in parts)
    return lo, hi


def _add_htn_args(p: argparse.ArgumentParser) -> None:
    d = HtnParams()
    g = p.add_argument_group("synthetic HTN instances")
    g.add_argument("--depth", type=int, default=d.depth)
    g.add_argument("--or-branch", type=_range, default=d.or_branch, metavar="LO,HI",
                   help="methods per task")
    g.add_argument("--and-branch", type=_range, default=d.and_branch, metavar="LO,HI",
                   help="subtasks per method")
    g.add_argument("--primitive-prob", type=float, default=d.primitive_prob)
    g.add_argument("--cost-range", type=_range, default=d.cost_range, metavar="LO,HI")


def _htn_params(args, seed: int = 0) -> HtnParams:
    return HtnParams(seed, args.depth, tuple(args.or_branch), tuple(args.and_branch),
                     args.primitive_prob, tuple(float(c) for c in args.cost_range))


def _add_search_args(p: argparse.ArgumentParser, multi: bool) -> None:
    if multi:
        p.add_argument("--algo", required=True,
                       help=f"comma-separated subset of {','.join(bench.ALGORITHMS)}")
        p.add_argument("--limit", type=_int_list, default=[500],
                       help="call budget(s), comma-separated (default 500)")
    else:
        p.add_argument("--algo", default="retrostar", choices=bench.ALGORITHMS)
        p.add_argument("--limit", type=int, default=500, help="expansion-call budget (default 500)")
    p.add_argument("--halt", choices=[m.value for m in HaltMode], default=HaltMode.FIRST_SOLUTION.value)
    p.add_argument("--oracle", default="zero", help="zero | table:PATH | model:PATH")
    p.add_argument("--cache", help="expansion cache (JSON Lines)")
    p.add_argument("--blocks", help="building-block list, one id per line")
    p.add_argument("--seed", type=int, default=0,
                   help="RNG seed for stochastic searchers; HTN instance seed for `solve`")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrostar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="benchmark an algorithm x instance x budget grid")
    _add_search_args(p, multi=True)
    p.add_argument("--targets", help="comma-separated targets or @FILE (one per line); with --cache")
    p.add_argument("--seeds", type=int, default=len(TEST_SEEDS),
                   help="number of HTN instances, seeds starting at --seed-start (default 200)")
    p.add_argument("--seed-start", type=int, default=TEST_SEEDS[0])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV output path")
    _add_htn_args(p)

    p = sub.add_parser("solve", help="plan for one target and print the route")
    _add_search_args(p, multi=False)
    p.add_argument("--target", help="target id (required with --cache)")
    p.add_argument("--json", action="store_true", help="print the route as JSON")
    _add_htn_args(p)

    p = sub.add_parser("extract-routes", help="build a route dataset from a reactions file")
    p.add_argument("--reactions", required=True,
                   help="reactions in expansion-cache JSON Lines layout (product -> proposals)")
    p.add_argument("--blocks", required=True)
    p.add_argument("--mode", choices=("cost", "length"), default="cost")
    p.add_argument("--feature-dim", type=int, default=2048)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-value", help="fit a value model on a route dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="route dataset written by extract-routes")
    src.add_argument("--htn", action="store_true",
                     help=f"use HTN instances from the training seeds {TRAIN_SEEDS[0]}..{TRAIN_SEEDS[-1]}")
    p.add_argument("--feature-dim", type=int, default=256, help="feature width for --htn")
    d = TrainConfig()
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--hidden", type=int, default=d.hidden_dim)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--lam", type=float, default=d.lam)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_htn_args(p)

    p = sub.add_parser("gen-htn", help="write a synthetic HTN instance as cache + blocks files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    _add_htn_args(p)
    return parser


def _usage(parser: argparse.ArgumentParser, msg: str) -> int:
    parser.print_usage(sys.stderr)
    print(f"retrostar: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _read_targets(source: str | None) -> tuple[str, ...]:
    if not source:
        return ()
    if source.startswith("@"):
        lines = Path(source[1:]).read_text(encoding="utf-8").splitlines()
        return tuple(t.strip() for t in lines if t.strip() and not t.startswith("#"))
    return tuple(t.strip() for t in source.split(",") if t.strip())


def cmd_run(args, parser) -> int:
    algos = tuple(a.strip() for a in args.algo.split(",") if a.strip())
    try:
        config = bench.BenchmarkConfig(
            algorithms=algos, call_limits=tuple(args.limit), halt_mode=args.halt, oracle=args.oracle,
            htn=None if args.cache else _htn_params(args),
            seeds=tuple(range(args.seed_start, args.seed_start + args.seeds)),
            cache=args.cache, blocks=args.blocks, targets=_read_targets(args.targets),
            out=args.out, rng_seed=args.seed, workers=args.workers,
        )
    except (bench.UsageError, ValueError) as exc:
        return _usage(parser, str(exc))
    # with no --out the CSV owns stdout and the summary goes to stderr
    echo = print if args.out else (lambda msg: print(msg, file=sys.stderr))
    rows, text = bench.run_benchmark(config, echo=echo)
    if not args.out:
        sys.stdout.write(text)
    bad = bench.check_monotone(rows)
    if bad:
        log.warning("%d budget-monotonicity violations, first: %s", len(bad), bad[0])
    return EXIT_OK


def cmd_solve(args, parser) -> int:
    if args.cache:
        if not args.target:
            return _usage(parser, "--target is required with --cache")
        instance = load_cache(args.cache, args.blocks).instance(args.target)
        iid = args.target
    else:
        instance = generate_htn(_htn_params(args, args.seed))
        iid = instance.name
    oracle = load_oracle(args.oracle)
    out = bench.run_algorithm(args.algo, instance, args.limit, HaltMode(args.halt), oracle, args.seed)
    if out.route is None:
        print(f"{iid}: {out.status.value} after {out.calls_used} calls, no route")
        return EXIT_OK
    if args.json:
        print(json.dumps(out.route.to_dict(), indent=2))
    else:
        print(f"{iid}: {out.status.value} after {out.calls_used} calls")
        print(out.route.format())
    return EXIT_OK


def _reactions_from_cache(path: str):
    cache = load_cache(path)
    return [(mol, p.reactants, p.cost, p.reaction_id) for mol, p in cache.expand.reactions()]


def cmd_extract(args, parser) -> int:
    from .domains.cache import load_blocks

    dataset = extract_route_dataset(_reactions_from_cache(args.reactions), load_blocks(args.blocks),
                                    mode=args.mode, feature_dim=args.feature_dim)
    dataset.save(args.out)
    print(f"{len(dataset)} route records -> {args.out}")
    return EXIT_OK


def cmd_train(args, parser) -> int:
    if args.data:
        dataset = RouteDataset.load(args.data)
    else:
        dataset = htn_route_dataset(_htn_params(args), TRAIN_SEEDS, args.feature_dim)
    config = TrainConfig(epsilon=args.epsilon, lam=args.lam, learning_rate=args.lr, epochs=args.epochs,
                         batch_size=args.batch_size, rng_seed=args.seed, hidden_dim=args.hidden)
    tuples = dataset.to_tuples()
    model = train(tuples, config)
    model.save(args.out)
    reg, con = mean_losses(model, tuples, config.epsilon)
    print(f"trained on {len(tuples)} records: objective {model.history[0]:.4g} -> {model.history[-1]:.4g} "
          f"(reg {reg:.4g}, con {con:.4g}) -> {args.out}")
    return EXIT_OK


def cmd_gen_htn(args, parser) -> int:
    params = _htn_params(args, args.seed)
    root, table, primitives = generate_htn_table(params)
    instance = generate_htn(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"htn-{params.rng_seed}"
    write_cache(out / f"{stem}.cache.jsonl", table)
    write_blocks(out / f"{stem}.blocks.txt", primitives)
    meta = {"target": root, "optimal_cost": instance.optimal_cost, **instance.metadata}
    (out / f"{stem}.meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"{stem}: {len(table)} tasks, {len(primitives)} primitives, optimum {instance.optimal_cost:.6g} "
          f"-> {out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "solve": cmd_solve, "extract-routes": cmd_extract,
            "train-value": cmd_train, "gen-htn": cmd_gen_htn}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("RETROSTAR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except (OSError, CacheError, ValueError, KeyError) as exc:
        print(f"retrostar: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

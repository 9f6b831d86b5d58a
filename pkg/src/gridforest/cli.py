"""Command-line entry point: ``gridforest <command> ...``.

Exit codes: 0 success, 1 infeasible or no solution, 2 bad input. Errors are
also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from gridforest import __version__
from gridforest.errors import (
    GridForestError,
    InvalidParams,
    KappaTooLarge,
    NonPositiveBase,
    NoSwapAvailable,
    ParseError,
    TooLarge,
    UnknownBus,
    UnknownEdge,
    ValidationError,
)
from gridforest.forward import MODES, SolverOptions, forward_solve
from gridforest.netgen import WsParams, generate_ws
from gridforest.network import atomic_write_text, dumps_network, load_network, validate_network
from gridforest.oracle import oracle_problem1, oracle_problem2
from gridforest.power import evaluate, exact_loss
from gridforest.report import check_warmstart, report_from_evaluation, warmstart_from_report
from gridforest.search import SearchOptions, permutation_search

log = logging.getLogger("gridforest")

EXIT_OK, EXIT_NO_SOLUTION, EXIT_INPUT = 0, 1, 2
INPUT_ERRORS = (
    ParseError,
    ValidationError,
    NonPositiveBase,
    UnknownBus,
    UnknownEdge,
    InvalidParams,
    KappaTooLarge,
    TooLarge,
    NoSwapAvailable,
)
CSV_COLUMNS = (
    "network",
    "problem",
    "mode",
    "kappa",
    "seed",
    "loss_kw",
    "loss_fraction",
    "feasible",
    "iterations",
    "time_s",
)


class UsageError(Exception):
    pass


def _ids(text: str | None) -> list[str] | None:
    if text is None:
        return None
    ids = [t.strip() for t in text.split(",") if t.strip()]
    if not ids:
        raise UsageError("expected a comma-separated list of bus ids")
    return ids


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _search_options(args) -> SearchOptions:
    schedule = None
    if args.epsilon_schedule:
        try:
            start, end = (float(v) for v in args.epsilon_schedule.split(","))
        except ValueError:
            raise UsageError("--epsilon-schedule expects START,END") from None
        schedule = (start, end)
    return SearchOptions(
        kappa=args.kappa,
        target_p=args.target_p,
        max_iters=args.max_iters,
        epsilon_rel=args.epsilon_rel,
        epsilon_schedule=schedule,
        stall_limit=args.stall_limit,
        seed=args.seed,
        jobs=args.jobs,
        mode=args.mode,
        warm_set=tuple(_ids(args.warm_set)) if args.warm_set else None,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    net = load_network(args.network)
    issues = validate_network(net)
    doc = {
        "network": net.name,
        "buses": net.n_buses,
        "edges": net.n_edges,
        "generators": list(net.generator_pool),
        "issues": [i.to_dict() for i in issues],
    }
    _emit(_json(doc), args.out)
    return EXIT_INPUT if issues else EXIT_OK


def cmd_solve(args) -> int:
    net = load_network(args.network)
    active = _ids(args.generators) or list(net.generator_pool)
    report = forward_solve(net, active, SolverOptions(mode=args.mode, seed=args.seed))
    _emit(report.to_json(), args.out)
    return EXIT_OK if report.feasible else EXIT_NO_SOLUTION


def cmd_search(args) -> int:
    net = load_network(args.network)
    report = permutation_search(net, _search_options(args))
    _emit(report.to_json(), args.out)
    return EXIT_OK if report.feasible else EXIT_NO_SOLUTION


def cmd_oracle(args) -> int:
    net = load_network(args.network)
    if args.kappa is not None:
        result = oracle_problem2(net, args.kappa)
        problem = 2
    else:
        result = oracle_problem1(net, _ids(args.generators) or net.generator_pool)
        problem = 1
    report = report_from_evaluation(
        net, result.evaluation, problem=problem, mode="oracle", seed=0, active_set=result.active_set
    )
    report.stats = {
        "n_enumerated": result.n_enumerated,
        "n_feasible": result.n_feasible,
        "n_subsets": result.n_subsets,
    }
    if args.kappa is not None:
        report.stats["kappa"] = args.kappa
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    params = WsParams(
        n_nodes=args.n_nodes,
        mean_degree=args.degree,
        rewire_prob=args.rewire_prob,
        n_sources=args.sources,
        demand_total_kw=args.demand_kw,
        generation_ratio=args.ratio,
        seed=args.seed,
        hubs=args.hubs,
        name=args.name,
    )
    _emit(dumps_network(generate_ws(params)), args.out)
    return EXIT_OK


def _bench_job(job: tuple) -> dict:
    path, problem, mode, kappa, seed, search_kw = job
    net = load_network(path)
    t0 = time.perf_counter()
    row = {"network": net.name, "problem": problem, "mode": mode, "kappa": kappa, "seed": seed}
    try:
        if problem == 1:
            report = forward_solve(net, net.generator_pool, SolverOptions(mode=mode, seed=seed))
            iterations = 0
        else:
            report = permutation_search(net, SearchOptions(kappa=kappa, seed=seed, mode=mode, **search_kw))
            iterations = report.stats["iterations"]
        loss, frac, feasible = report.exact_loss_kw, report.loss_fraction, report.feasible
    except GridForestError as exc:
        log.warning("bench %s seed %s: %s", net.name, seed, exc)
        loss, frac, feasible, iterations = None, None, False, 0
    row.update(
        loss_kw="" if loss is None else repr(loss),
        loss_fraction="" if frac is None else repr(frac),
        feasible=int(bool(feasible)),
        iterations=iterations,
        time_s=f"{time.perf_counter() - t0:.6f}",
    )
    return row


def _append_csv(path: Path, rows: list[dict]) -> None:
    """Append rows, keeping the file's existing contents; header only for a new file."""
    existing = path.read_text(encoding="utf-8") if path.exists() else ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if not existing:
        writer.writeheader()
    writer.writerows(rows)
    atomic_write_text(path, existing + buf.getvalue())


def cmd_bench(args) -> int:
    source = Path(args.networks)
    files = sorted(source.glob("*.json")) if source.is_dir() else [source]
    if not files:
        raise UsageError(f"no network files in {source}")
    try:
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError:
        raise UsageError("--seeds expects comma-separated integers") from None
    if args.problem == 2 and args.kappa is None:
        raise UsageError("--problem 2 needs --kappa")
    search_kw = {"target_p": args.target_p, "max_iters": args.max_iters, "epsilon_rel": args.epsilon_rel}
    jobs = [(str(f), args.problem, args.mode, args.kappa, s, search_kw) for f in files for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_bench_job, jobs))
    else:
        rows = [_bench_job(j) for j in jobs]
    _append_csv(Path(args.csv), rows)
    return EXIT_OK if all(r["feasible"] for r in rows) else EXIT_NO_SOLUTION


def cmd_export_warmstart(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read report {args.report}: {exc}") from exc
    if not isinstance(report, dict) or "configuration" not in report:
        raise ParseError("report: missing configuration")
    ws = warmstart_from_report(report)
    if args.network:
        net = load_network(args.network)
        problems = check_warmstart(ws, net)
        if problems:
            raise ValidationError("warm start", "; ".join(problems))
        ev = evaluate(net, ws.configuration())
        if ev.solution.converged:
            ws.loss_kw = exact_loss(ev.solution, net)
    _emit(ws.to_json(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridforest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, network=True):
        if network:
            p.add_argument("--network", required=True, help="network JSON file")
        p.add_argument("--out", help="output file (default: stdout)")

    def seeded(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--mode", choices=MODES, default="greedy")

    def search_flags(p, kappa_required):
        p.add_argument("--kappa", type=int, required=kappa_required)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--target-p", type=float, default=0.95)
        p.add_argument("--epsilon-rel", type=float, default=0.01)

    p = sub.add_parser("validate", help="check a network file")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="radial configuration for a fixed generator set")
    common(p)
    seeded(p)
    p.add_argument("--generators", help="active generators, comma-separated (default: whole pool)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("search", help="best generator subset of size kappa")
    common(p)
    seeded(p)
    search_flags(p, True)
    p.add_argument("--epsilon-schedule", help="START,END for a geometric tolerance schedule")
    p.add_argument("--stall-limit", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--warm-set", help="initial generator set, comma-separated")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("oracle", help="exhaustive optimum of a tiny network")
    common(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--generators", help="fixed roots (problem 1)")
    group.add_argument("--kappa", type=int, help="subset size (problem 2)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="Watts-Strogatz synthetic network")
    common(p, network=False)
    p.add_argument("--n-nodes", type=int, required=True)
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--rewire-prob", type=float, default=0.1)
    p.add_argument("--sources", type=int, default=1)
    p.add_argument("--demand-kw", type=float, required=True)
    p.add_argument("--ratio", type=float, default=4.44, help="total generation over total demand")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hubs", action="store_true", help="place sources on the highest-degree buses")
    p.add_argument("--name")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="run networks x seeds and append CSV rows")
    p.add_argument("--networks", required=True, help="directory of network files, or one file")
    p.add_argument("--seeds", default="0")
    p.add_argument("--problem", type=int, choices=(1, 2), default=1)
    p.add_argument("--mode", choices=MODES, default="greedy")
    search_flags(p, False)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", required=True, help="CSV file to append to")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-warmstart", help="warm-start assignment from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--network", help="network file, to check the assignment and recompute its loss")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_warmstart)
    return parser


def _error(kind: str, message: str, code: int, stage: str | None = None) -> int:
    doc = {"error": kind, "message": message, "exit_code": code}
    if stage:
        doc["stage"] = stage
    sys.stderr.write(json.dumps(doc) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("GRIDFOREST_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        return _error(type(exc).__name__, str(exc), EXIT_INPUT, exc.stage)
    except GridForestError as exc:
        return _error(type(exc).__name__, str(exc), EXIT_NO_SOLUTION, exc.stage)
    except UsageError as exc:
        return _error("UsageError", str(exc), EXIT_INPUT)
    except OSError as exc:
        return _error(type(exc).__name__, str(exc), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())

"""Generator-subset selection by a swap walk over fixed-size active sets.

Each visited subset is scored by running the forward solver rooted at it;
the walk proposes one-for-one generator swaps and accepts a proposal whose
loss is within a relative tolerance of the current one.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from gridforest.errors import GridForestError, InvalidParams, KappaTooLarge, NoFeasibleSolution, NoSwapAvailable
from gridforest.forward import SolverOptions, forward_solve
from gridforest.network import DistributionNetwork
from gridforest.report import SolverReport

log = logging.getLogger(__name__)

LOG_BASE = math.e  # base of the logarithm in the iteration budget


def t_max(kappa: int, n_g: int, target_p: float = 0.95) -> int:
    """Iterations needed to hit the best subset with probability ``target_p``."""
    if n_g < 1:
        raise InvalidParams("n_g must be at least 1")
    return max(1, math.ceil(target_p * kappa * n_g * (2 + math.log(n_g, LOG_BASE))))


def _distances(network: DistributionNetwork, source: str) -> dict[str, float]:
    graph = nx.Graph()
    graph.add_nodes_from(network.bus_ids)
    for e in network.edges:
        graph.add_edge(e.from_bus, e.to_bus, weight=min(ln.electrical_length for ln in e.lines))
    return nx.single_source_dijkstra_path_length(graph, source)


def proximity_scores(network: DistributionNetwork) -> dict[str, float]:
    """Demand-weighted closeness of each generator: sum of |S_b| / (1 + distance)."""
    demand = np.abs(network.load_pu).sum(axis=1) * network.kva_base
    index = network.bus_index
    scores = {}
    for g in network.generator_pool:
        dist = _distances(network, g)
        scores[g] = float(sum(demand[index[b]] / (1.0 + d) for b, d in dist.items()))
    return scores


def greedy_init(network: DistributionNetwork, kappa: int) -> tuple[str, ...]:
    """The ``kappa`` generators closest to heavy demand; ties broken by id."""
    pool = network.generator_pool
    if not 1 <= kappa <= len(pool):
        raise KappaTooLarge(f"kappa={kappa} outside 1..{len(pool)}")
    scores = proximity_scores(network)
    return tuple(sorted(sorted(pool, key=lambda g: (-scores[g], g))[:kappa]))


def neighbor(current: Iterable[str], pool: Iterable[str], rng: np.random.Generator) -> tuple[str, ...]:
    """Swap one member of ``current`` for one generator outside it, uniformly."""
    current = tuple(sorted(current))
    outside = sorted(set(pool) - set(current))
    if not outside:
        raise NoSwapAvailable("every generator is already active")
    drop = current[int(rng.integers(len(current)))]
    add = outside[int(rng.integers(len(outside)))]
    return tuple(sorted((set(current) - {drop}) | {add}))


@dataclass(frozen=True)
class SearchOptions:
    kappa: int
    target_p: float = 0.95
    max_iters: int | None = None
    epsilon_rel: float = 0.01
    epsilon_schedule: tuple[float, float] | None = None  # (start, end), geometric
    stall_limit: int | None = None
    seed: int = 0
    jobs: int = 1
    mode: str = "greedy"
    warm_set: tuple[str, ...] | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0 < self.target_p < 1:
            raise InvalidParams("target_p must lie in (0, 1)")
        if self.epsilon_rel < 0:
            raise InvalidParams("epsilon_rel must be non-negative")
        if self.epsilon_schedule is not None:
            start, end = self.epsilon_schedule
            if not (start > 0 and end > 0):
                raise InvalidParams("epsilon schedule endpoints must be positive")
        if self.max_iters is not None and self.max_iters < 0:
            raise InvalidParams("max_iters must be non-negative")
        if self.stall_limit is not None and self.stall_limit < 1:
            raise InvalidParams("stall_limit must be at least 1")
        if self.jobs < 1:
            raise InvalidParams("jobs must be at least 1")
        if self.seed < 0:
            raise InvalidParams("seed must be non-negative")

    def budget(self, n_g: int) -> int:
        base = t_max(self.kappa, n_g, self.target_p)
        return base if self.max_iters is None else max(self.max_iters, base)

    def epsilon_at(self, iteration: int, total: int) -> float:
        if self.epsilon_schedule is None:
            return self.epsilon_rel
        start, end = self.epsilon_schedule
        frac = 0.0 if total <= 1 else (iteration - 1) / (total - 1)
        return start * (end / start) ** frac


# ---------------------------------------------------------------------------
# Subset evaluation
# ---------------------------------------------------------------------------


@dataclass
class SubsetResult:
    active_set: tuple[str, ...]
    loss: float  # inf when infeasible or when the solver gave up
    report: SolverReport | None
    error: str | None = None


def subset_seed(seed: int, subset: tuple[str, ...], pool: tuple[str, ...]) -> int:
    """Solver seed of one subset: fixed by the search seed and the subset alone."""
    entropy = [int(seed)] + [pool.index(g) for g in subset]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def solve_subset(network: DistributionNetwork, subset: tuple[str, ...], seed: int, solver: SolverOptions) -> SubsetResult:
    opts = replace(solver, seed=subset_seed(seed, subset, network.generator_pool))
    try:
        rep = forward_solve(network, subset, opts)
    except GridForestError as exc:
        return SubsetResult(subset, math.inf, None, f"{type(exc).__name__}: {exc}")
    return SubsetResult(subset, rep.objective, rep)


_worker_network: DistributionNetwork | None = None


def _init_worker(network: DistributionNetwork) -> None:
    global _worker_network
    _worker_network = network


def _solve_in_worker(args) -> SubsetResult:
    subset, seed, solver = args
    return solve_subset(_worker_network, subset, seed, solver)


class _Evaluator:
    """Memoized subset scores; with a pool, uncached subsets are solved concurrently."""

    def __init__(self, network: DistributionNetwork, options: SearchOptions):
        self.network = network
        self.seed = options.seed
        self.solver = replace(options.solver, mode=options.mode)
        self.memo: dict[tuple[str, ...], SubsetResult] = {}
        self.executor = (
            ProcessPoolExecutor(max_workers=options.jobs, initializer=_init_worker, initargs=(network,))
            if options.jobs > 1
            else None
        )

    def prefetch(self, subsets: Iterable[tuple[str, ...]]) -> None:
        todo = list(dict.fromkeys(s for s in subsets if s not in self.memo))
        if not todo:
            return
        if self.executor is None:
            for s in todo:
                self.memo[s] = solve_subset(self.network, s, self.seed, self.solver)
        else:
            args = [(s, self.seed, self.solver) for s in todo]
            for s, res in zip(todo, self.executor.map(_solve_in_worker, args)):
                self.memo[s] = res

    def __call__(self, subset: tuple[str, ...]) -> SubsetResult:
        self.prefetch([subset])
        return self.memo[subset]

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()


# ---------------------------------------------------------------------------
# Walk
# ---------------------------------------------------------------------------


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def permutation_search(network: DistributionNetwork, options: SearchOptions) -> SolverReport:
    """Best ``kappa``-subset of generators found by the swap walk, with its configuration.

    The returned solution is the lowest loss seen over every feasible
    evaluation, not the walk's last accepted state. Infeasible subsets score
    infinity and are never accepted from a feasible state; from an
    infeasible state any proposal is accepted so the walk can move on.
    """
    t_start = time.perf_counter()
    pool = network.generator_pool
    kappa = options.kappa
    if not 1 <= kappa <= len(pool):
        raise KappaTooLarge(f"kappa={kappa} outside 1..{len(pool)}")
    if options.warm_set is not None:
        start = tuple(sorted(set(options.warm_set)))
        if len(start) != kappa or any(g not in pool for g in start):
            raise InvalidParams(f"warm set must hold {kappa} distinct generators from the pool")
    else:
        start = greedy_init(network, kappa)

    total = options.budget(len(pool)) if kappa < len(pool) else 0
    evaluator = _Evaluator(network, options)
    try:
        current = evaluator(start)
        best = current
        calls, hits = 1, 0
        trace = [
            {
                "iteration": 0,
                "set": list(start),
                "loss": _finite(current.loss),
                "accepted": True,
                "incumbent": _finite(best.loss),
                "current": list(start),
            }
        ]
        seen = {start}
        stall = 0
        iteration = 0
        while iteration < total:
            # proposals for the next few iterations assuming no acceptance; any
            # acceptance invalidates the rest, which are simply redrawn
            lookahead = min(options.jobs, total - iteration)
            proposals = [
                neighbor(current.active_set, pool, np.random.default_rng([options.seed, iteration + 1 + j]))
                for j in range(lookahead)
            ]
            evaluator.prefetch(proposals)
            for proposal in proposals:
                iteration += 1
                if proposal in seen:
                    hits += 1
                else:
                    calls += 1
                    seen.add(proposal)
                cand = evaluator(proposal)
                eps = options.epsilon_at(iteration, total) * (best.loss if math.isfinite(best.loss) else 0.0)
                if not math.isfinite(current.loss):
                    accepted = True
                else:
                    accepted = math.isfinite(cand.loss) and cand.loss <= current.loss + eps
                if cand.loss < best.loss:
                    best = cand
                    stall = 0
                else:
                    stall += 1
                if accepted:
                    current = cand
                trace.append(
                    {
                        "iteration": iteration,
                        "set": list(proposal),
                        "loss": _finite(cand.loss),
                        "accepted": accepted,
                        "incumbent": _finite(best.loss),
                        "current": list(current.active_set),
                    }
                )
                if options.stall_limit is not None and stall >= options.stall_limit:
                    total = iteration
                if accepted or iteration >= total:
                    break
    finally:
        evaluator.close()

    if not math.isfinite(best.loss):
        raise NoFeasibleSolution(f"none of the {calls} evaluated generator sets gave a feasible configuration")

    rep = replace(best.report)
    rep.problem = 2
    rep.mode = options.mode
    rep.seed = options.seed
    rep.trace = trace
    rep.stats = dict(rep.stats)
    rep.stats.update(
        {
            "kappa": kappa,
            "initial_set": list(start),
            "t_max": t_max(kappa, len(pool), options.target_p),
            "iterations": len(trace) - 1,
            "oracle_calls": calls,
            "cache_hits": hits,
            "subset_seed": subset_seed(options.seed, best.active_set, pool),
        }
    )
    rep.timings = {"total": time.perf_counter() - t_start}
    log.info("search: best %s loss %.6g after %d iterations", best.active_set, best.loss, len(trace) - 1)
    return rep

"""Constructive radial solver for a fixed set of active generators.

Pipeline: pre-process the graph, split it into one capacity-feasible island
per active generator, grow a tree inside each island by repeatedly attaching
the most desirable frontier bus, then repair any remaining constraint
violation by branch exchange.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from collections import deque
from collections.abc import Iterable
from contextlib import contextmanager
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from gridforest.errors import (
    AllCandidatesInfeasible,
    Disconnected,
    GridForestError,
    InsufficientGeneration,
    InvalidParams,
    RepairFailed,
    StrandedBuses,
    UnknownBus,
    UnreachableBus,
)
from gridforest.network import PHASES, DistributionNetwork, Line, LineKey
from gridforest.power import Evaluation, evaluate, exact_loss
from gridforest.radial import RadialConfiguration, orient, orient_unchecked
from gridforest.report import SolverReport, report_from_evaluation

logger = logging.getLogger(__name__)

MODES = ("greedy", "stochastic")
CAPACITY_SLACK = 1e-12
REWIRE_WIDEN = 4  # batches of full evaluations tried before a rewire round settles
REWIRE_TABU = 8  # recently swapped lines that may not be swapped back
POLISH_MIN_GAIN = 1e-9  # relative loss reduction a polish move must achieve
WEIGHT_NUMERATOR = "demand of the newly attached bus"


@dataclass
class SolverOptions:
    mode: str = "greedy"
    seed: int = 0
    rewire_max_iters: int = 100
    rewire_max_swaps: int = 8
    loss_margin: float | None = None
    phase_expansion: bool = False
    polish_max_rounds: int = 50
    polish_evals: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidParams(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.rewire_max_iters < 0:
            raise InvalidParams("rewire_max_iters must be non-negative")


def _check_active(network: DistributionNetwork, active_set: Iterable[str]) -> tuple[str, ...]:
    active = tuple(sorted(set(active_set)))
    if not active:
        raise InvalidParams("the active generator set is empty")
    for g in active:
        if g not in network.bus_index:
            raise UnknownBus(f"active generator {g!r} is not a bus")
        if not network.bus_map[g].is_generator:
            raise InvalidParams(f"bus {g!r} is not in the generator pool")
    return active


# ---------------------------------------------------------------------------
# Line helpers
# ---------------------------------------------------------------------------


def line_cost(line: Line, s: np.ndarray) -> float:
    """R^3/Z^2-weighted squared flow of ``s`` (per-phase complex, p.u.) on ``line``."""
    return float(np.sum(line.loss_coef * (s.real**2 + s.imag**2)))


def line_fits(line: Line, s: np.ndarray, kva_base: float) -> bool:
    """Whether ``line`` can carry the per-phase flow ``s`` (phases and capacities)."""
    need = np.abs(s) > 0
    if np.any(need & ~line.mask):
        return False
    p_cap, q_cap = line.p_max_kw / kva_base, line.q_max_kvar / kva_base
    return bool(np.all(np.abs(s.real) <= p_cap + CAPACITY_SLACK) and np.all(np.abs(s.imag) <= q_cap + CAPACITY_SLACK))


def best_line(lines: Iterable[Line], s: np.ndarray, kva_base: float) -> tuple[Line, bool]:
    """Cheapest line for flow ``s`` among those that fit, else the cheapest overall."""
    lines = list(lines)
    fitting = [ln for ln in lines if line_fits(ln, s, kva_base)]
    pool = fitting or lines
    key = lambda ln: (line_cost(ln, s), float(ln.loss_coef.sum()), ln.k)  # noqa: E731
    return min(pool, key=key), bool(fitting)


def _dominates(a: Line, b: Line) -> bool:
    """``a`` is at least as good as ``b`` on every phase of ``b`` and every limit."""
    if not set(b.phases) <= set(a.phases):
        return False
    for p in b.phases:
        if a.r[p] > b.r[p] or a.x[p] > b.x[p]:
            return False
    bi = b.mask
    if np.any(a.loss_coef[bi] > b.loss_coef[bi]):
        return False
    if a.p_max_kw < b.p_max_kw or a.q_max_kvar < b.q_max_kvar:
        return False
    if a.theta_min_rad > b.theta_min_rad or a.theta_max_rad < b.theta_max_rad:
        return False
    same = (
        set(a.phases) == set(b.phases)
        and all(a.r[p] == b.r[p] and a.x[p] == b.x[p] for p in b.phases)
        and a.p_max_kw == b.p_max_kw
        and a.q_max_kvar == b.q_max_kvar
        and a.theta_min_rad == b.theta_min_rad
        and a.theta_max_rad == b.theta_max_rad
    )
    return a.k < b.k if same else True


# ---------------------------------------------------------------------------
# Pre-processor
# ---------------------------------------------------------------------------


@dataclass
class ReducedGraph:
    """Candidate lines per edge after pruning, plus lines forced by bridges."""

    lines: dict[frozenset, tuple[Line, ...]]
    adjacency: dict[str, list[tuple[str, frozenset]]]
    forced: dict[frozenset, Line]
    dropped: list[tuple[LineKey, str]] = field(default_factory=list)

    @property
    def forced_keys(self) -> list[LineKey]:
        return sorted(ln.key for ln in self.forced.values())

    def edge_lines(self, u: str, v: str) -> tuple[Line, ...]:
        pair = frozenset((u, v))
        if pair in self.forced:
            return (self.forced[pair],)
        return self.lines[pair]

    def electrical_length(self, u: str, v: str) -> float:
        return min(ln.electrical_length for ln in self.edge_lines(u, v))


def pre_process(network: DistributionNetwork, active_set: Iterable[str]) -> ReducedGraph:
    """Prune zero-capacity and dominated lines, then force bridge edges.

    A bridge is forced when one of its sides holds no active generator:
    every bus on that side can only be supplied through it. The forced line
    is the cheapest one able to carry that side's total demand.
    """
    active = _check_active(network, active_set)
    lines: dict[frozenset, tuple[Line, ...]] = {}
    dropped: list[tuple[LineKey, str]] = []
    for e in network.edges:
        usable = []
        for ln in e.lines:
            if ln.p_max_kw <= 0 or ln.q_max_kvar <= 0:
                dropped.append((ln.key, "zero capacity"))
            else:
                usable.append(ln)
        keep = []
        for ln in usable:
            if any(other is not ln and _dominates(other, ln) for other in usable):
                dropped.append((ln.key, "dominated"))
            else:
                keep.append(ln)
        if keep:
            lines[frozenset(e.key)] = tuple(keep)

    adjacency: dict[str, list[tuple[str, frozenset]]] = {b: [] for b in network.bus_ids}
    for pair in sorted(lines, key=lambda p: tuple(sorted(p))):
        u, v = sorted(pair)
        adjacency[u].append((v, pair))
        adjacency[v].append((u, pair))

    seen = set(active)
    queue = deque(active)
    while queue:
        u = queue.popleft()
        for v, _ in adjacency[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    unreachable = [b for b in network.bus_ids if b not in seen]
    if unreachable:
        raise Disconnected(f"buses {unreachable[:10]} have no path to an active generator")

    graph = nx.Graph()
    graph.add_nodes_from(network.bus_ids)
    graph.add_edges_from(tuple(sorted(p)) for p in lines)
    load = network.load_pu
    index = network.bus_index
    active_set_ = set(active)
    forced: dict[frozenset, Line] = {}
    for u, v in sorted(tuple(sorted(b)) for b in nx.bridges(graph)):
        side = _side(adjacency, v, frozenset((u, v)))
        if side & active_set_:
            other = set(network.bus_ids) - side
            if other & active_set_:
                continue
            pendant = other
        else:
            pendant = side
        s = sum((load[index[b]] for b in pendant), np.zeros(3, dtype=complex))
        pair = frozenset((u, v))
        forced[pair], _ = best_line(lines[pair], s, network.kva_base)
    return ReducedGraph(lines, adjacency, forced, dropped)


def _side(adjacency, start: str, cut: frozenset) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for y, pair in adjacency[x]:
            if pair == cut or y in seen:
                continue
            seen.add(y)
            stack.append(y)
    return seen


# ---------------------------------------------------------------------------
# Islander
# ---------------------------------------------------------------------------


@dataclass
class Partition:
    root: str
    buses: list[str]
    p_budget: np.ndarray
    q_budget: np.ndarray
    used: np.ndarray

    def spare(self) -> np.ndarray:
        return (self.p_budget - self.used.real) + 1j * (self.q_budget - self.used.imag)


@dataclass
class PartitionState:
    partitions: list[Partition]
    assignment: dict[str, int]
    distance: dict[str, dict[str, float]]
    loss_margin: float
    overflow: list[str] = field(default_factory=list)  # buses placed past their island's budget

    def partition_of(self, bus: str) -> Partition:
        return self.partitions[self.assignment[bus]]


def _inflated(s: np.ndarray, margin: float) -> np.ndarray:
    return s * (1.0 + margin)


def _covers(part: Partition, need: np.ndarray) -> bool:
    p_ok = np.all(part.used.real + need.real <= part.p_budget + CAPACITY_SLACK)
    q_need = np.maximum(need.imag, 0.0)
    q_ok = np.all(part.used.imag + q_need <= part.q_budget + CAPACITY_SLACK)
    return bool(p_ok and q_ok)


def _charge(part: Partition, need: np.ndarray) -> None:
    part.used = part.used + (need.real + 1j * np.maximum(need.imag, 0.0))


def islander(
    network: DistributionNetwork,
    reduced: ReducedGraph,
    active_set: Iterable[str],
    loss_margin: float | None = None,
) -> PartitionState:
    """Split the buses into one connected island per active generator.

    Islands grow from their generators in order of electrical distance (sum
    of R/Z along shortest paths). A bus joins the nearest island whose spare
    alpha-adjusted generation covers its demand inflated by ``loss_margin``;
    buses left over are placed by shifting boundary buses between islands.
    """
    active = _check_active(network, active_set)
    margin = network.loss_margin if loss_margin is None else loss_margin
    demand = network.total_demand_kw
    capacity = network.total_generation_kw(active)
    if capacity + 1e-9 < (1.0 + margin) * demand:
        raise InsufficientGeneration(
            f"generation {capacity:g} kW < (1+{margin:g}) x demand {demand:g} kW for active set {list(active)}"
        )

    load = network.load_pu
    index = network.bus_index
    graph = nx.Graph()
    graph.add_nodes_from(network.bus_ids)
    for pair in reduced.lines:
        u, v = sorted(pair)
        graph.add_edge(u, v, weight=reduced.electrical_length(u, v))
    distance = {g: nx.single_source_dijkstra_path_length(graph, g) for g in active}

    partitions = []
    assignment: dict[str, int] = {}
    for i, g in enumerate(active):
        lim = network.gen_limits_pu(g)
        part = Partition(g, [g], lim["p_max"], lim["q_max"], np.zeros(3, dtype=complex))
        own = load[index[g]]
        if not _covers(part, own):
            raise InsufficientGeneration(f"generator {g!r} cannot cover its own demand")
        _charge(part, own)
        partitions.append(part)
        assignment[g] = i

    heap: list[tuple[float, int, str]] = []

    def push_neighbours(i: int, b: str) -> None:
        g = partitions[i].root
        for v, _ in reduced.adjacency[b]:
            if v not in assignment and v in distance[g]:
                heapq.heappush(heap, (distance[g][v], i, v))

    for i, part in enumerate(partitions):
        push_neighbours(i, part.root)
    while heap:
        _, i, b = heapq.heappop(heap)
        if b in assignment:
            continue
        need = _inflated(load[index[b]], margin)
        part = partitions[i]
        if not _covers(part, need):
            continue
        _charge(part, need)
        part.buses.append(b)
        assignment[b] = i
        push_neighbours(i, b)

    stuck = [b for b in network.bus_ids if b not in assignment]
    overflow = _reassign(network, reduced, partitions, assignment, distance, stuck, margin) if stuck else []
    return PartitionState(partitions, assignment, distance, margin, overflow)


def _island_connected_without(reduced: ReducedGraph, members: set[str], root: str, drop: str) -> bool:
    keep = members - {drop}
    seen = {root}
    stack = [root]
    while stack:
        x = stack.pop()
        for y, _ in reduced.adjacency[x]:
            if y in keep and y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(keep)


def _reassign(network, reduced, partitions, assignment, distance, stuck, margin) -> list[str]:
    """Place leftover buses, moving one boundary bus between islands when needed.

    Returns the buses that could only be placed past their island's budget.
    """
    load = network.load_pu
    index = network.bus_index
    pending = sorted(stuck, key=lambda b: (min(d.get(b, math.inf) for d in distance.values()), b))
    progress = True
    while pending and progress:
        progress = False
        for b in list(pending):
            need = _inflated(load[index[b]], margin)
            adjacent = sorted(
                {assignment[v] for v, _ in reduced.adjacency[b] if v in assignment},
                key=lambda i: (distance[partitions[i].root].get(b, math.inf), i),
            )
            if not adjacent:
                continue
            placed = False
            for i in adjacent:
                if _covers(partitions[i], need):
                    _charge(partitions[i], need)
                    partitions[i].buses.append(b)
                    assignment[b] = i
                    placed = True
                    break
            if not placed:
                placed = _shift_for(network, reduced, partitions, assignment, b, need, adjacent, margin)
            if placed:
                pending.remove(b)
                progress = True
    if any(all(b not in d for d in distance.values()) for b in pending):
        raise UnreachableBus(f"buses {pending[:10]} cannot be reached")
    # Generation suffices in aggregate (checked up front) but region growing
    # fragmented it: hang each leftover bus on the adjacent island with the
    # most headroom and leave the overload to the repair stage.
    overflow = []
    while pending:
        for b in list(pending):
            adjacent = sorted({assignment[v] for v, _ in reduced.adjacency[b] if v in assignment})
            if not adjacent:
                continue
            need = _inflated(load[index[b]], margin)
            i = max(adjacent, key=lambda i: (_headroom(partitions[i], need), -i))
            _charge(partitions[i], need)
            partitions[i].buses.append(b)
            assignment[b] = i
            pending.remove(b)
            overflow.append(b)
    return overflow


def _headroom(part: Partition, need: np.ndarray) -> float:
    """Smallest per-phase budget left after taking ``need`` (negative when short)."""
    p_left = part.p_budget - part.used.real - need.real
    q_left = part.q_budget - part.used.imag - np.maximum(need.imag, 0.0)
    return float(min(p_left.min(), q_left.min()))


def _shift_for(network, reduced, partitions, assignment, b, need, adjacent, margin) -> bool:
    load = network.load_pu
    index = network.bus_index
    for i in adjacent:
        part = partitions[i]
        members = set(part.buses)
        for x in sorted(part.buses[1:], key=lambda x: (-abs(load[index[x]]).sum(), x)):
            x_need = _inflated(load[index[x]], margin)
            targets = sorted({assignment[y] for y, _ in reduced.adjacency[x] if y in assignment} - {i})
            freed = Partition(part.root, part.buses, part.p_budget, part.q_budget, part.used)
            freed.used = part.used - (x_need.real + 1j * np.maximum(x_need.imag, 0.0))
            if not _covers(freed, need):
                continue
            if not any(y in members - {x} for y, _ in reduced.adjacency[b]):
                continue
            if not _island_connected_without(reduced, members, part.root, x):
                continue
            for j in targets:
                if _covers(partitions[j], x_need):
                    _charge(partitions[j], x_need)
                    partitions[j].buses.append(x)
                    assignment[x] = j
                    part.buses.remove(x)
                    part.used = freed.used
                    _charge(part, need)
                    part.buses.append(b)
                    assignment[b] = i
                    return True
    return False


# ---------------------------------------------------------------------------
# Tree growth inside one island
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrontierCandidate:
    tail: str
    head: str
    line: LineKey
    weight: float
    feasible: bool


class PartitionGrowth:
    """Growing tree ``T`` of one island with its residual demand ledger.

    Buses are indexed locally; every directed edge ``tail -> head`` between
    two island members is a potential candidate whose line choice is fixed
    by the head's demand.
    """

    def __init__(self, network: DistributionNetwork, reduced: ReducedGraph, partition: Partition):
        self.network = network
        self.partition = partition
        self.buses = list(partition.buses)
        self.loc = {b: i for i, b in enumerate(self.buses)}
        n = len(self.buses)
        base = network.kva_base
        load = network.load_pu[[network.bus_index[b] for b in self.buses]]
        self.load = load
        self.bus_mask = network.bus_phase_mask[[network.bus_index[b] for b in self.buses]]
        self.demand_l1 = np.abs(load.real) + np.abs(load.imag)

        tails, heads, lines, fits = [], [], [], []
        for h in self.buses:
            for t, _ in reduced.adjacency[h]:
                if t in self.loc:
                    ln, ok = best_line(reduced.edge_lines(t, h), load[self.loc[h]], base)
                    tails.append(self.loc[t])
                    heads.append(self.loc[h])
                    lines.append(ln)
                    fits.append(ok)
        self.c_tail = np.array(tails, dtype=int)
        self.c_head = np.array(heads, dtype=int)
        self.c_line = lines
        self.c_fits = np.array(fits, dtype=bool)
        c = len(lines)
        self.c_rz = np.array([ln.r_over_z for ln in lines]).reshape(c, 3)
        self.c_mask = np.array([ln.mask for ln in lines]).reshape(c, 3)
        ranks = sorted(range(c), key=lambda i: lines[i].key)
        self.c_rank = np.empty(c, dtype=int)
        self.c_rank[ranks] = np.arange(c)

        self.attached = np.zeros(n, dtype=bool)
        self.parent = np.full(n, -1, dtype=int)
        self.feed: list[Line | None] = [None] * n
        self.depth = np.zeros(n, dtype=int)
        self.flow = np.zeros((n, 3), dtype=complex)  # lossless flow on the feeding line
        self.flow_l1 = np.zeros((n, 3))
        self.rz = np.zeros((n, 3))
        self.p_cap = np.full(n, np.inf)
        self.q_cap = np.full(n, np.inf)
        self.line_mask = np.zeros((n, 3), dtype=bool)
        self.levels: list[list[int]] = []
        self.selected: list[Line] = []
        self.steps = 0
        self.fallback_picks = 0
        r = self.loc[partition.root]
        self.attached[r] = True
        self.line_mask[r] = self.bus_mask[r]
        self.gen_used = load[r].copy()

    @property
    def root(self) -> str:
        return self.partition.root

    @property
    def remaining(self) -> int:
        return int((~self.attached).sum())

    # path aggregates: root-to-bus sums/minima over feeding lines
    def _aggregates(self):
        n = len(self.buses)
        a = np.zeros(n)
        b = np.zeros((n, 3))
        hp = np.full((n, 3), np.inf)
        hn = np.full((n, 3), np.inf)
        hq = np.full((n, 3), np.inf)
        hqn = np.full((n, 3), np.inf)
        mask = self.line_mask.copy()
        for lvl in self.levels:
            idx = np.array(lvl, dtype=int)
            par = self.parent[idx]
            a[idx] = a[par] + np.sum(self.rz[idx] * self.flow_l1[idx], axis=1)
            b[idx] = b[par] + self.rz[idx]
            pc = self.p_cap[idx, None]
            qc = self.q_cap[idx, None]
            hp[idx] = np.minimum(hp[par], pc - self.flow[idx].real)
            hn[idx] = np.minimum(hn[par], pc + self.flow[idx].real)
            hq[idx] = np.minimum(hq[par], qc - self.flow[idx].imag)
            hqn[idx] = np.minimum(hqn[par], qc + self.flow[idx].imag)
            mask[idx] = mask[par] & self.line_mask[idx]
        return a, b, hp, hn, hq, hqn, mask

    def score(self):
        """Weights, feasibility and overload of all live frontier candidates."""
        live = np.flatnonzero(self.attached[self.c_tail] & ~self.attached[self.c_head])
        if live.size == 0:
            return live, np.zeros(0), np.zeros(0, dtype=bool), np.zeros(0)
        a, b, hp, hn, hq, hqn, mask = self._aggregates()
        t = self.c_tail[live]
        h = self.c_head[live]
        cmask = self.c_mask[live]
        dn = np.where(cmask, self.demand_l1[h], 0.0)
        num = dn.sum(axis=1)
        den = a[t] + np.sum((b[t] + self.c_rz[live]) * dn, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(num > 0, np.where(den > 0, num / den, np.inf), 0.0)

        s = self.load[h]
        need = np.abs(s) > 0
        phase_ok = ~np.any(need & ~(mask[t] & cmask), axis=1)
        over = (
            np.maximum(s.real - hp[t], 0)
            + np.maximum(-s.real - hn[t], 0)
            + np.maximum(s.imag - hq[t], 0)
            + np.maximum(-s.imag - hqn[t], 0)
        ).sum(axis=1)
        part = self.partition
        spare_p = part.p_budget - self.gen_used.real
        spare_q = part.q_budget - self.gen_used.imag
        budget_ok = np.all(s.real <= spare_p + CAPACITY_SLACK, axis=1) & np.all(
            s.imag <= spare_q + CAPACITY_SLACK, axis=1
        )
        feasible = self.c_fits[live] & phase_ok & (over <= CAPACITY_SLACK) & budget_ok
        return live, w, feasible, over

    def candidates(self) -> list[FrontierCandidate]:
        live, w, feasible, _ = self.score()
        return [
            FrontierCandidate(
                self.buses[self.c_tail[c]], self.buses[self.c_head[c]], self.c_line[c].key, float(w[i]), bool(feasible[i])
            )
            for i, c in enumerate(live)
        ]

    def attach(self, c: int) -> FrontierCandidate:
        t, h = int(self.c_tail[c]), int(self.c_head[c])
        ln = self.c_line[c]
        self.attached[h] = True
        self.parent[h] = t
        self.feed[h] = ln
        self.depth[h] = self.depth[t] + 1
        d = self.depth[h]
        while len(self.levels) < d:
            self.levels.append([])
        self.levels[d - 1].append(h)
        self.rz[h] = ln.r_over_z
        base = self.network.kva_base
        self.p_cap[h] = ln.p_max_kw / base
        self.q_cap[h] = ln.q_max_kvar / base
        self.line_mask[h] = ln.mask & self.bus_mask[h]
        s = np.where(ln.mask, self.load[h], 0)
        l1 = np.abs(s.real) + np.abs(s.imag)
        x = h
        while x != self.loc[self.root]:
            self.flow[x] += s
            self.flow_l1[x] += l1
            x = self.parent[x]
        self.gen_used = self.gen_used + s
        self.selected.append(ln)
        self.steps += 1
        return FrontierCandidate(self.buses[t], self.buses[h], ln.key, 0.0, True)


def reselect_lines(growth: PartitionGrowth, reduced: ReducedGraph) -> None:
    """Re-pick every tree line for the lossless flow it finally carries."""
    base = growth.network.kva_base
    for h, ln in enumerate(growth.feed):
        if ln is None:
            continue
        t = growth.buses[growth.parent[h]]
        better, _ = best_line(reduced.edge_lines(t, growth.buses[h]), growth.flow[h], base)
        growth.feed[h] = better
    growth.selected = [ln for ln in growth.feed if ln is not None]


def net_concad(network: DistributionNetwork, growth: PartitionGrowth) -> list[FrontierCandidate]:
    """Frontier of an island: every edge from its tree to an unattached member,
    each with the cheapest line able to carry the member's demand."""
    cands = growth.candidates()
    if not cands and growth.remaining:
        raise StrandedBuses(
            f"island of {growth.root!r} has {growth.remaining} buses with no edge to its tree"
        )
    return cands


def _pick(growth: PartitionGrowth, options: SolverOptions, rng: np.random.Generator) -> int:
    live, w, feasible, over = growth.score()
    if live.size == 0:
        raise StrandedBuses(f"island of {growth.root!r} has {growth.remaining} unreachable buses")
    ranks = growth.c_rank[live]
    ok = np.flatnonzero(feasible)
    if ok.size == 0:
        raise AllCandidatesInfeasible(f"every frontier edge of {growth.root!r} violates a limit")
    pos = ok[w[ok] > 0]
    if pos.size:
        if options.mode == "greedy":
            best = w[pos].max()
            tied = pos[w[pos] == best]
            return int(live[tied[np.argmin(ranks[tied])]])
        inf = pos[np.isinf(w[pos])]
        if inf.size:
            inf = inf[np.argsort(ranks[inf])]
            return int(live[inf[rng.integers(inf.size)]])
        pos = pos[np.argsort(ranks[pos])]
        p = w[pos] / w[pos].sum()
        return int(live[pos[rng.choice(pos.size, p=p)]])
    zero = ok[np.argsort(ranks[ok])]
    if options.mode == "greedy":
        return int(live[zero[0]])
    return int(live[zero[rng.integers(zero.size)]])


def ac_sampler(
    growth: PartitionGrowth, options: SolverOptions, rng: np.random.Generator
) -> FrontierCandidate:
    """Pick one frontier edge and attach it.

    Candidates that would overload a line on their supply path or exceed the
    island's generation are filtered out. The weight of the rest is the new
    bus's demand divided by the R/Z-weighted accumulated demand along its
    supply path (candidate line included). Greedy mode takes the largest
    weight (ties broken by line key); stochastic mode samples proportionally.
    Zero-weight (pass-through) buses are taken only when nothing else is left.
    """
    c = _pick(growth, options, rng)
    return growth.attach(c)


def _fallback_attach(growth: PartitionGrowth) -> FrontierCandidate:
    """Least-overloading frontier edge, used when every candidate violates a limit."""
    live, w, feasible, over = growth.score()
    penalty = over + np.where(growth.c_fits[live], 0.0, 1.0)
    order = np.lexsort((growth.c_rank[live], -w, penalty))
    growth.fallback_picks += 1
    return growth.attach(int(live[order[0]]))


# ---------------------------------------------------------------------------
# Rewire (branch exchange)
# ---------------------------------------------------------------------------


def _vadd(a: tuple, b: tuple) -> tuple:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _vsub(a: tuple, b: tuple) -> tuple:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


class _FlowView:
    """Lossless flows of an oriented forest, for cheap screening of branch exchanges.

    Per-phase flows are plain tuples of Python complex numbers: the screens
    touch a few lines at a time, where numpy call overhead would dominate.
    """

    def __init__(self, network: DistributionNetwork, forest):
        self.network = network
        self.forest = forest
        base = network.kva_base
        load = network.load_pu
        index = network.bus_index
        sub = {b: [complex(c) for c in load[index[b]]] for b in forest.order}
        for b in reversed(forest.order):
            p = forest.parent[b]
            if p is not None:
                acc, own = sub[p[0]], sub[b]
                acc[0] += own[0]
                acc[1] += own[1]
                acc[2] += own[2]
        self.sub = {b: tuple(v) for b, v in sub.items()}
        self.cap = {}
        for b in forest.order:
            p = forest.parent[b]
            if p is not None:
                ln = network.line(*p[1])
                self.cap[b] = (ln.p_max_kw / base, ln.q_max_kvar / base)
        self.limits = {r: network.gen_limits_pu(r) for r in forest.roots}

    def offenders(self) -> dict[tuple, float]:
        """Lines and roots whose lossless flow breaks a limit, with the excess."""
        out = {}
        for b, cap in self.cap.items():
            m = self.line_over(cap, self.sub[b])
            if m > CAPACITY_SLACK:
                out[("line", self.forest.parent[b][1])] = m
        for r in self.forest.roots:
            m = self.root_over(r, self.sub[r])
            if m > CAPACITY_SLACK:
                out[("bus", r)] = m
        return out

    @staticmethod
    def line_over(cap, s: tuple) -> float:
        p_cap, q_cap = cap
        total = 0.0
        for c in s:
            over_p = abs(c.real) - p_cap
            over_q = abs(c.imag) - q_cap
            if over_p > 0:
                total += over_p
            if over_q > 0:
                total += over_q
        return total

    def root_over(self, root: str, gen: tuple) -> float:
        lim = self.limits[root]
        g = np.array(gen)
        return float(
            np.sum(
                np.maximum(g.real - lim["p_max"], 0)
                + np.maximum(lim["p_min"] - g.real, 0)
                + np.maximum(g.imag - lim["q_max"], 0)
                + np.maximum(lim["q_min"] - g.imag, 0)
            )
        )

    def path_up(self, bus: str) -> list[str]:
        """Child endpoints of the lines between ``bus`` and its root, bottom first."""
        out = []
        parent = self.forest.parent
        while parent[bus] is not None:
            out.append(bus)
            bus = parent[bus][0]
        return out

    def delta(self, add: Line, remove_child: str, inner: str | None, outer: str | None) -> float:
        """Overload change when the subtree below ``remove_child`` is cut off and
        re-hung from ``outer`` through ``add``, entering at its member ``inner``.
        ``inner=None`` means ``add`` replaces the removed line on the same edge."""
        f = self.forest
        moved = self.sub[remove_child]
        base = self.network.kva_base
        new_cap = (add.p_max_kw / base, add.q_max_kvar / base)
        if inner is None:
            return self.line_over(new_cap, moved) - self.line_over(self.cap[remove_child], moved)
        lose = self.path_up(f.parent[remove_child][0])
        gain = self.path_up(outer)
        common = set(lose) & set(gain)
        before = after = 0.0
        for b in lose:
            if b not in common:
                before += self.line_over(self.cap[b], self.sub[b])
                after += self.line_over(self.cap[b], _vsub(self.sub[b], moved))
        for b in gain:
            if b not in common:
                before += self.line_over(self.cap[b], self.sub[b])
                after += self.line_over(self.cap[b], _vadd(self.sub[b], moved))
        # lines between the cut and the new entry point reverse and carry the complement
        x = inner
        while x != remove_child:
            before += self.line_over(self.cap[x], self.sub[x])
            after += self.line_over(self.cap[x], _vsub(moved, self.sub[x]))
            x = f.parent[x][0]
        before += self.line_over(self.cap[remove_child], moved)
        after += self.line_over(new_cap, moved)
        r_old, r_new = f.component[remove_child], f.component[outer]
        if r_old != r_new:
            before += self.root_over(r_old, self.sub[r_old]) + self.root_over(r_new, self.sub[r_new])
            after += self.root_over(r_old, _vsub(self.sub[r_old], moved))
            after += self.root_over(r_new, _vadd(self.sub[r_new], moved))
        return after - before


def _ranked_moves(network, forest, config, offending, reduced, tabu) -> list[tuple]:
    """Branch exchanges that touch an offending element, best lossless overload change first.

    A move is kept when the cycle it closes runs through an offending line
    (or the feeding line of an offending bus), when it swaps such a line for
    a parallel one, or when it moves part of an offending root's component
    elsewhere.
    """
    moves = _loss_moves(network, forest, config, reduced)
    if not len(moves):
        return []
    pos = {b: i for i, b in enumerate(moves.order)}
    n = len(moves.order)
    flagged = np.zeros(n, dtype=int)
    hot_roots = np.zeros(n, dtype=bool)
    for kind, ref in offending:
        if kind == "line":
            flagged[pos[forest.child_of(ref)]] = 1
        elif kind == "bus":
            if forest.parent[ref] is None:
                hot_roots[pos[ref]] = True
            else:
                flagged[pos[ref]] = 1
    count = flagged.copy()
    for i in range(n):
        if moves.parent[i] >= 0:
            count[i] += count[moves.parent[i]]
    inner, outer, lca, comp = moves.inner, moves.outer, moves.lca, moves.component
    exchange = lca != -2
    a, b = np.where(exchange, inner, 0), np.where(exchange, outer, 0)
    through = count[a] + count[b] - 2 * np.where(lca >= 0, count[np.maximum(lca, 0)], 0)
    in_hot = lambda x: hot_roots[comp[x]] & (comp[x] != x)  # noqa: E731
    leaves_hot = (in_hot(a) & ~(in_hot(b) & (comp[a] == comp[b]))) | (
        in_hot(b) & ~(in_hot(a) & (comp[a] == comp[b]))
    )
    keep = np.where(exchange, (through > 0) | leaves_hot, flagged[moves.child] > 0)
    ranked = []
    for j in np.flatnonzero(keep):
        add, rem, _, _ = moves.move(j)
        if add.key in tabu or rem in tabu:
            continue
        ranked.append((float(moves.overload[j]), int(j), add.key, rem))
    ranked.sort()
    return ranked


def _swap(config: RadialConfiguration, add: LineKey, rem: LineKey) -> RadialConfiguration:
    return RadialConfiguration((config.selected - {rem}) | {add}, config.roots)


def _lossless_repair(network, config, reduced, max_rounds: int) -> tuple[RadialConfiguration, int]:
    """Tabu walk on lossless overload only; cheap, no power flow."""
    current = config
    forest = orient(current, network)
    view = _FlowView(network, forest)
    offending = view.offenders()
    best, best_total = current, sum(offending.values())
    tabu: deque = deque(maxlen=REWIRE_TABU)
    rounds = 0
    while offending and rounds < max_rounds:
        rounds += 1
        ranked = _ranked_moves(network, forest, current, offending, reduced, tabu)
        if not ranked:
            break
        _, _, add, rem = ranked[0]
        tabu.extend((add, rem))
        current = _swap(current, add, rem)
        forest = orient_unchecked(current, network)
        offending = _FlowView(network, forest).offenders()
        total = sum(offending.values())
        if total < best_total:
            best, best_total = current, total
    return best, rounds


def rewire(
    network: DistributionNetwork,
    config: RadialConfiguration,
    feasibility=None,
    options: SolverOptions | None = None,
    reduced: ReducedGraph | None = None,
) -> RadialConfiguration:
    """Repair an infeasible radial configuration by branch exchange.

    A move adds one inactive line leaving an offending subtree and drops one
    line of the cycle (or root-to-root path) it closes, so radiality is kept.
    Moves are ranked by their change in lossless overload. A first walk uses
    that proxy alone until lossless flows fit every line and generator; a
    second walk fully evaluates the best-ranked moves and keeps the lowest
    total violation, which also catches loss-induced and voltage violations.
    Both walks accept a non-improving move when nothing improves (with a
    short tabu list), and the best configuration seen is what is returned.
    """
    opts = options or SolverOptions()
    current = evaluate(network, config)
    if current.feasible:
        return config
    budget = opts.rewire_max_iters
    repaired, used = _lossless_repair(network, config, reduced, budget)
    if repaired != config:
        candidate = evaluate(network, repaired)
        if candidate.feasible:
            return repaired
        if candidate.violation < current.violation:
            current = candidate
    best = current
    tabu: deque = deque(maxlen=REWIRE_TABU)
    rounds = 0
    for rounds in range(1, budget - used + 1):
        if current.feasibility is None:
            break
        ranked = _ranked_moves(
            network, current.forest, current.config, current.feasibility.offending, reduced, tabu
        )
        winner, winner_key, winner_move = None, None, None
        width = opts.rewire_max_swaps
        for lo in range(0, min(len(ranked), width * REWIRE_WIDEN), width):
            for _, _, add, rem in ranked[lo : lo + width]:
                ev = evaluate(network, _swap(current.config, add, rem), trusted=True)
                if ev.feasibility is None:
                    continue
                key = (ev.violation, ev.solution.total_loss_pu)
                if winner_key is None or key < winner_key:
                    winner, winner_key, winner_move = ev, key, (add, rem)
            if winner is not None and winner.violation < current.violation * (1 - 1e-9):
                break
        if winner is None:
            break
        tabu.extend(winner_move)
        current = winner
        if current.violation < best.violation:
            best = current
        if best.feasible:
            return best.config
    err = RepairFailed(f"no feasible configuration within {used + rounds} branch-exchange rounds")
    err.config = best.config
    raise err


# ---------------------------------------------------------------------------
# Polish (loss-reducing branch exchange)
# ---------------------------------------------------------------------------


@dataclass
class _LossMoves:
    """Candidate branch exchanges of one forest, priced by lossless loss change."""

    order: tuple[str, ...]
    lines: list[Line]
    line_idx: np.ndarray  # added line per move
    child: np.ndarray  # bus below the removed line (position in ``order``)
    inner: np.ndarray  # -1 for a parallel-line swap
    outer: np.ndarray
    removed: list[LineKey]  # feeding line per position
    delta: np.ndarray
    overload: np.ndarray  # change in lossless overload, as ``_FlowView.delta``
    lca: np.ndarray  # meeting point of the closed cycle; -1 across components, -2 parallel
    parent: np.ndarray  # per position, -1 for roots
    component: np.ndarray  # root position per position

    def __len__(self) -> int:
        return len(self.delta)

    def move(self, j: int) -> tuple[Line, LineKey, str | None, str | None]:
        c = int(self.child[j])
        inner = None if self.inner[j] < 0 else self.order[self.inner[j]]
        outer = None if self.outer[j] < 0 else self.order[self.outer[j]]
        return self.lines[self.line_idx[j]], self.removed[c], inner, outer


def _loss_moves(
    network: DistributionNetwork, forest, config: RadialConfiguration, reduced: ReducedGraph | None
) -> _LossMoves:
    """All branch exchanges of a forest with their change in quadratic lossless loss.

    With ``P(x)`` the root-to-``x`` sums of ``coef * flow`` and ``coef``, the
    change of cutting the subtree below a line (load ``L``) and re-hanging it
    from ``outer`` is a handful of path-sum differences, so every move is
    priced in constant time once the cycle (or root path) is known.
    """
    order = forest.order
    pos = {b: i for i, b in enumerate(order)}
    n = len(order)
    load = network.load_pu[[network.bus_index[b] for b in order]]
    par = np.array([-1 if forest.parent[b] is None else pos[forest.parent[b][0]] for b in order], dtype=int)
    depth = np.array([forest.depth[b] for b in order], dtype=int)
    comp = np.array([pos[forest.component[b]] for b in order], dtype=int)
    removed: list[LineKey] = [None if forest.parent[b] is None else forest.parent[b][1] for b in order]
    coef = np.zeros((n, 3))
    fed = [i for i, key in enumerate(removed) if key is not None]
    if fed:
        coef[fed] = network.line_table.loss_coef[network.line_rows(removed[i] for i in fed)]
    sub = load.copy()
    for i in range(n - 1, 0, -1):
        if par[i] >= 0:
            sub[par[i]] += sub[i]
    pa = np.zeros((n, 3), dtype=complex)
    pc = np.zeros((n, 3))
    for i in range(n):
        if par[i] >= 0:
            pa[i] = pa[par[i]] + coef[i] * sub[i]
            pc[i] = pc[par[i]] + coef[i]

    if reduced is not None:
        pairs = sorted(tuple(sorted(p)) for p in reduced.lines)
        edge_lines = reduced.edge_lines
    else:
        pairs = sorted(tuple(sorted(e.key)) for e in network.edges)
        edge_lines = lambda u, v: network.edge(u, v).lines  # noqa: E731
    selected_pairs = {frozenset((u, v)) for u, v, _ in config.selected}
    lines: list[Line] = []
    eu, ev, el = [], [], []
    for u, v in pairs:
        if frozenset((u, v)) in selected_pairs:
            continue
        for ln in edge_lines(u, v):
            eu.append(pos[u])
            ev.append(pos[v])
            el.append(len(lines))
            lines.append(ln)
    # parallel swaps on selected edges
    pc_child, pc_line = [], []
    for i, key in enumerate(removed):
        if key is None:
            continue
        for ln in edge_lines(key[0], key[1]):
            if ln.key != key:
                pc_child.append(i)
                pc_line.append(len(lines))
                lines.append(ln)

    line_coef = np.array([ln.loss_coef for ln in lines]).reshape(len(lines), 3)
    parts_child, parts_inner, parts_outer, parts_line, parts_lca = [], [], [], [], []
    up_self = np.where(par >= 0, par, np.arange(n))
    max_depth = int(depth.max()) if n else 0
    anc = np.empty((max_depth + 1, n), dtype=int)
    anc[0] = np.arange(n)
    for k in range(1, max_depth + 1):
        anc[k] = up_self[anc[k - 1]]
    if eu:
        eu_a, ev_a, el_a = np.array(eu), np.array(ev), np.array(el)
        same = comp[eu_a] == comp[ev_a]
        du, dv = depth[eu_a], depth[ev_a]
        lo = np.minimum(du, dv)
        x = anc[du - lo, eu_a]
        y = anc[dv - lo, ev_a]
        diff = same & (x != y)
        while diff.any():
            x = np.where(diff, up_self[x], x)
            y = np.where(diff, up_self[y], y)
            diff = same & (x != y)
        lca = np.where(same, x, -1)
        base_depth = np.where(same, depth[np.maximum(lca, 0)], 0)
        for a, b in ((eu_a, ev_a), (ev_a, eu_a)):
            length = depth[a] - base_depth
            idx = np.repeat(np.arange(len(a)), length)
            step = np.arange(idx.size) - np.repeat(np.cumsum(length) - length, length)
            parts_child.append(anc[step, a[idx]])
            parts_inner.append(a[idx])
            parts_outer.append(b[idx])
            parts_line.append(el_a[idx])
            parts_lca.append(lca[idx])
    child = np.concatenate(parts_child) if parts_child else np.zeros(0, dtype=int)
    inner = np.concatenate(parts_inner) if parts_inner else np.zeros(0, dtype=int)
    outer = np.concatenate(parts_outer) if parts_outer else np.zeros(0, dtype=int)
    line_idx = np.concatenate(parts_line) if parts_line else np.zeros(0, dtype=int)
    lca = np.concatenate(parts_lca) if parts_lca else np.zeros(0, dtype=int)

    big_l = sub[child]
    mag = np.abs(big_l) ** 2
    up = par[child]
    has_lca = (lca >= 0)[:, None]
    base_a = np.where(has_lca, pa[np.maximum(lca, 0)], 0)
    base_c = np.where(has_lca, pc[np.maximum(lca, 0)], 0)
    lose_a, lose_c = pa[up] - base_a, pc[up] - base_c
    gain_a, gain_c = pa[outer] - base_a, pc[outer] - base_c
    in_a, in_c = pa[inner] - pa[child], pc[inner] - pc[child]
    conj_l = np.conj(big_l)
    delta = (
        (lose_c + gain_c + in_c) * mag
        - 2 * np.real(conj_l * lose_a)
        + 2 * np.real(conj_l * gain_a)
        - 2 * np.real(conj_l * in_a)
        - coef[child] * mag
        + line_coef[line_idx] * mag
    ).sum(axis=1)

    pch = np.array(pc_child, dtype=int)
    pli = np.array(pc_line, dtype=int)
    par_delta = ((line_coef[pli] - coef[pch]) * np.abs(sub[pch]) ** 2).sum(axis=1) if pch.size else np.zeros(0)

    table = network.line_table
    cap = np.zeros((n, 2))
    if fed:
        rows = network.line_rows(removed[i] for i in fed)
        cap[fed, 0] = table.p_cap[rows, 0]
        cap[fed, 1] = table.q_cap[rows, 0]
    new_rows = network.line_rows(ln.key for ln in lines)
    new_cap = np.stack([table.p_cap[new_rows, 0], table.q_cap[new_rows, 0]], axis=1) if lines else np.zeros((0, 2))
    line_idx_all = np.concatenate([line_idx, pli])
    child_all = np.concatenate([child, pch])
    lca_all = np.concatenate([lca, np.full(pch.size, -2)])
    inner_all = np.concatenate([inner, np.full(pch.size, -1)])
    outer_all = np.concatenate([outer, np.full(pch.size, -1)])
    overload = _overload_change(
        network, order, par, depth, comp, anc, sub, cap, new_cap[line_idx_all], child_all, inner_all, outer_all, lca_all
    )
    return _LossMoves(
        order=order,
        lines=lines,
        line_idx=line_idx_all,
        child=child_all,
        inner=inner_all,
        outer=outer_all,
        removed=removed,
        delta=np.concatenate([delta, par_delta]),
        overload=overload,
        lca=lca_all,
        parent=par,
        component=comp,
    )


def _over(p_cap: np.ndarray, q_cap: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Row-wise lossless overload of flows ``s`` (k, 3) against scalar caps (k,)."""
    return (
        np.maximum(np.abs(s.real) - p_cap[:, None], 0).sum(axis=1)
        + np.maximum(np.abs(s.imag) - q_cap[:, None], 0).sum(axis=1)
    )


def _path_nodes(anc: np.ndarray, start: np.ndarray, length: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(move, node)`` pairs for the first ``length[j]`` nodes up from ``start[j]``."""
    length = np.maximum(length, 0)
    idx = np.repeat(np.arange(len(start)), length)
    step = np.arange(idx.size) - np.repeat(np.cumsum(length) - length, length)
    return idx, anc[step, start[idx]]


def _overload_change(network, order, par, depth, comp, anc, sub, cap, add_cap, child, inner, outer, lca) -> np.ndarray:
    """Vectorized ``_FlowView.delta`` for every move; ``lca`` is -2 for parallel swaps
    and -1 when the subtree changes component."""
    m = len(child)
    out = np.zeros(m)
    if m == 0:
        return out
    moved = sub[child]
    out += _over(add_cap[:, 0], add_cap[:, 1], moved) - _over(cap[child, 0], cap[child, 1], moved)
    base = _over(cap[:, 0], cap[:, 1], sub)

    exchange = np.flatnonzero(lca != -2)
    if exchange.size == 0:
        return out
    c, i, o, l = child[exchange], inner[exchange], outer[exchange], lca[exchange]
    top = np.where(l >= 0, depth[np.maximum(l, 0)], 0)
    mv = moved[exchange]
    for start, length, sign in (
        (par[c], depth[par[c]] - top, -1),
        (o, depth[o] - top, 1),
    ):
        idx, node = _path_nodes(anc, start, length)
        change = _over(cap[node, 0], cap[node, 1], sub[node] + sign * mv[idx]) - base[node]
        out[exchange] += np.bincount(idx, weights=change, minlength=exchange.size)
    # lines between the cut and the new entry point reverse and carry the complement
    idx, node = _path_nodes(anc, i, depth[i] - depth[c])
    change = _over(cap[node, 0], cap[node, 1], mv[idx] - sub[node]) - base[node]
    out[exchange] += np.bincount(idx, weights=change, minlength=exchange.size)

    cross = np.flatnonzero(l == -1)
    if cross.size:
        roots = sorted(set(comp[c[cross]]) | set(comp[o[cross]]))
        lim = {r: network.gen_limits_pu(order[r]) for r in roots}
        lo_p = np.zeros((len(order), 3))
        hi_p = np.zeros((len(order), 3))
        lo_q = np.zeros((len(order), 3))
        hi_q = np.zeros((len(order), 3))
        for r, v in lim.items():
            lo_p[r], hi_p[r], lo_q[r], hi_q[r] = v["p_min"], v["p_max"], v["q_min"], v["q_max"]

        def root_over(r, g):
            return (
                np.maximum(g.real - hi_p[r], 0)
                + np.maximum(lo_p[r] - g.real, 0)
                + np.maximum(g.imag - hi_q[r], 0)
                + np.maximum(lo_q[r] - g.imag, 0)
            ).sum(axis=1)

        r_old, r_new = comp[c[cross]], comp[o[cross]]
        mvc = mv[cross]
        out[exchange[cross]] += (
            root_over(r_old, sub[r_old] - mvc)
            + root_over(r_new, sub[r_new] + mvc)
            - root_over(r_old, sub[r_old])
            - root_over(r_new, sub[r_new])
        )
    return out


def polish(
    network: DistributionNetwork,
    config: RadialConfiguration,
    options: SolverOptions | None = None,
    reduced: ReducedGraph | None = None,
) -> RadialConfiguration:
    """Lower the exact loss of a feasible configuration by branch exchange.

    Moves are ranked by their change in lossless quadratic loss. Those that
    would push a lossless flow over a limit are skipped; up to
    ``polish_evals`` of the rest are fully evaluated and the first one that
    stays feasible and lowers the exact loss is taken.
    """
    opts = options or SolverOptions()
    current = evaluate(network, config)
    if not current.feasible:
        return config
    loss = exact_loss(current.solution, network)
    for _ in range(opts.polish_max_rounds):
        moves = _loss_moves(network, current.forest, current.config, reduced)
        if not len(moves):
            break
        delta = moves.delta
        ranked = np.lexsort((np.arange(len(moves)), delta))
        view = None
        accepted = 0
        evals = 0
        for j in ranked:
            if evals >= opts.polish_evals or delta[j] >= -POLISH_MIN_GAIN * max(loss, 1e-12) / network.kva_base:
                break
            add, rem, inner, outer = moves.move(j)
            if not accepted:
                if moves.overload[j] > CAPACITY_SLACK:
                    continue
            # later moves in a round were priced on the starting forest
            elif (
                not _still_valid(current, add, rem, inner, outer)
                or view.delta(add, current.forest.child_of(rem), inner, outer) > CAPACITY_SLACK
            ):
                continue
            evals += 1
            ev = evaluate(network, _swap(current.config, add.key, rem), trusted=True)
            if not ev.feasible:
                continue
            new_loss = exact_loss(ev.solution, network)
            if new_loss < loss * (1 - POLISH_MIN_GAIN):
                current, loss = ev, new_loss
                accepted += 1
                view = _FlowView(network, current.forest)
        if not accepted:
            break
    return current.config


def _still_valid(current: Evaluation, add: Line, rem: LineKey, inner: str | None, outer: str | None) -> bool:
    """Whether a branch exchange still applies to the forest of ``current``."""
    if rem not in current.config.selected:
        return False
    if inner is None:
        return True
    u, v, _ = add.key
    if any(frozenset((a, b)) == frozenset((u, v)) for a, b, _ in current.config.selected):
        return False
    forest = current.forest
    child = forest.child_of(rem)
    below = False
    x = inner
    while x is not None:
        if x == child:
            below = True
            break
        p = forest.parent[x]
        x = None if p is None else p[0]
    if not below:
        return False
    x = outer
    while x is not None:
        if x == child:
            return False
        p = forest.parent[x]
        x = None if p is None else p[0]
    return True


# ---------------------------------------------------------------------------
# End to end
# ---------------------------------------------------------------------------


@contextmanager
def _stage(name: str, timings: dict[str, float]):
    t0 = time.perf_counter()
    try:
        yield
    except GridForestError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def construct(
    network: DistributionNetwork,
    reduced: ReducedGraph,
    state: PartitionState,
    options: SolverOptions,
    rng: np.random.Generator,
) -> tuple[RadialConfiguration, list[PartitionGrowth]]:
    growths = []
    selected: set[LineKey] = set()
    for part in state.partitions:
        g = PartitionGrowth(network, reduced, part)
        while g.remaining:
            try:
                ac_sampler(g, options, rng)
            except AllCandidatesInfeasible:
                _fallback_attach(g)
        reselect_lines(g, reduced)
        selected.update(ln.key for ln in g.selected)
        growths.append(g)
    roots = frozenset(p.root for p in state.partitions)
    return RadialConfiguration(frozenset(selected), roots), growths


def forward_solve(
    network: DistributionNetwork,
    active_set: Iterable[str],
    options: SolverOptions | None = None,
) -> SolverReport:
    """Feasible low-loss radial configuration rooted at ``active_set``."""
    opts = options or SolverOptions()
    active = _check_active(network, active_set)
    rng = np.random.default_rng(opts.seed)
    timings: dict[str, float] = {}
    t_start = time.perf_counter()

    with _stage("pre_process", timings):
        reduced = pre_process(network, active)
    with _stage("islander", timings):
        state = islander(network, reduced, active, opts.loss_margin)
    with _stage("construct", timings):
        config, growths = construct(network, reduced, state, opts, rng)
    with _stage("evaluate", timings):
        ev = evaluate(network, config)

    notes = []
    rewired = False
    if not ev.feasible:
        with _stage("rewire", timings):
            try:
                repaired = rewire(network, config, ev.feasibility, opts, reduced)
            except RepairFailed as exc:
                repaired = exc.config
                notes.append(f"rewire: {exc}")
            rewired = repaired != config
            if rewired:
                ev = evaluate(network, repaired)

    polished = False
    if ev.feasible and opts.polish_max_rounds > 0:
        with _stage("polish", timings):
            better = polish(network, ev.config, opts, reduced)
            if better != ev.config:
                ev = evaluate(network, better)
                polished = True

    report = report_from_evaluation(network, ev, problem=1, mode=opts.mode, seed=opts.seed, active_set=active)
    if state.overflow:
        notes.insert(0, f"islander: {len(state.overflow)} buses placed beyond their island's budget")
    report.notes = notes + report.notes
    report.notes.append(f"sampler weight numerator: {WEIGHT_NUMERATOR}")
    report.stats = {
        "partitions": len(state.partitions),
        "island_overflow": len(state.overflow),
        "forced_lines": [list(k) for k in reduced.forced_keys],
        "dropped_lines": len(reduced.dropped),
        "construction_steps": sum(g.steps for g in growths),
        "fallback_picks": sum(g.fallback_picks for g in growths),
        "rewired": rewired,
        "polished": polished,
        "sweep_iterations": ev.solution.iterations,
    }
    if opts.phase_expansion:
        report.stats["phase_ledger"] = {
            g.root: {
                p: {
                    "served_kw": float(g.gen_used[j].real * network.kva_base),
                    "budget_kw": float(g.partition.p_budget[j] * network.kva_base),
                }
                for j, p in enumerate(PHASES)
            }
            for g in growths
        }
    timings["total"] = time.perf_counter() - t_start
    report.timings = timings
    return report

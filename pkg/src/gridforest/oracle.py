"""Exhaustive reference solvers for tiny networks."""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np

from gridforest.errors import KappaTooLarge, NoFeasibleForest, NoFeasibleSolution, TooLarge, UnknownBus
from gridforest.network import DistributionNetwork
from gridforest.power import Evaluation, evaluate, exact_loss
from gridforest.radial import RadialConfiguration, _DSU

MAX_EDGES = 20
MAX_EVALUATIONS = 100_000


@dataclass
class OracleResult:
    config: RadialConfiguration
    active_set: tuple[str, ...]
    loss_kw: float
    n_enumerated: int
    n_feasible: int
    n_subsets: int = 1
    evaluation: Evaluation | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "active_set": list(self.active_set),
            "loss_kw": self.loss_kw,
            "configuration": self.config.to_dict(),
            "n_enumerated": self.n_enumerated,
            "n_feasible": self.n_feasible,
            "n_subsets": self.n_subsets,
        }


def _check_roots(network: DistributionNetwork, roots: Iterable[str]) -> tuple[str, ...]:
    roots = tuple(sorted(set(roots)))
    for r in roots:
        if r not in network.bus_index:
            raise UnknownBus(f"root {r!r} is not a bus")
    return roots


def _contracted_edges(network: DistributionNetwork, roots: tuple[str, ...]):
    """Edges with every root mapped to one super-node; root-to-root edges vanish."""
    rootset = set(roots)
    label = lambda b: "\0roots" if b in rootset else b  # noqa: E731
    return [e for e in sorted(network.edges, key=lambda e: e.key) if not (e.from_bus in rootset and e.to_bus in rootset)], label


def count_forests(network: DistributionNetwork, roots: Iterable[str]) -> int:
    """Number of radial configurations rooted at ``roots``, line choices included.

    Matrix-tree theorem on the graph with all roots merged, each edge weighted
    by its number of parallel lines.
    """
    roots = _check_roots(network, roots)
    if not roots:
        return 0
    edges, label = _contracted_edges(network, roots)
    nodes = ["\0roots"] + [b for b in network.bus_ids if b not in set(roots)]
    pos = {b: i for i, b in enumerate(nodes)}
    lap = np.zeros((len(nodes), len(nodes)))
    for e in edges:
        i, j = pos[label(e.from_bus)], pos[label(e.to_bus)]
        w = len(e.lines)
        lap[i, i] += w
        lap[j, j] += w
        lap[i, j] -= w
        lap[j, i] -= w
    if len(nodes) == 1:
        return 1
    return int(round(np.linalg.det(lap[1:, 1:])))


def enumerate_forests(network: DistributionNetwork, roots: Iterable[str]) -> Iterator[RadialConfiguration]:
    """Every spanning forest with exactly one root per component, in lexicographic order."""
    if network.n_edges > MAX_EDGES:
        raise TooLarge(f"{network.n_edges} edges exceed the enumeration limit of {MAX_EDGES}")
    roots = _check_roots(network, roots)
    if not roots:
        return
    edges, label = _contracted_edges(network, roots)
    need = network.n_buses - len(roots)
    nodes = ["\0roots"] + [b for b in network.bus_ids if b not in set(roots)]
    rootset = frozenset(roots)
    for combo in itertools.combinations(edges, need):
        dsu = _DSU(nodes)
        if all(dsu.union(label(e.from_bus), label(e.to_bus)) for e in combo):
            for lines in itertools.product(*(e.lines for e in combo)):
                yield RadialConfiguration(frozenset(ln.key for ln in lines), rootset)


def _scan(network: DistributionNetwork, roots: tuple[str, ...]) -> tuple[tuple[float, Evaluation] | None, int, int]:
    best: tuple[float, Evaluation] | None = None
    n_enum = n_feas = 0
    for config in enumerate_forests(network, roots):
        n_enum += 1
        ev = evaluate(network, config)
        if not ev.feasible:
            continue
        n_feas += 1
        loss = exact_loss(ev.solution, network)
        if best is None or loss < best[0]:
            best = (loss, ev)
    return best, n_enum, n_feas


def oracle_problem1(network: DistributionNetwork, roots: Iterable[str]) -> OracleResult:
    """Minimum exact loss over all feasible radial configurations rooted at ``roots``."""
    roots = _check_roots(network, roots)
    best, n_enum, n_feas = _scan(network, roots)
    if best is None:
        raise NoFeasibleForest(f"none of {n_enum} forests rooted at {list(roots)} is feasible")
    loss, ev = best
    return OracleResult(ev.config, roots, loss, n_enum, n_feas, 1, ev)


def oracle_problem2(network: DistributionNetwork, kappa: int) -> OracleResult:
    """Best generator subset of size ``kappa`` together with its best forest."""
    pool = network.generator_pool
    if not 1 <= kappa <= len(pool):
        raise KappaTooLarge(f"kappa={kappa} outside 1..{len(pool)}")
    if network.n_edges > MAX_EDGES:
        raise TooLarge(f"{network.n_edges} edges exceed the enumeration limit of {MAX_EDGES}")
    subsets = list(itertools.combinations(pool, kappa))
    total = sum(count_forests(network, s) for s in subsets)
    if total > MAX_EVALUATIONS:
        raise TooLarge(f"{total} evaluations over {len(subsets)} subsets exceed {MAX_EVALUATIONS}")
    best: tuple[float, Evaluation, tuple[str, ...]] | None = None
    n_enum = n_feas = 0
    for subset in subsets:
        found, e, f = _scan(network, subset)
        n_enum += e
        n_feas += f
        if found is not None and (best is None or found[0] < best[0]):
            best = (found[0], found[1], subset)
    if best is None:
        raise NoFeasibleSolution(f"no feasible configuration for any of {len(subsets)} subsets of size {kappa}")
    loss, ev, subset = best
    return OracleResult(ev.config, subset, loss, n_enum, n_feas, len(subsets), ev)

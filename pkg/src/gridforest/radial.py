"""Radial configurations (spanning forests) and their tree algebra."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any

from gridforest.errors import NotForest, NotRadial, UnknownBus, UnknownEdge
from gridforest.network import DistributionNetwork, LineKey


@dataclass(frozen=True)
class RadialConfiguration:
    """Selected ``(from, to, k)`` lines plus the active generator roots."""

    selected: frozenset[LineKey]
    roots: frozenset[str]

    @classmethod
    def build(cls, network: DistributionNetwork, selected: Iterable, roots: Iterable[str]) -> RadialConfiguration:
        """Normalize line keys to the network's stored edge orientation."""
        keys = frozenset(network.canonical_line_key(u, v, int(k)) for u, v, k in selected)
        return cls(keys, frozenset(roots))

    def to_dict(self) -> dict[str, Any]:
        return {
            "roots": sorted(self.roots),
            "selected": [{"from": u, "to": v, "k": k} for u, v, k in sorted(self.selected)],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], network: DistributionNetwork | None = None) -> RadialConfiguration:
        sel = [(s["from"], s["to"], int(s["k"])) for s in data["selected"]]
        if network is not None:
            return cls.build(network, sel, data["roots"])
        return cls(frozenset(sel), frozenset(data["roots"]))


class _DSU:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, a):
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _check_keys(config: RadialConfiguration, network: DistributionNetwork) -> None:
    for u, v, k in config.selected:
        network.line(u, v, k)
    for r in config.roots:
        if r not in network.bus_index:
            raise UnknownBus(f"root {r!r} is not a bus")


def is_radial(config: RadialConfiguration, network: DistributionNetwork) -> bool:
    """Spanning forest covering every bus with exactly one root per component."""
    _check_keys(config, network)
    edges_used = set()
    for u, v, _ in config.selected:
        pair = frozenset((u, v))
        if pair in edges_used:
            return False
        edges_used.add(pair)
    if not config.roots:
        return False
    dsu = _DSU(network.bus_ids)
    for u, v, _ in config.selected:
        if not dsu.union(u, v):
            return False
    roots_per_comp: dict[str, int] = {}
    for r in config.roots:
        c = dsu.find(r)
        roots_per_comp[c] = roots_per_comp.get(c, 0) + 1
    comps = {dsu.find(b) for b in network.bus_ids}
    return all(roots_per_comp.get(c, 0) == 1 for c in comps)


@dataclass(frozen=True)
class OrientedForest:
    """Parent/child view of a radial configuration.

    ``parent[b]`` is ``(parent_bus, line_key)`` or ``None`` for a root.
    ``order`` lists buses root-first (breadth first), so reversing it gives a
    valid leaves-to-root sweep.
    """

    parent: Mapping[str, tuple[str, LineKey] | None]
    children: Mapping[str, tuple[str, ...]]
    component: Mapping[str, str]
    depth: Mapping[str, int]
    order: tuple[str, ...]
    roots: tuple[str, ...]

    def line_of(self, bus: str) -> LineKey | None:
        p = self.parent[bus]
        return None if p is None else p[1]

    @property
    def lines(self) -> tuple[LineKey, ...]:
        """Selected lines in root-first order of their downstream bus."""
        return tuple(self.parent[b][1] for b in self.order if self.parent[b] is not None)

    def child_of(self, line: LineKey) -> str:
        """Downstream endpoint of a selected line."""
        u, v, _ = line
        for b in (u, v):
            p = self.parent.get(b)
            if p is not None and p[1] == line:
                return b
        raise UnknownEdge(f"line {line} is not in the forest")


def _orient(adj: Mapping[str, list], roots: Iterable[str]) -> OrientedForest:
    parent: dict[str, tuple[str, LineKey] | None] = {}
    children: dict[str, list[str]] = {b: [] for b in adj}
    component: dict[str, str] = {}
    depth: dict[str, int] = {}
    order: list[str] = []
    roots = tuple(sorted(roots))
    for r in roots:
        parent[r] = None
        component[r] = r
        depth[r] = 0
        queue = deque([r])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v, key in adj[u]:
                if v in parent:
                    continue
                parent[v] = (u, key)
                component[v] = r
                depth[v] = depth[u] + 1
                children[u].append(v)
                queue.append(v)
    return OrientedForest(
        parent=parent,
        children={b: tuple(c) for b, c in children.items()},
        component=component,
        depth=depth,
        order=tuple(order),
        roots=roots,
    )


def _selected_adjacency(config: RadialConfiguration, network: DistributionNetwork) -> dict[str, list]:
    adj: dict[str, list] = {b: [] for b in network.bus_ids}
    for key in sorted(config.selected):
        u, v, _ = key
        adj[u].append((v, key))
        adj[v].append((u, key))
    return adj


def orient(config: RadialConfiguration, network: DistributionNetwork) -> OrientedForest:
    """Orient every selected line away from its component's root."""
    if not is_radial(config, network):
        raise NotRadial("configuration is not a spanning forest with one root per component")
    return _orient(_selected_adjacency(config, network), config.roots)


def orient_unchecked(config: RadialConfiguration, network: DistributionNetwork) -> OrientedForest:
    """``orient`` without the radiality check."""
    return _orient(_selected_adjacency(config, network), config.roots)


def orient_partial(config: RadialConfiguration, network: DistributionNetwork) -> OrientedForest:
    """Orient a possibly non-spanning forest.

    Components holding a root hang from it; root-less components hang from
    the member with the fewest network hops to a root (ties by id), so their
    lines point away from the supply side. Raises ``NotForest`` on cycles, parallel selections
    or components holding several roots.
    """
    _check_keys(config, network)
    dsu = _DSU(network.bus_ids)
    pairs = set()
    for u, v, _ in config.selected:
        pair = frozenset((u, v))
        if pair in pairs or not dsu.union(u, v):
            raise NotForest("selected lines contain a cycle")
        pairs.add(pair)
    by_comp: dict[str, list[str]] = {}
    for b in network.bus_ids:
        by_comp.setdefault(dsu.find(b), []).append(b)
    hops = _hops_from(network, config.roots)
    anchors = []
    for comp, members in by_comp.items():
        rs = [b for b in members if b in config.roots]
        if len(rs) > 1:
            raise NotForest(f"component of {members[0]!r} holds several roots")
        anchors.append(rs[0] if rs else min(members, key=lambda b: (hops.get(b, len(hops) + 1), b)))
    return _orient(_selected_adjacency(config, network), anchors)


def _hops_from(network: DistributionNetwork, sources: Iterable[str]) -> dict[str, int]:
    hops = {s: 0 for s in sources}
    queue = deque(sorted(hops))
    while queue:
        u = queue.popleft()
        for v, _ in network.adjacency[u]:
            if v not in hops:
                hops[v] = hops[u] + 1
                queue.append(v)
    return hops


def downstream_set(forest: OrientedForest, line: LineKey) -> frozenset[str]:
    """Buses strictly below ``line``, i.e. the subtree of its downstream endpoint."""
    start = forest.child_of(line)
    out = [start]
    stack = [start]
    while stack:
        u = stack.pop()
        for c in forest.children[u]:
            out.append(c)
            stack.append(c)
    return frozenset(out)


def upstream_path(forest: OrientedForest, bus: str) -> list[LineKey]:
    """Lines from the component root down to ``bus`` (empty for a root)."""
    if bus not in forest.parent:
        raise UnknownBus(f"bus {bus!r} is not in the forest")
    path = []
    p = forest.parent[bus]
    while p is not None:
        path.append(p[1])
        p = forest.parent[p[0]]
    path.reverse()
    return path


def subtree_sizes(forest: OrientedForest) -> dict[str, int]:
    size = {b: 1 for b in forest.order}
    for b in reversed(forest.order):
        p = forest.parent[b]
        if p is not None:
            size[p[0]] += size[b]
    return size

"""Seeded Watts-Strogatz synthetic distribution networks."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass

import networkx as nx
import numpy as np

from gridforest.errors import InvalidParams
from gridforest.network import PHASES, DistributionNetwork, network_from_dict

IMPEDANCE_RANGE = (0.005, 0.05)
POWER_FACTOR_RANGE = (0.85, 0.98)
DEMAND_SPREAD = 100.0  # ratio between the largest and smallest log-uniform draw
GEN_SHARE_RANGE = (0.5, 1.5)
Q_TO_P_GENERATION = 0.6
CONNECT_TRIES = 100


@dataclass(frozen=True)
class WsParams:
    n_nodes: int
    mean_degree: int
    rewire_prob: float
    n_sources: int
    demand_total_kw: float
    generation_ratio: float
    seed: int = 0
    hubs: bool = False
    base_mva: float = 100.0
    base_kv: float = 12.47
    capacity_factor: float = 3.0
    name: str | None = None

    def check(self) -> None:
        if self.n_nodes < 3:
            raise InvalidParams("n_nodes must be at least 3")
        if self.mean_degree < 2 or self.mean_degree % 2:
            raise InvalidParams("mean_degree must be an even integer >= 2")
        if self.mean_degree >= self.n_nodes:
            raise InvalidParams("mean_degree must be smaller than n_nodes")
        if not 0.0 <= self.rewire_prob <= 1.0:
            raise InvalidParams("rewire_prob must lie in [0, 1]")
        if not 1 <= self.n_sources < self.n_nodes:
            raise InvalidParams("n_sources must lie in [1, n_nodes)")
        if not self.demand_total_kw > 0:
            raise InvalidParams("demand_total_kw must be positive")
        if not self.generation_ratio > 1:
            raise InvalidParams("generation_ratio must exceed 1")
        if not self.capacity_factor > 0:
            raise InvalidParams("capacity_factor must be positive")
        if self.base_mva <= 0 or self.base_kv <= 0:
            raise InvalidParams("bases must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _baseline_flows(n: int, edges: list[tuple[int, int]], sources: list[int], load: np.ndarray) -> np.ndarray:
    """Per-phase lossless flow on each edge of a multi-source breadth-first tree (0 off-tree)."""
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for ei, (u, v) in enumerate(edges):
        adj[u].append((v, ei))
        adj[v].append((u, ei))
    parent = {s: None for s in sources}
    order = []
    queue = deque(sorted(sources))
    while queue:
        u = queue.popleft()
        order.append(u)
        for v, ei in sorted(adj[u]):
            if v not in parent:
                parent[v] = (u, ei)
                queue.append(v)
    acc = load.copy()
    flows = np.zeros((len(edges), 3), dtype=complex)
    for b in reversed(order):
        p = parent[b]
        if p is not None:
            flows[p[1]] = acc[b]
            acc[p[0]] += acc[b]
    return flows


def generate_ws(params: WsParams) -> DistributionNetwork:
    """Watts-Strogatz network with demand, generation, impedance and capacity profiles."""
    params.check()
    rng = np.random.default_rng(params.seed)
    n = params.n_nodes
    graph = nx.connected_watts_strogatz_graph(
        n, params.mean_degree, params.rewire_prob, tries=CONNECT_TRIES, seed=int(rng.integers(2**31))
    )
    edges = sorted(tuple(sorted(e)) for e in graph.edges())

    if params.hubs:
        sources = sorted(sorted(range(n), key=lambda i: (-graph.degree[i], i))[: params.n_sources])
    else:
        sources = sorted(int(i) for i in rng.choice(n, size=params.n_sources, replace=False))
    source_set = set(sources)

    consumers = [i for i in range(n) if i not in source_set]
    raw = np.exp(rng.uniform(0.0, math.log(DEMAND_SPREAD), size=(len(consumers), 3)))
    p_kw = np.zeros((n, 3))
    p_kw[consumers] = raw * (params.demand_total_kw / raw.sum())
    pf = rng.uniform(*POWER_FACTOR_RANGE, size=(n, 3))
    q_kvar = p_kw * np.tan(np.arccos(pf))

    share = rng.uniform(*GEN_SHARE_RANGE, size=len(sources))
    gen_total = params.generation_ratio * params.demand_total_kw
    gen_p = share / share.sum() * gen_total / 3.0

    r = rng.uniform(*IMPEDANCE_RANGE, size=(len(edges), 3))
    x = rng.uniform(*IMPEDANCE_RANGE, size=(len(edges), 3))

    kva_base = params.base_mva * 1000.0
    load = (p_kw + 1j * q_kvar) / kva_base
    flows = _baseline_flows(n, edges, sources, load)
    on_tree = np.any(flows != 0, axis=1)
    mean_p = float(np.abs(flows[on_tree].real).mean()) if on_tree.any() else 0.0
    mean_q = float(np.abs(flows[on_tree].imag).mean()) if on_tree.any() else 0.0
    # Each line gets the larger of the mean and its own baseline flow, scaled, so
    # feeders next to a source are not capped below what any tree must carry.
    own_p = np.abs(flows.real).max(axis=1)
    own_q = np.abs(flows.imag).max(axis=1)
    p_cap = params.capacity_factor * np.maximum(own_p, mean_p) * kva_base
    q_cap = params.capacity_factor * np.maximum(own_q, mean_q) * kva_base

    width = len(str(n - 1))
    name_of = lambda i: f"{'g' if i in source_set else 'b'}{i:0{width}d}"  # noqa: E731
    buses = []
    for i in range(n):
        gen = i in source_set
        g = gen_p[sources.index(i)] if gen else 0.0
        buses.append(
            {
                "id": name_of(i),
                "kind": "generator" if gen else "consumer",
                "phases": list(PHASES),
                "demand_kw": dict(zip(PHASES, map(float, p_kw[i]))),
                "demand_kvar": dict(zip(PHASES, map(float, q_kvar[i]))),
                "gen_p_max_kw": float(g),
                "gen_p_min_kw": 0.0,
                "gen_q_max_kvar": float(g * Q_TO_P_GENERATION),
                "gen_q_min_kvar": float(-g * Q_TO_P_GENERATION),
                "v_min_pu": 0.9,
                "v_max_pu": 1.1,
            }
        )
    edge_data = [
        {
            "from": name_of(u),
            "to": name_of(v),
            "lines": [
                {
                    "k": 1,
                    "phases": list(PHASES),
                    "r": dict(zip(PHASES, map(float, r[ei]))),
                    "x": dict(zip(PHASES, map(float, x[ei]))),
                    "p_max_kw": float(p_cap[ei]),
                    "q_max_kvar": float(q_cap[ei]),
                    "theta_min_rad": -0.5,
                    "theta_max_rad": 0.5,
                }
            ],
        }
        for ei, (u, v) in enumerate(edges)
    ]
    name = params.name or f"ws-{n}-s{params.seed}"
    return network_from_dict(
        {
            "name": name,
            "base_kv": params.base_kv,
            "base_mva": params.base_mva,
            "units": "pu",
            "alpha": 1.0,
            "loss_margin": 0.2,
            "buses": buses,
            "edges": edge_data,
        }
    )

"""Seeded tiny networks for oracle comparisons."""

from __future__ import annotations

import numpy as np

from gridforest.network import PHASES, DistributionNetwork, network_from_dict


def tiny_network(
    seed: int,
    n_buses: int = 7,
    n_edges: int = 10,
    n_generators: int = 2,
    parallel_prob: float = 0.3,
    capacity_scale: float = 1.0,
    name: str | None = None,
) -> DistributionNetwork:
    """Random connected network: a random tree plus chords, some edges doubled.

    Line capacities are drawn around the total demand so that they bind on
    some trees but not on all of them.
    """
    rng = np.random.default_rng(seed)
    ids = [f"n{i}" for i in range(n_buses)]
    order = rng.permutation(n_buses)
    pairs = set()
    for i in range(1, n_buses):
        j = int(rng.integers(i))
        pairs.add(tuple(sorted((int(order[i]), int(order[j])))))
    candidates = [(a, b) for a in range(n_buses) for b in range(a + 1, n_buses) if (a, b) not in pairs]
    extra = max(0, min(n_edges - len(pairs), len(candidates)))
    for idx in rng.choice(len(candidates), size=extra, replace=False):
        pairs.add(candidates[int(idx)])
    gens = {int(g) for g in rng.choice(n_buses, size=n_generators, replace=False)}

    demand_kw = rng.uniform(10.0, 80.0, size=(n_buses, 3))
    demand_kvar = demand_kw * rng.uniform(0.2, 0.5, size=(n_buses, 3))
    total = demand_kw.sum()
    gen_each = 2.0 * total / n_generators / 3.0
    buses = []
    for i in range(n_buses):
        g = i in gens
        buses.append(
            {
                "id": ids[i],
                "kind": "generator" if g else "consumer",
                "phases": list(PHASES),
                "demand_kw": 0.0 if g else dict(zip(PHASES, map(float, demand_kw[i]))),
                "demand_kvar": 0.0 if g else dict(zip(PHASES, map(float, demand_kvar[i]))),
                "gen_p_max_kw": gen_each if g else 0.0,
                "gen_q_max_kvar": gen_each if g else 0.0,
                "gen_q_min_kvar": -gen_each if g else 0.0,
            }
        )
    edges = []
    for a, b in sorted(pairs):
        lines = []
        for k in range(1, 3 if rng.random() < parallel_prob else 2):
            r = float(rng.uniform(0.01, 0.08))
            x = float(rng.uniform(0.01, 0.08))
            cap = float(rng.uniform(0.25, 0.8) * total / 3.0 * capacity_scale)
            lines.append({"k": k, "r": r, "x": x, "p_max_kw": cap, "q_max_kvar": cap})
        edges.append({"from": ids[a], "to": ids[b], "lines": lines})
    return network_from_dict(
        {"name": name or f"tiny-{seed}", "base_mva": 1.0, "base_kv": 4.16, "buses": buses, "edges": edges}
    )


def build_network(
    buses: list[tuple],
    edges: list[tuple],
    *,
    phases: tuple[str, ...] = ("a",),
    name: str = "test",
    base_mva: float = 1.0,
    **extra,
) -> DistributionNetwork:
    """Compact builder for hand-made fixtures.

    ``buses``: ``(id, demand_kw, demand_kvar, gen_kw)`` with ``gen_kw > 0``
    marking a generator; values are per phase. ``edges``: ``(u, v, lines)``
    where each line is ``(r, x)`` or ``(r, x, cap_kw)``.
    """
    bus_list = []
    for bid, kw, kvar, gen in buses:
        bus_list.append(
            {
                "id": bid,
                "kind": "generator" if gen > 0 else "consumer",
                "phases": list(phases),
                "demand_kw": kw,
                "demand_kvar": kvar,
                "gen_p_max_kw": gen,
                "gen_q_max_kvar": gen,
                "gen_q_min_kvar": -gen,
            }
        )
    edge_list = []
    for u, v, lines in edges:
        out = []
        for k, line_def in enumerate(lines, start=1):
            r, x, *cap = line_def
            line = {"k": k, "phases": list(phases), "r": r, "x": x}
            if cap:
                line["p_max_kw"] = line["q_max_kvar"] = cap[0]
            out.append(line)
        edge_list.append({"from": u, "to": v, "lines": out})
    data = {"name": name, "base_mva": base_mva, "base_kv": 4.16, "buses": bus_list, "edges": edge_list}
    data.update(extra)
    return network_from_dict(data)


def random_forest(network: DistributionNetwork, roots, rng: np.random.Generator):
    """Uniformly shuffled Kruskal forest with one root per component and a
    random line on each chosen edge."""
    from gridforest.radial import RadialConfiguration

    roots = sorted(roots)
    parent = {b: b for b in network.bus_ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for r in roots[1:]:
        parent[find(r)] = find(roots[0])
    selected = []
    for i in rng.permutation(network.n_edges):
        e = network.edges[int(i)]
        a, b = find(e.from_bus), find(e.to_bus)
        if a != b:
            parent[a] = b
            selected.append(e.lines[int(rng.integers(len(e.lines)))].key)
    return RadialConfiguration(frozenset(selected), frozenset(roots))

"""Regenerate the JSON networks shipped in src/gridforest/fixtures."""

from pathlib import Path

from gridforest.netgen import WsParams, generate_ws
from gridforest.network import network_from_dict, save_network

OUT = Path(__file__).resolve().parents[1] / "src" / "gridforest" / "fixtures"
ABC = ["a", "b", "c"]


def per_phase(value, phases=ABC):
    return {p: value for p in phases}


def bus(bid, demand=0.0, kvar_ratio=0.3, gen=None, phases=ABC):
    out = {
        "id": bid,
        "kind": "generator" if gen else "consumer",
        "phases": phases,
        "demand_kw": per_phase(demand, phases),
        "demand_kvar": per_phase(demand * kvar_ratio, phases),
        "v_min_pu": 0.9,
        "v_max_pu": 1.1,
    }
    if gen:
        out.update(
            gen_p_max_kw=per_phase(gen, phases),
            gen_p_min_kw=per_phase(0.0, phases),
            gen_q_max_kvar=per_phase(0.6 * gen, phases),
            gen_q_min_kvar=per_phase(-0.6 * gen, phases),
        )
    return out


def edge(u, v, r, x, cap, phases=ABC, k=1):
    return {
        "from": u,
        "to": v,
        "lines": [
            {
                "k": k,
                "phases": phases,
                "r": per_phase(r, phases),
                "x": per_phase(x, phases),
                "p_max_kw": cap,
                "q_max_kvar": cap,
                "theta_min_rad": -0.5,
                "theta_max_rad": 0.5,
            }
        ],
    }


def network(name, buses, edges):
    return network_from_dict(
        {"name": name, "base_kv": 4.16, "base_mva": 1.0, "units": "pu", "buses": buses, "edges": edges}
    )


def two_bus():
    # single phase, R = X = 0.01 p.u., 1.0 + j0 p.u. load on a 1 MVA base
    return network(
        "two_bus",
        [bus("g1", gen=1500.0, phases=["a"]), bus("b2", 1000.0, kvar_ratio=0.0, phases=["a"])],
        [edge("g1", "b2", 0.01, 0.01, 5000.0, phases=["a"])],
    )


def triangle():
    return network(
        "triangle",
        [bus("g1", gen=500.0), bus("b2", 100.0), bus("b3", 100.0)],
        [edge("g1", "b2", 0.01, 0.01, 1000.0), edge("b2", "b3", 0.02, 0.01, 1000.0), edge("g1", "b3", 0.03, 0.01, 1000.0)],
    )


def diamond():
    # b2-b4 is the cheapest path to b4 but too thin for any flow beyond b2's own
    return network(
        "diamond",
        [bus("g1", gen=500.0), bus("b2", 50.0), bus("b3", 50.0), bus("b4", 100.0)],
        [
            edge("g1", "b2", 0.01, 0.01, 1000.0),
            edge("g1", "b3", 0.01, 0.01, 1000.0),
            edge("b2", "b4", 0.005, 0.005, 40.0),
            edge("b3", "b4", 0.03, 0.02, 1000.0),
        ],
    )


def tiny6():
    # g1 sits next to the heavy loads but cannot carry the whole demand alone
    return network(
        "tiny6",
        [
            bus("g1", gen=300.0),
            bus("g2", gen=800.0),
            bus("g3", gen=800.0),
            bus("b1", 200.0),
            bus("b2", 200.0),
            bus("b3", 50.0),
        ],
        [
            edge("g1", "b1", 0.01, 0.01, 1000.0),
            edge("g1", "b2", 0.01, 0.01, 1000.0),
            edge("b1", "b2", 0.02, 0.01, 1000.0),
            edge("b2", "b3", 0.02, 0.02, 1000.0),
            edge("b3", "g2", 0.03, 0.02, 1000.0),
            edge("b1", "g3", 0.04, 0.02, 1000.0),
            edge("g2", "g3", 0.05, 0.03, 1000.0),
        ],
    )


def ws30():
    return generate_ws(WsParams(30, 4, 0.1, 3, 550.0 * 30, 4.44, seed=11, name="ws30"))


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for build in (two_bus, triangle, diamond, tiny6, ws30):
        net = build()
        save_network(net, OUT / f"{net.name}.json")
        print(net.name, net.n_buses, net.n_edges)

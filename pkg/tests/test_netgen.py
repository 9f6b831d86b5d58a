import pytest

from gridforest.errors import InvalidParams
from gridforest.netgen import WsParams, generate_ws
from gridforest.network import dumps_network, validate_network

# WS-120 reference totals: 65,726 kW demand and 292,115.6 kW generation
WS120_DEMAND_KW = 65726.0
WS120_GENERATION_KW = 292115.6


def test_ws120_reference_totals():
    ratio = WS120_GENERATION_KW / WS120_DEMAND_KW
    assert ratio == pytest.approx(4.44, abs=0.005)
    net = generate_ws(WsParams(120, 8, 0.1, 5, WS120_DEMAND_KW, ratio, seed=0))
    assert net.n_buses == 120
    assert len(net.generator_pool) == 5
    assert net.total_demand_kw == pytest.approx(WS120_DEMAND_KW, rel=1e-12)
    assert net.total_generation_kw() == pytest.approx(WS120_GENERATION_KW, rel=1e-12)
    assert validate_network(net) == []


@pytest.mark.parametrize("n,k", [(20, 4), (40, 6), (101, 10)])
def test_no_rewiring_gives_a_ring_lattice(n, k):
    net = generate_ws(WsParams(n, k, 0.0, 2, 1000.0, 3.0, seed=1))
    assert net.n_edges == n * k // 2
    degrees = {b: len(adj) for b, adj in net.adjacency.items()}
    assert set(degrees.values()) == {k}


def test_same_seed_same_bytes():
    params = WsParams(60, 4, 0.3, 3, 25000.0, 4.44, seed=17)
    assert dumps_network(generate_ws(params)) == dumps_network(generate_ws(params))
    other = WsParams(60, 4, 0.3, 3, 25000.0, 4.44, seed=18)
    assert dumps_network(generate_ws(params)) != dumps_network(generate_ws(other))


def test_hub_sources_have_top_degree():
    net = generate_ws(WsParams(80, 6, 0.5, 4, 10000.0, 4.0, seed=3, hubs=True))
    degree = {b: len(adj) for b, adj in net.adjacency.items()}
    cutoff = sorted(degree.values(), reverse=True)[3]
    assert all(degree[g] >= cutoff for g in net.generator_pool)


@pytest.mark.parametrize(
    "bad",
    [
        dict(n_nodes=2),
        dict(mean_degree=3),
        dict(mean_degree=40),
        dict(rewire_prob=1.5),
        dict(n_sources=0),
        dict(demand_total_kw=0.0),
        dict(generation_ratio=1.0),
    ],
)
def test_parameter_checks(bad):
    params = dict(n_nodes=40, mean_degree=4, rewire_prob=0.1, n_sources=2, demand_total_kw=1000.0, generation_ratio=3.0)
    params.update(bad)
    with pytest.raises(InvalidParams):
        generate_ws(WsParams(**params))


def test_generated_networks_are_healthy():
    for seed in range(5):
        net = generate_ws(WsParams(50, 4, 0.2, 1 + seed, 20000.0, 4.44, seed=seed))
        assert validate_network(net) == []
        assert all(ln.p_max_kw > 0 for e in net.edges for ln in e.lines)

import itertools

import pytest

from conftest import fixture_network
from gridforest.errors import KappaTooLarge, NoFeasibleForest, TooLarge
from gridforest.oracle import count_forests, enumerate_forests, oracle_problem1, oracle_problem2
from gridforest.power import evaluate, exact_loss
from gridforest.radial import RadialConfiguration, is_radial
from instances import build_network, tiny_network


def graph(n, pairs, roots=("n0",), gen_kw=1000):
    buses = [(f"n{i}", 0 if f"n{i}" in roots else 10, 0, gen_kw if f"n{i}" in roots else 0) for i in range(n)]
    return build_network(buses, [(f"n{u}", f"n{v}", [(0.01, 0.01)]) for u, v in pairs])


@pytest.mark.parametrize(
    "n,pairs,expected",
    [
        (3, [(0, 1), (1, 2), (0, 2)], 3),
        (4, [(0, 1), (1, 2), (2, 3), (3, 0)], 4),
        (4, list(itertools.combinations(range(4), 2)), 16),
    ],
)
def test_spanning_tree_counts(n, pairs, expected):
    net = graph(n, pairs)
    configs = list(enumerate_forests(net, ["n0"]))
    assert len(configs) == expected == count_forests(net, ["n0"])
    assert len(set(configs)) == expected
    assert all(is_radial(c, net) for c in configs)


def test_count_includes_parallel_lines_and_several_roots():
    net = fixture_network("tiny6")
    forests = list(enumerate_forests(net, net.generator_pool))
    assert len(forests) == count_forests(net, net.generator_pool)
    assert all(is_radial(c, net) for c in forests)
    doubled = build_network(
        [("g", 0, 0, 100), ("a", 1, 0, 0), ("b", 1, 0, 0)],
        [("g", "a", [(0.01, 0.01), (0.02, 0.01)]), ("a", "b", [(0.01, 0.01)]), ("b", "g", [(0.01, 0.01)])],
    )
    # trees of the triangle, counting each choice of the doubled edge's line
    assert count_forests(doubled, ["g"]) == len(list(enumerate_forests(doubled, ["g"]))) == 5


def test_two_bus_unique_tree():
    net = fixture_network("two_bus")
    res = oracle_problem1(net, ["g1"])
    assert res.config == RadialConfiguration(frozenset({("g1", "b2", 1)}), frozenset({"g1"}))
    assert (res.n_enumerated, res.n_feasible) == (1, 1)


def test_triangle_best_by_full_evaluation():
    net = fixture_network("triangle")
    res = oracle_problem1(net, ["g1"])
    losses = {c: exact_loss(evaluate(net, c).solution, net) for c in enumerate_forests(net, ["g1"])}
    assert res.config == min(losses, key=losses.get)
    assert res.loss_kw == pytest.approx(min(losses.values()))


def test_capacity_forces_the_only_feasible_tree():
    net = fixture_network("diamond")
    res = oracle_problem1(net, ["g1"])
    assert res.n_enumerated == 4 and res.n_feasible == 1
    assert ("b2", "b4", 1) not in res.config.selected


def test_no_feasible_forest():
    net = build_network([("g", 0, 0, 100), ("b", 50, 0, 0)], [("g", "b", [(0.01, 0.01, 10.0)])])
    with pytest.raises(NoFeasibleForest):
        oracle_problem1(net, ["g"])


def test_problem2_with_full_pool_matches_problem1():
    net = fixture_network("tiny6")
    p2 = oracle_problem2(net, 3)
    p1 = oracle_problem1(net, net.generator_pool)
    assert p2.n_subsets == 1
    assert p2.config == p1.config and p2.loss_kw == p1.loss_kw


def ten_generator_network():
    gens = [(f"g{i}", 0, 0, 100) for i in range(10)]
    return build_network(
        gens + [("hub", 50, 0, 0)],
        [(f"g{i}", "hub", [(0.01 * (i + 1), 0.01)]) for i in range(10)],
    )


def test_ten_choose_three_subsets():
    net = ten_generator_network()
    res = oracle_problem2(net, 3)
    assert res.n_subsets == 120
    assert res.n_enumerated == 120 * 3  # the hub hangs from one of the three roots


def test_tiny6_optimum_is_not_the_proximal_generator():
    from gridforest.search import greedy_init

    net = fixture_network("tiny6")
    res = oracle_problem2(net, 1)
    assert res.active_set == ("g2",)
    assert greedy_init(net, 1) == ("g1",)
    assert res.loss_kw == pytest.approx(15.100461409629466, rel=1e-6)


def test_guards():
    net = tiny_network(0, n_buses=8, n_edges=21)
    with pytest.raises(TooLarge):
        list(enumerate_forests(net, net.generator_pool))
    with pytest.raises(KappaTooLarge):
        oracle_problem2(fixture_network("tiny6"), 4)
    # K6 with three lines per edge: 6^4 trees times 3^5 line choices
    dense = build_network(
        [("n0", 0, 0, 1000)] + [(f"n{i}", 10, 0, 0) for i in range(1, 6)],
        [(f"n{u}", f"n{v}", [(0.01, 0.01)] * 3) for u, v in itertools.combinations(range(6), 2)],
    )
    assert count_forests(dense, ["n0"]) == 6**4 * 3**5
    with pytest.raises(TooLarge):
        oracle_problem2(dense, 1)

import itertools

import numpy as np
import pytest

from conftest import fixture_network
from gridforest.errors import Disconnected, InvalidParams, RepairFailed, UnknownBus
from gridforest.forward import (
    PartitionGrowth,
    SolverOptions,
    ac_sampler,
    forward_solve,
    islander,
    net_concad,
    polish,
    pre_process,
    rewire,
)
from gridforest.netgen import WsParams, generate_ws
from gridforest.oracle import enumerate_forests, oracle_problem1
from gridforest.power import approx_loss, evaluate, exact_loss
from gridforest.radial import RadialConfiguration, is_radial
from instances import build_network


def cfg(lines, roots):
    return RadialConfiguration(frozenset(lines), frozenset(roots))


# -- pre-processing ---------------------------------------------------------


def test_leaf_bridge_is_forced():
    net = build_network(
        [("g", 0, 0, 500), ("a", 10, 0, 0), ("b", 10, 0, 0), ("leaf", 20, 0, 0)],
        [("g", "a", [(0.01, 0.01)]), ("a", "b", [(0.01, 0.01)]), ("b", "g", [(0.01, 0.01)]), ("b", "leaf", [(0.01, 0.01)])],
    )
    reduced = pre_process(net, ["g"])
    assert reduced.forced_keys == [("b", "leaf", 1)]


def test_dominated_line_is_dropped():
    net = build_network(
        [("g", 0, 0, 500), ("b", 5, 0, 0)],
        [("g", "b", [(0.01, 0.01, 10.0), (0.02, 0.01, 5.0)])],
    )
    reduced = pre_process(net, ["g"])
    assert reduced.dropped == [(("g", "b", 2), "dominated")]
    assert [ln.k for ln in reduced.edge_lines("g", "b")] == [1]


def test_demand_without_generator_is_disconnected():
    net = build_network(
        [("g", 0, 0, 500), ("b", 5, 0, 0), ("x", 5, 0, 0), ("y", 5, 0, 0)],
        [("g", "b", [(0.01, 0.01)]), ("x", "y", [(0.01, 0.01)])],
    )
    with pytest.raises(Disconnected):
        pre_process(net, ["g"])


def test_active_set_checks():
    net = fixture_network("triangle")
    with pytest.raises(InvalidParams):
        forward_solve(net, [])
    with pytest.raises(UnknownBus):
        forward_solve(net, ["nope"])
    with pytest.raises(InvalidParams):
        forward_solve(net, ["b2"])
    with pytest.raises(InvalidParams):
        SolverOptions(mode="annealing")


# -- islander ---------------------------------------------------------------


def test_single_generator_takes_everything():
    net = fixture_network("tiny6")
    state = islander(net, pre_process(net, ["g2"]), ["g2"])
    assert len(state.partitions) == 1
    assert sorted(state.partitions[0].buses) == sorted(net.bus_ids)


def barbell():
    left = [("gl", 0, 0, 500), ("l1", 50, 0, 0), ("l2", 50, 0, 0)]
    right = [("gr", 0, 0, 500), ("r1", 50, 0, 0), ("r2", 50, 0, 0)]
    edges = [
        ("gl", "l1", [(0.01, 0.01)]),
        ("l1", "l2", [(0.01, 0.01)]),
        ("l2", "gl", [(0.01, 0.01)]),
        ("gr", "r1", [(0.01, 0.01)]),
        ("r1", "r2", [(0.01, 0.01)]),
        ("r2", "gr", [(0.01, 0.01)]),
        ("l2", "r2", [(0.01, 0.01)]),
    ]
    return build_network(left + right, edges)


def test_barbell_sides_go_to_their_generator():
    net = barbell()
    state = islander(net, pre_process(net, ["gl", "gr"]), ["gl", "gr"])
    sides = {p.root: set(p.buses) for p in state.partitions}
    assert sides == {"gl": {"gl", "l1", "l2"}, "gr": {"gr", "r1", "r2"}}


def capacity_fixture():
    # g1 is electrically closer to the heavy bus h but too small to feed it
    return build_network(
        [("g1", 0, 0, 100), ("g2", 0, 0, 500), ("h", 200, 0, 0), ("l", 20, 0, 0)],
        [("g1", "h", [(0.001, 0.01)]), ("h", "g2", [(0.01, 0.001)]), ("g1", "l", [(0.01, 0.01)])],
    )


def _feasible_assignments(net, roots, margin):
    """Every connected, budget-respecting bus-to-root assignment."""
    others = [b for b in net.bus_ids if b not in roots]
    out = []
    for choice in itertools.product(roots, repeat=len(others)):
        assign = dict(zip(others, choice)) | {r: r for r in roots}
        ok = True
        for r in roots:
            members = {b for b, g in assign.items() if g == r}
            need = sum(net.bus_map[b].total_demand_kw for b in members) * (1 + margin)
            if need > net.total_generation_kw([r]) / len(net.bus_map[r].phases) + 1e-9:
                ok = False
            seen, stack = {r}, [r]
            while stack:
                x = stack.pop()
                for y, _ in net.adjacency[x]:
                    if y in members and y not in seen:
                        seen.add(y)
                        stack.append(y)
            ok = ok and seen == members
        if ok:
            out.append(assign)
    return out


def test_heavy_bus_goes_to_the_farther_generator():
    net = capacity_fixture()
    state = islander(net, pre_process(net, ["g1", "g2"]), ["g1", "g2"])
    assert state.partition_of("h").root == "g2"
    feasible = _feasible_assignments(net, ["g1", "g2"], state.loss_margin)
    assert feasible and all(a["h"] == "g2" for a in feasible)
    assert {b: state.partition_of(b).root for b in net.bus_ids} in feasible


# -- construction -----------------------------------------------------------


def star_growth(center_lines=None):
    spokes = [("s1", 10, 0, 0), ("s2", 20, 0, 0), ("s3", 30, 0, 0)]
    edges = [("c", s[0], [(0.01, 0.01)]) for s in spokes]
    if center_lines:
        edges[0] = ("c", "s1", center_lines)
    net = build_network([("c", 0, 0, 500)] + spokes, edges)
    reduced = pre_process(net, ["c"])
    state = islander(net, reduced, ["c"])
    return net, reduced, PartitionGrowth(net, reduced, state.partitions[0])


def test_star_frontier_and_exhaustion():
    net, _, growth = star_growth()
    cands = net_concad(net, growth)
    assert sorted(c.head for c in cands) == ["s1", "s2", "s3"]
    assert len({c.line for c in cands}) == 3
    rng = np.random.default_rng(0)
    while growth.remaining:
        ac_sampler(growth, SolverOptions(), rng)
    assert net_concad(net, growth) == []


def test_frontier_line_respects_capacity():
    # k=1 is cheaper but cannot carry the 10 kW demand; it is not dominated
    # because it has the lower resistance
    net, reduced, growth = star_growth([(0.01, 0.01, 5.0), (0.03, 0.01, 50.0)])
    (cand,) = [c for c in net_concad(net, growth) if c.head == "s1"]
    assert cand.line == ("c", "s1", 2)


def test_sampler_weight_at_the_root():
    # 0.5 + j0.1 p.u. demand behind one line with R/Z = 1/sqrt(2)
    net = build_network([("g", 0, 0, 5000), ("b", 500.0, 100.0, 0)], [("g", "b", [(0.01, 0.01)])])
    reduced = pre_process(net, ["g"])
    growth = PartitionGrowth(net, reduced, islander(net, reduced, ["g"]).partitions[0])
    (cand,) = net_concad(net, growth)
    assert cand.weight == pytest.approx(0.6 / (0.7071067811865476 * 0.6))
    assert cand.weight == pytest.approx(1.4142, abs=1e-4)


def test_shorter_path_wins_in_greedy_mode():
    net = build_network(
        [("g", 0, 0, 5000), ("m", 0, 0, 0), ("near", 100, 0, 0), ("far", 100, 0, 0)],
        [("g", "m", [(0.01, 0.0001)]), ("m", "far", [(0.01, 0.01)]), ("g", "near", [(0.01, 0.01)])],
    )
    reduced = pre_process(net, ["g"])
    growth = PartitionGrowth(net, reduced, islander(net, reduced, ["g"]).partitions[0])
    growth.attach(next(i for i, ln in enumerate(growth.c_line) if ln.key == ("g", "m", 1) and growth.buses[growth.c_head[i]] == "m"))
    weights = {c.head: c.weight for c in net_concad(net, growth)}
    assert weights["near"] > weights["far"]
    assert ac_sampler(growth, SolverOptions(), np.random.default_rng(0)).head == "near"


def test_pass_through_bus_has_zero_weight_and_goes_last():
    net = build_network(
        [("g", 0, 0, 5000), ("p", 0, 0, 0), ("d", 100, 0, 0)],
        [("g", "p", [(0.01, 0.01)]), ("g", "d", [(0.01, 0.01)])],
    )
    reduced = pre_process(net, ["g"])
    growth = PartitionGrowth(net, reduced, islander(net, reduced, ["g"]).partitions[0])
    weights = {c.head: c.weight for c in net_concad(net, growth)}
    assert weights["p"] == 0.0 and weights["d"] > 0
    rng = np.random.default_rng(0)
    assert ac_sampler(growth, SolverOptions(mode="stochastic"), rng).head == "d"
    assert ac_sampler(growth, SolverOptions(mode="stochastic"), rng).head == "p"


# -- rewire and polish ------------------------------------------------------


def test_diamond_rewire_reaches_the_only_feasible_tree():
    net = fixture_network("diamond")
    feasible = [c for c in enumerate_forests(net, ["g1"]) if evaluate(net, c).feasible]
    assert len(feasible) == 1
    start = cfg([("g1", "b2", 1), ("g1", "b3", 1), ("b2", "b4", 1)], ["g1"])
    assert not evaluate(net, start).feasible
    repaired = rewire(net, start, reduced=pre_process(net, ["g1"]))
    assert repaired == feasible[0]
    assert len(repaired.selected ^ start.selected) == 2  # one swap


def test_rewire_leaves_feasible_config_alone():
    net = fixture_network("diamond")
    good = cfg([("g1", "b2", 1), ("g1", "b3", 1), ("b3", "b4", 1)], ["g1"])
    assert rewire(net, good) is good


def test_rewire_fails_when_everything_is_overloaded():
    net = build_network(
        [("g", 0, 0, 5000), ("a", 300, 0, 0), ("b", 300, 0, 0)],
        [("g", "a", [(0.01, 0.01, 100.0)]), ("a", "b", [(0.01, 0.01, 100.0)]), ("b", "g", [(0.01, 0.01, 100.0)])],
    )
    with pytest.raises(RepairFailed) as info:
        rewire(net, cfg([("g", "a", 1), ("a", "b", 1)], ["g"]))
    assert is_radial(info.value.config, net)


def test_polish_never_worsens_loss():
    net = fixture_network("tiny6")
    for c in itertools.islice(enumerate_forests(net, net.generator_pool), 0, None, 3):
        ev = evaluate(net, c)
        if not ev.feasible:
            continue
        after = evaluate(net, polish(net, c))
        assert after.feasible
        assert exact_loss(after.solution, net) <= exact_loss(ev.solution, net) + 1e-12


# -- end to end -------------------------------------------------------------


def test_two_bus_unique_tree():
    net = fixture_network("two_bus")
    rep = forward_solve(net, ["g1"], SolverOptions(seed=7))
    assert rep.configuration == cfg([("g1", "b2", 1)], ["g1"])
    assert rep.exact_loss_kw == pytest.approx(0.5 * 0.01 * abs(complex(1.0102062074830855, -0.010206207483085445)) ** 2 * 1000, rel=1e-7)


def test_triangle_picks_the_min_approx_tree():
    net = fixture_network("triangle")
    trees = list(enumerate_forests(net, ["g1"]))
    assert len(trees) == 3
    best = min(trees, key=lambda c: approx_loss(net, c))
    rep = forward_solve(net, ["g1"])
    assert rep.configuration == best
    assert rep.configuration == oracle_problem1(net, ["g1"]).config


def test_ws120_five_roots():
    net = generate_ws(WsParams(120, 8, 0.1, 5, 65726.0, 4.44, seed=1))
    rep = forward_solve(net, net.generator_pool, SolverOptions(seed=1))
    assert is_radial(rep.configuration, net)
    assert rep.feasible
    assert rep.loss_fraction <= net.loss_margin
    assert rep.timings["total"] > 0
    assert set(rep.timings) >= {"pre_process", "islander", "construct", "evaluate"}


def test_same_seed_same_report():
    from gridforest.report import strip_timings

    net = generate_ws(WsParams(60, 4, 0.2, 3, 30000.0, 4.44, seed=9))
    a = forward_solve(net, net.generator_pool, SolverOptions(mode="stochastic", seed=3))
    b = forward_solve(net, net.generator_pool, SolverOptions(mode="stochastic", seed=3))
    assert strip_timings(a.to_dict()) == strip_timings(b.to_dict())


def test_report_fields_for_tiny6():
    net = fixture_network("tiny6")
    rep = forward_solve(net, net.generator_pool)
    assert rep.feasible and rep.problem == 1
    assert rep.stats["partitions"] == 3
    assert rep.active_set == ["g1", "g2", "g3"]
    assert rep.approx_loss_kw > 0 and rep.physical_loss_kw >= rep.exact_loss_kw

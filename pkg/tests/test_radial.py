from collections import deque

import pytest

from gridforest.errors import NotForest, NotRadial
from gridforest.radial import (
    RadialConfiguration,
    downstream_set,
    is_radial,
    orient,
    orient_partial,
    subtree_sizes,
    upstream_path,
)
from instances import build_network


def path3():
    return build_network(
        [("b1", 0, 0, 100), ("b2", 5, 0, 0), ("b3", 5, 0, 0)],
        [("b1", "b2", [(0.01, 0.01)]), ("b2", "b3", [(0.01, 0.01)])],
    )


def triangle():
    return build_network(
        [("g", 0, 0, 100), ("b", 5, 0, 0), ("c", 5, 0, 0)],
        [("g", "b", [(0.01, 0.01)]), ("b", "c", [(0.01, 0.01)]), ("g", "c", [(0.01, 0.01)])],
    )


def two_feeders():
    return build_network(
        [("g1", 0, 0, 100), ("g2", 0, 0, 100), ("a", 1, 0, 0), ("b", 1, 0, 0), ("c", 1, 0, 0)],
        [
            ("g1", "a", [(0.01, 0.01)]),
            ("a", "b", [(0.01, 0.01), (0.02, 0.01)]),
            ("b", "g2", [(0.01, 0.01)]),
            ("g2", "c", [(0.01, 0.01)]),
            ("c", "a", [(0.01, 0.01)]),
        ],
    )


def cfg(lines, roots):
    return RadialConfiguration(frozenset(lines), frozenset(roots))


def test_path_is_radial():
    assert is_radial(cfg([("b1", "b2", 1), ("b2", "b3", 1)], ["b1"]), path3())


def test_cycle_is_not_radial():
    net = triangle()
    assert not is_radial(cfg([("g", "b", 1), ("b", "c", 1), ("g", "c", 1)], ["g"]), net)


def test_two_trees_are_radial():
    net = two_feeders()
    assert is_radial(cfg([("g1", "a", 1), ("a", "b", 1), ("g2", "c", 1)], ["g1", "g2"]), net)


def test_rootless_or_doubly_rooted_components_fail():
    net = path3()
    assert not is_radial(cfg([("b1", "b2", 1), ("b2", "b3", 1)], []), net)
    net = two_feeders()
    full = [("g1", "a", 1), ("a", "b", 1), ("b", "g2", 1), ("g2", "c", 1)]
    assert not is_radial(cfg(full, ["g1", "g2"]), net)
    assert is_radial(cfg(full, ["g1"]), net)


def test_not_spanning_is_not_radial():
    assert not is_radial(cfg([("b1", "b2", 1)], ["b1"]), path3())


def test_parallel_lines_of_one_edge_are_a_cycle():
    net = two_feeders()
    assert not is_radial(cfg([("g1", "a", 1), ("a", "b", 1), ("a", "b", 2), ("g2", "c", 1)], ["g1", "g2"]), net)


def test_orientation_of_path():
    f = orient(cfg([("b1", "b2", 1), ("b2", "b3", 1)], ["b1"]), path3())
    assert f.parent["b3"][0] == "b2" and f.parent["b2"][0] == "b1" and f.parent["b1"] is None
    assert f.depth["b3"] == 2
    assert f.order[0] == "b1"


def test_star_depths():
    net = build_network(
        [("g", 0, 0, 100)] + [(f"l{i}", 1, 0, 0) for i in range(4)],
        [("g", f"l{i}", [(0.01, 0.01)]) for i in range(4)],
    )
    f = orient(cfg([("g", f"l{i}", 1) for i in range(4)], ["g"]), net)
    assert all(f.depth[f"l{i}"] == 1 for i in range(4))


def test_component_map_matches_bfs():
    net = two_feeders()
    config = cfg([("g1", "a", 1), ("a", "b", 1), ("g2", "c", 1)], ["g1", "g2"])
    f = orient(config, net)
    adj = {b: [] for b in net.bus_ids}
    for u, v, _ in config.selected:
        adj[u].append(v)
        adj[v].append(u)
    for r in config.roots:
        seen, queue = {r}, deque([r])
        while queue:
            x = queue.popleft()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
        assert {b for b, root in f.component.items() if root == r} == seen


def test_orient_rejects_non_radial():
    with pytest.raises(NotRadial):
        orient(cfg([("b1", "b2", 1)], ["b1"]), path3())


def test_downstream_and_upstream():
    f = orient(cfg([("b1", "b2", 1), ("b2", "b3", 1)], ["b1"]), path3())
    assert downstream_set(f, ("b2", "b3", 1)) == {"b3"}
    assert downstream_set(f, ("b1", "b2", 1)) == {"b2", "b3"}
    assert upstream_path(f, "b3") == [("b1", "b2", 1), ("b2", "b3", 1)]
    assert upstream_path(f, "b1") == []
    assert subtree_sizes(f) == {"b1": 3, "b2": 2, "b3": 1}
    assert f.lines == (("b1", "b2", 1), ("b2", "b3", 1))


def test_partial_orientation():
    net = two_feeders()
    f = orient_partial(cfg([("g1", "a", 1)], ["g1", "g2"]), net)
    assert f.parent["a"][0] == "g1"
    assert f.parent["b"] is None
    with pytest.raises(NotForest):
        orient_partial(cfg([("g1", "a", 1), ("a", "b", 1), ("b", "g2", 1)], ["g1", "g2"]), net)


def test_build_normalizes_orientation_and_round_trips():
    net = path3()
    config = RadialConfiguration.build(net, [("b2", "b1", 1), ("b3", "b2", 1)], ["b1"])
    assert config.selected == {("b1", "b2", 1), ("b2", "b3", 1)}
    assert RadialConfiguration.from_dict(config.to_dict(), net) == config

import json
import math

import numpy as np
import pytest

from conftest import FIXTURE_NAMES, fixture_network
from gridforest.errors import NonPositiveBase, ParseError, UnknownBus, UnknownEdge, ValidationError
from gridforest.netgen import WsParams, generate_ws
from gridforest.network import (
    dumps_network,
    load_network,
    network_from_dict,
    network_to_dict,
    save_network,
    to_per_unit,
    validate_network,
)
from instances import build_network


def minimal_dict():
    return {
        "name": "mini",
        "base_kv": 4.16,
        "base_mva": 1.0,
        "buses": [
            {"id": "g1", "kind": "generator", "phases": ["a"], "gen_p_max_kw": 100, "gen_q_max_kvar": 100},
            {"id": "b2", "phases": ["a"], "demand_kw": 10, "demand_kvar": 2},
        ],
        "edges": [{"from": "g1", "to": "b2", "lines": [{"k": 1, "phases": ["a"], "r": 0.01, "x": 0.02}]}],
    }


def test_minimal_network_counts():
    net = network_from_dict(minimal_dict())
    assert (net.n_buses, net.n_edges, len(net.generator_pool)) == (2, 1, 1)
    assert validate_network(net) == []


def test_dangling_edge_names_the_field():
    data = minimal_dict()
    data["edges"][0]["to"] = "b99"
    with pytest.raises(ValidationError) as info:
        network_from_dict(data)
    assert info.value.path == "edges[0].to"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("buses"),
        lambda d: d["edges"][0].pop("lines"),
        lambda d: d["edges"][0]["lines"][0].pop("r"),
        lambda d: d.update(units="furlong"),
        lambda d: d["buses"][0].update(id=3),
    ],
)
def test_malformed_input_is_a_parse_error(mutate):
    data = minimal_dict()
    mutate(data)
    with pytest.raises(ParseError):
        network_from_dict(data)


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_network(path)
    with pytest.raises(ParseError):
        load_network(tmp_path / "missing.json")


def test_power_to_per_unit():
    assert to_per_unit(5400.0, 4.16, 10.0) == pytest.approx(0.54)


def test_impedance_to_per_unit():
    assert to_per_unit(1.7306, 4.16, 1.0, "impedance") == pytest.approx(0.1000, abs=5e-5)
    assert 4.16**2 / 1.0 == pytest.approx(17.3056)


def test_already_pu_passthrough_and_mapping():
    assert to_per_unit(0.3, 4.16, 1.0, already_pu=True) == 0.3
    assert to_per_unit({"a": 1000.0}, 4.16, 1.0) == {"a": 1.0}


@pytest.mark.parametrize("kv,mva", [(4.16, 0.0), (0.0, 1.0), (-1.0, 1.0)])
def test_non_positive_base(kv, mva):
    with pytest.raises(NonPositiveBase):
        to_per_unit(1.0, kv, mva)


def test_ohm_units_are_converted():
    data = minimal_dict()
    data["units"] = "ohm"
    data["edges"][0]["lines"][0].update(r=1.7306, x=3.4612)
    ln = network_from_dict(data).line("g1", "b2", 1)
    assert ln.r["a"] == pytest.approx(0.1, abs=5e-5)
    assert ln.x["a"] == pytest.approx(0.2, abs=1e-4)


def test_insufficient_generation_issue():
    data = minimal_dict()
    data["buses"][1]["demand_kw"] = 500
    codes = [i.code for i in validate_network(network_from_dict(data))]
    assert "InsufficientGeneration" in codes


def test_inverted_voltage_bounds_issue():
    data = minimal_dict()
    data["buses"][1].update(v_min_pu=1.05, v_max_pu=0.95)
    codes = [i.code for i in validate_network(network_from_dict(data))]
    assert codes == ["VoltageBoundsInverted"]


def test_disconnected_and_zero_impedance_issues():
    net = build_network(
        [("g1", 0, 0, 100), ("b2", 10, 0, 0), ("b3", 10, 0, 0), ("b4", 1, 0, 0)],
        [("g1", "b2", [(0.0, 0.0)]), ("b3", "b4", [(0.01, 0.01)])],
    )
    codes = {i.code for i in validate_network(net)}
    assert {"Disconnected", "ZeroImpedance"} <= codes


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_shipped_fixtures_are_healthy(name):
    assert validate_network(fixture_network(name)) == []


def test_ws120_round_trip_is_byte_identical(tmp_path):
    net = generate_ws(WsParams(120, 8, 0.1, 5, 65726.0, 4.44, seed=5))
    assert net.n_buses == 120
    first = tmp_path / "a.json"
    save_network(net, first)
    again = load_network(first)
    second = tmp_path / "b.json"
    save_network(again, second)
    assert first.read_bytes() == second.read_bytes()
    assert again == net


def test_serialization_keeps_infinite_capacity_as_null():
    net = network_from_dict(minimal_dict())
    data = network_to_dict(net)
    assert data["edges"][0]["lines"][0]["p_max_kw"] is None
    assert network_from_dict(json.loads(dumps_network(net))) == net


def test_lookups():
    net = fixture_network("triangle")
    ln = net.line("b2", "g1", 1)
    assert ln.key == ("g1", "b2", 1)
    assert net.canonical_line_key("b3", "b2", 1) == ("b2", "b3", 1)
    with pytest.raises(UnknownEdge):
        net.line("g1", "b2", 7)
    with pytest.raises(UnknownEdge):
        net.edge("g1", "nowhere")
    with pytest.raises(UnknownBus):
        from gridforest.radial import RadialConfiguration, is_radial

        is_radial(RadialConfiguration(frozenset(), frozenset({"zz"})), net)


def test_loss_coefficient_is_r_cubed_over_z_squared():
    net = fixture_network("two_bus")
    ln = net.line("g1", "b2", 1)
    assert ln.loss_coef[0] == pytest.approx(0.01**3 / (2 * 0.01**2))
    assert ln.cos2("a") == pytest.approx(0.5)
    assert ln.admittance_angle("a") == pytest.approx(-math.pi / 4)
    assert np.array_equal(net.line_table.loss_coef[net.line_rows([ln.key])][0], ln.loss_coef)


def test_alpha_scales_generation():
    data = minimal_dict()
    data["alpha"] = 0.5
    net = network_from_dict(data)
    assert net.total_generation_kw() == pytest.approx(50.0)
    assert net.gen_limits_pu("g1")["p_max"][0] == pytest.approx(0.05)

"""Multi-phase distribution network model, per-unit handling and JSON I/O.

A network is a set of buses joined by edges; every edge carries one or more
parallel physical lines, each on a subset of the phases ``a``, ``b``, ``c``.
Powers are kept in kW/kvar on the buses (as in the file) and impedances in
per-unit on the lines. Solvers read the per-unit arrays exposed as cached
properties.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from gridforest.errors import NonPositiveBase, ParseError, ValidationError

PHASES: tuple[str, ...] = ("a", "b", "c")
PHASE_INDEX = {p: i for i, p in enumerate(PHASES)}
BUS_KINDS = ("generator", "consumer")

LineKey = tuple[str, str, int]
EdgeKey = tuple[str, str]


def to_per_unit(value, base_kv: float, base_mva: float, quantity: str = "power", already_pu: bool = False):
    """Convert a power (kW/kvar/kVA) or an impedance (ohm) to per-unit.

    ``value`` may be a scalar, an array or a phase mapping. Values flagged
    ``already_pu`` are returned untouched.
    """
    if base_kv <= 0 or base_mva <= 0:
        raise NonPositiveBase(f"bases must be positive (base_kv={base_kv}, base_mva={base_mva})")
    if already_pu:
        return value
    if quantity == "power":
        base = base_mva * 1000.0
    elif quantity == "impedance":
        base = base_kv**2 / base_mva
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    if isinstance(value, Mapping):
        return {k: v / base for k, v in value.items()}
    return value / base


def phase_vector(values: Mapping[str, float], dtype=float) -> np.ndarray:
    out = np.zeros(3, dtype=dtype)
    for ph, v in values.items():
        out[PHASE_INDEX[ph]] = v
    return out


def phase_mask(phases) -> np.ndarray:
    mask = np.zeros(3, dtype=bool)
    for ph in phases:
        mask[PHASE_INDEX[ph]] = True
    return mask


@dataclass(frozen=True)
class Bus:
    id: str
    kind: str
    phases: tuple[str, ...]
    demand_kw: Mapping[str, float] = field(default_factory=dict)
    demand_kvar: Mapping[str, float] = field(default_factory=dict)
    gen_p_max_kw: Mapping[str, float] = field(default_factory=dict)
    gen_p_min_kw: Mapping[str, float] = field(default_factory=dict)
    gen_q_max_kvar: Mapping[str, float] = field(default_factory=dict)
    gen_q_min_kvar: Mapping[str, float] = field(default_factory=dict)
    v_min_pu: float = 0.9
    v_max_pu: float = 1.1

    @property
    def is_generator(self) -> bool:
        return self.kind == "generator"

    @property
    def total_demand_kw(self) -> float:
        return float(sum(self.demand_kw.values()))

    @property
    def total_demand_kvar(self) -> float:
        return float(sum(self.demand_kvar.values()))


@dataclass(frozen=True)
class Line:
    """One physical line ``k`` of an edge. ``r``/``x`` are per-unit, per phase."""

    from_bus: str
    to_bus: str
    k: int
    phases: tuple[str, ...]
    r: Mapping[str, float]
    x: Mapping[str, float]
    p_max_kw: float = math.inf
    q_max_kvar: float = math.inf
    theta_min_rad: float = -math.pi
    theta_max_rad: float = math.pi

    @property
    def key(self) -> LineKey:
        return (self.from_bus, self.to_bus, self.k)

    def impedance(self, phase: str) -> float:
        return math.hypot(self.r[phase], self.x[phase])

    def conductance(self, phase: str) -> float:
        r, x = self.r[phase], self.x[phase]
        return r / (r * r + x * x)

    def susceptance(self, phase: str) -> float:
        r, x = self.r[phase], self.x[phase]
        return -x / (r * r + x * x)

    def admittance_angle(self, phase: str) -> float:
        return math.atan2(-self.x[phase], self.r[phase])

    def cos2(self, phase: str) -> float:
        """cos^2 of the admittance angle, computed as R^2/Z^2."""
        r, x = self.r[phase], self.x[phase]
        z2 = r * r + x * x
        return r * r / z2 if z2 > 0 else 0.0

    @cached_property
    def mask(self) -> np.ndarray:
        return phase_mask(self.phases)

    @cached_property
    def r_vec(self) -> np.ndarray:
        return phase_vector({p: self.r[p] for p in self.phases})

    @cached_property
    def x_vec(self) -> np.ndarray:
        return phase_vector({p: self.x[p] for p in self.phases})

    @cached_property
    def z_vec(self) -> np.ndarray:
        """Complex series impedance per phase (zero on absent phases)."""
        return self.r_vec + 1j * self.x_vec

    @cached_property
    def loss_coef(self) -> np.ndarray:
        """R^3/Z^2 per phase; zero on absent phases and lossless lines."""
        z2 = self.r_vec**2 + self.x_vec**2
        out = np.zeros(3)
        nz = z2 > 0
        out[nz] = self.r_vec[nz] ** 3 / z2[nz]
        return out

    @cached_property
    def r_over_z(self) -> np.ndarray:
        z = np.hypot(self.r_vec, self.x_vec)
        out = np.zeros(3)
        nz = z > 0
        out[nz] = self.r_vec[nz] / z[nz]
        return out

    @property
    def electrical_length(self) -> float:
        """Mean R/Z over the line's phases; used as a routing distance."""
        return float(self.r_over_z[self.mask].mean()) if self.phases else 0.0


@dataclass(frozen=True)
class LineTable:
    row: dict
    mask: np.ndarray
    z: np.ndarray
    loss_coef: np.ndarray
    p_cap: np.ndarray  # (L, 1) per-unit
    q_cap: np.ndarray
    theta_min: np.ndarray
    theta_max: np.ndarray
    from_idx: np.ndarray
    to_idx: np.ndarray


@dataclass(frozen=True)
class Edge:
    from_bus: str
    to_bus: str
    lines: tuple[Line, ...]

    @property
    def key(self) -> EdgeKey:
        return (self.from_bus, self.to_bus)

    def line(self, k: int) -> Line:
        for ln in self.lines:
            if ln.k == k:
                return ln
        raise KeyError(k)

    def other(self, bus: str) -> str:
        return self.to_bus if bus == self.from_bus else self.from_bus


@dataclass(frozen=True)
class DistributionNetwork:
    name: str
    base_kv: float
    base_mva: float
    buses: tuple[Bus, ...]
    edges: tuple[Edge, ...]
    alpha: float = 1.0
    loss_margin: float = 0.20

    # -- lookups ---------------------------------------------------------
    @cached_property
    def bus_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def bus_map(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def _edge_lookup(self) -> dict[frozenset, Edge]:
        return {frozenset(e.key): e for e in self.edges}

    @cached_property
    def adjacency(self) -> dict[str, list[tuple[str, Edge]]]:
        adj: dict[str, list[tuple[str, Edge]]] = {b: [] for b in self.bus_ids}
        for e in sorted(self.edges, key=lambda e: e.key):
            adj[e.from_bus].append((e.to_bus, e))
            adj[e.to_bus].append((e.from_bus, e))
        return adj

    @cached_property
    def generator_pool(self) -> tuple[str, ...]:
        return tuple(sorted(b.id for b in self.buses if b.is_generator))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def kva_base(self) -> float:
        return self.base_mva * 1000.0

    def edge(self, u: str, v: str) -> Edge:
        from gridforest.errors import UnknownEdge

        try:
            return self._edge_lookup[frozenset((u, v))]
        except KeyError:
            raise UnknownEdge(f"no edge between {u!r} and {v!r}") from None

    @cached_property
    def _line_lookup(self) -> dict[LineKey, Line]:
        out = {}
        for e in self.edges:
            for ln in e.lines:
                out[(e.from_bus, e.to_bus, ln.k)] = ln
                out[(e.to_bus, e.from_bus, ln.k)] = ln
        return out

    def line(self, u: str, v: str, k: int) -> Line:
        from gridforest.errors import UnknownEdge

        try:
            return self._line_lookup[(u, v, k)]
        except KeyError:
            self.edge(u, v)
            raise UnknownEdge(f"edge {u!r}-{v!r} has no line k={k}") from None

    def canonical_line_key(self, u: str, v: str, k: int) -> LineKey:
        """Line key in the network's stored edge orientation."""
        return self.line(u, v, k).key

    @cached_property
    def line_table(self) -> LineTable:
        """Per-line arrays indexed by ``line_table.row[key]`` (either orientation)."""
        lines = [ln for e in self.edges for ln in e.lines]
        row = {}
        for i, ln in enumerate(lines):
            row[(ln.from_bus, ln.to_bus, ln.k)] = i
            row[(ln.to_bus, ln.from_bus, ln.k)] = i
        col = lambda f: np.array([f(ln) for ln in lines], dtype=float).reshape(len(lines), -1)  # noqa: E731
        return LineTable(
            row=row,
            mask=np.array([ln.mask for ln in lines], dtype=bool).reshape(len(lines), 3),
            z=np.array([ln.z_vec for ln in lines], dtype=complex).reshape(len(lines), 3),
            loss_coef=col(lambda ln: ln.loss_coef),
            p_cap=col(lambda ln: ln.p_max_kw) / self.kva_base,
            q_cap=col(lambda ln: ln.q_max_kvar) / self.kva_base,
            theta_min=col(lambda ln: ln.theta_min_rad),
            theta_max=col(lambda ln: ln.theta_max_rad),
            from_idx=np.array([self.bus_index[ln.from_bus] for ln in lines], dtype=int),
            to_idx=np.array([self.bus_index[ln.to_bus] for ln in lines], dtype=int),
        )

    def line_rows(self, keys) -> np.ndarray:
        row = self.line_table.row
        return np.array([row[k] for k in keys], dtype=int)

    @cached_property
    def all_line_keys(self) -> tuple[LineKey, ...]:
        return tuple(sorted(ln.key for e in self.edges for ln in e.lines))

    # -- per-unit arrays -------------------------------------------------
    @cached_property
    def load_pu(self) -> np.ndarray:
        """(N, 3) complex demand per bus and phase, per-unit."""
        out = np.zeros((self.n_buses, 3), dtype=complex)
        for i, b in enumerate(self.buses):
            for ph in b.phases:
                out[i, PHASE_INDEX[ph]] = complex(b.demand_kw.get(ph, 0.0), b.demand_kvar.get(ph, 0.0))
        return out / self.kva_base

    @cached_property
    def bus_phase_mask(self) -> np.ndarray:
        return np.array([phase_mask(b.phases) for b in self.buses]).reshape(self.n_buses, 3)

    def gen_limits_pu(self, bus_id: str) -> dict[str, np.ndarray]:
        """Generation bounds of one bus, per phase, per-unit; upper bounds scaled by alpha."""
        b = self.bus_map[bus_id]
        base = self.kva_base
        return {
            "p_max": phase_vector(b.gen_p_max_kw) * self.alpha / base,
            "p_min": phase_vector(b.gen_p_min_kw) / base,
            "q_max": phase_vector(b.gen_q_max_kvar) * self.alpha / base,
            "q_min": phase_vector(b.gen_q_min_kvar) / base,
        }

    @property
    def total_demand_kw(self) -> float:
        return float(sum(b.total_demand_kw for b in self.buses))

    def total_generation_kw(self, active=None) -> float:
        """alpha-adjusted real generation capacity of ``active`` (default: whole pool)."""
        ids = self.generator_pool if active is None else active
        return float(sum(sum(self.bus_map[g].gen_p_max_kw.values()) for g in ids)) * self.alpha


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    code: str
    path: str
    message: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "path": self.path, "message": self.message}


# Issues that make the network unusable as a graph; load_network raises on these.
STRUCTURAL = frozenset(
    {
        "NonPositiveBase",
        "DuplicateBus",
        "UnknownKind",
        "UnknownPhase",
        "EmptyPhases",
        "DanglingEdge",
        "SelfLoop",
        "DuplicateEdge",
        "DuplicateLine",
        "PhaseMismatch",
    }
)


def _phase_issues(phases, path: str) -> list[Issue]:
    issues = []
    if not phases:
        issues.append(Issue("EmptyPhases", path, "phase set is empty"))
    for p in phases:
        if p not in PHASE_INDEX:
            issues.append(Issue("UnknownPhase", path, f"unknown phase {p!r}"))
    return issues


def _structural_issues(net: DistributionNetwork) -> list[Issue]:
    issues: list[Issue] = []
    if not (net.base_kv > 0):
        issues.append(Issue("NonPositiveBase", "base_kv", f"{net.base_kv}"))
    if not (net.base_mva > 0):
        issues.append(Issue("NonPositiveBase", "base_mva", f"{net.base_mva}"))
    seen: dict[str, int] = {}
    for i, b in enumerate(net.buses):
        if b.id in seen:
            issues.append(Issue("DuplicateBus", f"buses[{i}].id", f"duplicate bus id {b.id!r}"))
        seen.setdefault(b.id, i)
        if b.kind not in BUS_KINDS:
            issues.append(Issue("UnknownKind", f"buses[{i}].kind", f"{b.kind!r}"))
        issues += _phase_issues(b.phases, f"buses[{i}].phases")
        for fld in ("demand_kw", "demand_kvar", "gen_p_max_kw", "gen_p_min_kw", "gen_q_max_kvar", "gen_q_min_kvar"):
            for p in getattr(b, fld):
                if p not in b.phases:
                    issues.append(Issue("PhaseMismatch", f"buses[{i}].{fld}.{p}", f"bus has no phase {p!r}"))
    edge_seen: set[frozenset] = set()
    for i, e in enumerate(net.edges):
        for end, attr in ((e.from_bus, "from"), (e.to_bus, "to")):
            if end not in seen:
                issues.append(Issue("DanglingEdge", f"edges[{i}].{attr}", f"unknown bus {end!r}"))
        if e.from_bus == e.to_bus:
            issues.append(Issue("SelfLoop", f"edges[{i}]", f"self loop on {e.from_bus!r}"))
        pair = frozenset(e.key)
        if pair in edge_seen:
            issues.append(Issue("DuplicateEdge", f"edges[{i}]", f"duplicate edge {e.key}"))
        edge_seen.add(pair)
        ks: set[int] = set()
        for j, ln in enumerate(e.lines):
            path = f"edges[{i}].lines[{j}]"
            if ln.k in ks:
                issues.append(Issue("DuplicateLine", f"{path}.k", f"duplicate line k={ln.k}"))
            ks.add(ln.k)
            issues += _phase_issues(ln.phases, f"{path}.phases")
            for end in (e.from_bus, e.to_bus):
                if end in seen:
                    bus = net.buses[seen[end]]
                    missing = [p for p in ln.phases if p not in bus.phases]
                    if missing:
                        issues.append(
                            Issue("PhaseMismatch", f"{path}.phases", f"phases {missing} not on bus {end!r}")
                        )
            for fld in ("r", "x"):
                vals = getattr(ln, fld)
                for p in ln.phases:
                    if p not in vals:
                        issues.append(Issue("PhaseMismatch", f"{path}.{fld}", f"no value for phase {p!r}"))
    return issues


def _value_issues(net: DistributionNetwork) -> list[Issue]:
    issues: list[Issue] = []
    for i, b in enumerate(net.buses):
        if b.v_min_pu > b.v_max_pu:
            issues.append(Issue("VoltageBoundsInverted", f"buses[{i}]", f"v_min {b.v_min_pu} > v_max {b.v_max_pu}"))
        for p, v in b.demand_kw.items():
            if v < 0:
                issues.append(Issue("NegativeDemand", f"buses[{i}].demand_kw.{p}", f"{v}"))
        if b.is_generator:
            for p in b.phases:
                if b.gen_p_min_kw.get(p, 0.0) > b.gen_p_max_kw.get(p, 0.0):
                    issues.append(Issue("GenBoundsInverted", f"buses[{i}].gen_p_min_kw.{p}", ""))
                if b.gen_q_min_kvar.get(p, 0.0) > b.gen_q_max_kvar.get(p, 0.0):
                    issues.append(Issue("GenBoundsInverted", f"buses[{i}].gen_q_min_kvar.{p}", ""))
    for i, e in enumerate(net.edges):
        for j, ln in enumerate(e.lines):
            path = f"edges[{i}].lines[{j}]"
            for p in ln.phases:
                r, x = ln.r.get(p, 0.0), ln.x.get(p, 0.0)
                if r < 0:
                    issues.append(Issue("NegativeResistance", f"{path}.r.{p}", f"{r}"))
                if math.hypot(r, x) <= 0:
                    issues.append(Issue("ZeroImpedance", f"{path}.{p}", "Z must be positive"))
            if not (ln.p_max_kw > 0) or not (ln.q_max_kvar > 0):
                issues.append(Issue("NonPositiveCapacity", path, "line capacities must be positive"))
            if ln.theta_min_rad > ln.theta_max_rad:
                issues.append(Issue("AngleBoundsInverted", path, ""))
    if not net.generator_pool:
        issues.append(Issue("NoGenerators", "buses", "the generator pool is empty"))
    if not _is_connected(net):
        issues.append(Issue("Disconnected", "edges", "the network graph is not connected"))
    demand = net.total_demand_kw
    gen = net.total_generation_kw()
    if demand > gen:
        issues.append(
            Issue("InsufficientGeneration", "buses", f"total demand {demand:g} kW exceeds generation {gen:g} kW")
        )
    return issues


def _is_connected(net: DistributionNetwork) -> bool:
    if not net.buses:
        return True
    adj = net.adjacency
    start = net.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v, e in adj[u]:
            if v not in seen and e.lines:
                seen.add(v)
                stack.append(v)
    return len(seen) == net.n_buses


def validate_network(net: DistributionNetwork) -> list[Issue]:
    """All invariant violations of ``net``; an empty list means healthy."""
    issues = _structural_issues(net)
    if any(i.code in ("DanglingEdge", "DuplicateBus") for i in issues):
        return issues
    return issues + _value_issues(net)


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------


def _per_phase(raw: Any, phases, path: str, default: float = 0.0) -> dict[str, float]:
    if raw is None:
        return {p: default for p in phases}
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return {p: float(raw) for p in phases}
    if isinstance(raw, Mapping):
        out = {}
        for p, v in raw.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ParseError(f"{path}.{p}: expected a number")
            out[str(p)] = float(v)
        # absent phases default, extra phases are left for validation to flag
        for p in phases:
            out.setdefault(p, default)
        return out
    raise ParseError(f"{path}: expected a number or a phase mapping")


def _number(raw: Mapping, key: str, path: str, default=None) -> float:
    v = raw.get(key, default)
    if v is None:
        if default is None and key in raw:
            return math.inf
        if default is None:
            raise ParseError(f"{path}.{key}: required")
        return default
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ParseError(f"{path}.{key}: expected a number")
    return float(v)


def _phases(raw: Mapping, path: str) -> tuple[str, ...]:
    ph = raw.get("phases", list(PHASES))
    if isinstance(ph, str):
        ph = list(ph)
    if not isinstance(ph, list) or not all(isinstance(p, str) for p in ph):
        raise ParseError(f"{path}.phases: expected a list of phase labels")
    return tuple(sorted(ph, key=lambda p: PHASE_INDEX.get(p, 99)))


def network_from_dict(data: Mapping[str, Any]) -> DistributionNetwork:
    """Build and structurally validate a network from the JSON object model."""
    if not isinstance(data, Mapping):
        raise ParseError("top level must be an object")
    for key in ("buses", "edges"):
        if not isinstance(data.get(key), list):
            raise ParseError(f"{key}: required list")
    base_kv = _number(data, "base_kv", "", 1.0)
    base_mva = _number(data, "base_mva", "", 1.0)
    units = data.get("units", "pu")
    if units not in ("pu", "ohm"):
        raise ParseError(f"units: expected 'pu' or 'ohm', got {units!r}")
    if units == "ohm" and (base_kv <= 0 or base_mva <= 0):
        raise ValidationError("base_kv" if base_kv <= 0 else "base_mva", "non-positive base")

    buses = []
    for i, rb in enumerate(data["buses"]):
        path = f"buses[{i}]"
        if not isinstance(rb, Mapping) or not isinstance(rb.get("id"), str):
            raise ParseError(f"{path}.id: required string")
        phases = _phases(rb, path)
        kind = rb.get("kind", "consumer")
        buses.append(
            Bus(
                id=rb["id"],
                kind=kind,
                phases=phases,
                demand_kw=_per_phase(rb.get("demand_kw"), phases, f"{path}.demand_kw"),
                demand_kvar=_per_phase(rb.get("demand_kvar"), phases, f"{path}.demand_kvar"),
                gen_p_max_kw=_per_phase(rb.get("gen_p_max_kw"), phases, f"{path}.gen_p_max_kw"),
                gen_p_min_kw=_per_phase(rb.get("gen_p_min_kw"), phases, f"{path}.gen_p_min_kw"),
                gen_q_max_kvar=_per_phase(rb.get("gen_q_max_kvar"), phases, f"{path}.gen_q_max_kvar"),
                gen_q_min_kvar=_per_phase(
                    rb.get("gen_q_min_kvar"),
                    phases,
                    f"{path}.gen_q_min_kvar",
                ),
                v_min_pu=_number(rb, "v_min_pu", path, 0.9),
                v_max_pu=_number(rb, "v_max_pu", path, 1.1),
            )
        )

    edges = []
    for i, re_ in enumerate(data["edges"]):
        path = f"edges[{i}]"
        if not isinstance(re_, Mapping):
            raise ParseError(f"{path}: expected an object")
        u, v = re_.get("from"), re_.get("to")
        if not isinstance(u, str):
            raise ParseError(f"{path}.from: required string")
        if not isinstance(v, str):
            raise ParseError(f"{path}.to: required string")
        raw_lines = re_.get("lines")
        if not isinstance(raw_lines, list) or not raw_lines:
            raise ParseError(f"{path}.lines: required non-empty list")
        lines = []
        for j, rl in enumerate(raw_lines):
            lp = f"{path}.lines[{j}]"
            if not isinstance(rl, Mapping):
                raise ParseError(f"{lp}: expected an object")
            k = rl.get("k", j + 1)
            if not isinstance(k, int) or isinstance(k, bool):
                raise ParseError(f"{lp}.k: expected an integer")
            phases = _phases(rl, lp)
            if "r" not in rl or "x" not in rl:
                raise ParseError(f"{lp}: r and x are required")
            r = _per_phase(rl["r"], phases, f"{lp}.r")
            x = _per_phase(rl["x"], phases, f"{lp}.x")
            if units == "ohm":
                r = to_per_unit(r, base_kv, base_mva, "impedance")
                x = to_per_unit(x, base_kv, base_mva, "impedance")
            lines.append(
                Line(
                    from_bus=u,
                    to_bus=v,
                    k=k,
                    phases=phases,
                    r=r,
                    x=x,
                    p_max_kw=_number(rl, "p_max_kw", lp, math.inf),
                    q_max_kvar=_number(rl, "q_max_kvar", lp, math.inf),
                    theta_min_rad=_number(rl, "theta_min_rad", lp, -math.pi),
                    theta_max_rad=_number(rl, "theta_max_rad", lp, math.pi),
                )
            )
        edges.append(Edge(u, v, tuple(sorted(lines, key=lambda ln: ln.k))))

    net = DistributionNetwork(
        name=str(data.get("name", "network")),
        base_kv=base_kv,
        base_mva=base_mva,
        buses=tuple(buses),
        edges=tuple(edges),
        alpha=_number(data, "alpha", "", 1.0),
        loss_margin=_number(data, "loss_margin", "", 0.20),
    )
    for issue in _structural_issues(net):
        raise ValidationError(issue.path, issue.message)
    return net


def load_network(source: str | os.PathLike) -> DistributionNetwork:
    """Load a network from a JSON file path or from JSON text."""
    if isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read {source}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return network_from_dict(data)


def _phase_dict(values: Mapping[str, float], phases) -> dict[str, float]:
    return {p: float(values.get(p, 0.0)) for p in phases}


def _finite_or_none(v: float):
    return None if math.isinf(v) else v


def network_to_dict(net: DistributionNetwork) -> dict[str, Any]:
    """Canonical object model (always per-unit impedances)."""
    return {
        "name": net.name,
        "base_kv": net.base_kv,
        "base_mva": net.base_mva,
        "units": "pu",
        "alpha": net.alpha,
        "loss_margin": net.loss_margin,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind,
                "phases": list(b.phases),
                "demand_kw": _phase_dict(b.demand_kw, b.phases),
                "demand_kvar": _phase_dict(b.demand_kvar, b.phases),
                "gen_p_max_kw": _phase_dict(b.gen_p_max_kw, b.phases),
                "gen_p_min_kw": _phase_dict(b.gen_p_min_kw, b.phases),
                "gen_q_max_kvar": _phase_dict(b.gen_q_max_kvar, b.phases),
                "gen_q_min_kvar": _phase_dict(b.gen_q_min_kvar, b.phases),
                "v_min_pu": b.v_min_pu,
                "v_max_pu": b.v_max_pu,
            }
            for b in net.buses
        ],
        "edges": [
            {
                "from": e.from_bus,
                "to": e.to_bus,
                "lines": [
                    {
                        "k": ln.k,
                        "phases": list(ln.phases),
                        "r": _phase_dict(ln.r, ln.phases),
                        "x": _phase_dict(ln.x, ln.phases),
                        "p_max_kw": _finite_or_none(ln.p_max_kw),
                        "q_max_kvar": _finite_or_none(ln.q_max_kvar),
                        "theta_min_rad": ln.theta_min_rad,
                        "theta_max_rad": ln.theta_max_rad,
                    }
                    for ln in e.lines
                ],
            }
            for e in net.edges
        ],
    }


def dumps_network(net: DistributionNetwork) -> str:
    return json.dumps(network_to_dict(net), indent=2) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_network(net: DistributionNetwork, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps_network(net))

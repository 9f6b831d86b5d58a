"""Radial power-flow evaluation, loss functions and constraint checking.

The sweep is phase-decoupled: each phase of a line is a scalar series
impedance, loads are constant power, and every root holds its bus at
nominal voltage (1 p.u. at 0, -120 and +120 degrees for phases a, b, c).
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from gridforest.errors import NotConverged, NotRadial
from gridforest.network import PHASES, DistributionNetwork, LineKey
from gridforest.radial import OrientedForest, RadialConfiguration, orient, orient_partial, orient_unchecked

SWEEP_TOL = 1e-8
SWEEP_MAX_ITER = 50
FEASIBILITY_TOL = 1e-6
NOMINAL = np.exp(1j * np.array([0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0]))

FAMILIES = ("balance", "ohm", "voltage", "line_p", "line_q", "node_p", "node_q", "angle")


@dataclass
class PowerFlowSolution:
    """Result of a backward-forward sweep; arrays are per-unit.

    ``lines[i]`` feeds bus ``downstream[i]`` from ``upstream[i]``; ``current``
    and ``flow`` (sending-end complex power) are oriented the same way.
    """

    bus_ids: tuple[str, ...]
    voltage: np.ndarray
    energized: np.ndarray
    lines: tuple[LineKey, ...]
    upstream: tuple[str, ...]
    downstream: tuple[str, ...]
    current: np.ndarray
    flow: np.ndarray
    generation: dict[str, np.ndarray]
    unserved: np.ndarray
    total_loss_pu: float
    kva_base: float
    converged: bool
    iterations: int
    mismatch: float

    @property
    def total_loss_kw(self) -> float:
        return self.total_loss_pu * self.kva_base

    @property
    def total_supplied_kw(self) -> float:
        return float(sum(g.real.sum() for g in self.generation.values())) * self.kva_base

    def bus_voltage(self, bus: str) -> dict[str, complex]:
        i = self.bus_ids.index(bus)
        return {p: complex(self.voltage[i, j]) for j, p in enumerate(PHASES) if self.energized[i, j]}

    def line_index(self, key: LineKey) -> int:
        return self.lines.index(key)

    def line_current(self, key: LineKey) -> np.ndarray:
        return self.current[self.line_index(key)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "mismatch_pu": self.mismatch,
            "total_loss_kw": self.total_loss_kw,
            "voltage": [
                {"bus": b, "phase": p, "re": float(self.voltage[i, j].real), "im": float(self.voltage[i, j].imag)}
                for i, b in enumerate(self.bus_ids)
                for j, p in enumerate(PHASES)
                if self.energized[i, j]
            ],
            "lines": [
                {
                    "from": key[0],
                    "to": key[1],
                    "k": key[2],
                    "upstream": up,
                    "phase": p,
                    "current": [float(self.current[li, j].real), float(self.current[li, j].imag)],
                    "flow": [float(self.flow[li, j].real), float(self.flow[li, j].imag)],
                }
                for li, (key, up) in enumerate(zip(self.lines, self.upstream))
                for j, p in enumerate(PHASES)
                if self.current[li, j] != 0 or self.flow[li, j] != 0
            ],
        }


@dataclass
class _TreeArrays:
    idx: np.ndarray  # bus index per position in BFS order
    parent_pos: np.ndarray  # position of parent (-1 for roots)
    levels: list[np.ndarray]  # positions grouped by depth >= 1
    z: np.ndarray  # (n, 3) complex impedance of the feeding line
    line_mask: np.ndarray  # (n, 3) phases carried by the feeding line
    keys: list[LineKey | None]


def _tree_arrays(network: DistributionNetwork, forest: OrientedForest) -> _TreeArrays:
    order = forest.order
    pos = {b: i for i, b in enumerate(order)}
    n = len(order)
    parent_pos = np.full(n, -1, dtype=int)
    z = np.zeros((n, 3), dtype=complex)
    line_mask = np.zeros((n, 3), dtype=bool)
    keys: list[LineKey | None] = []
    by_depth: dict[int, list[int]] = {}
    row = network.line_table.row
    fed, rows = [], []
    for i, b in enumerate(order):
        p = forest.parent[b]
        if p is None:
            keys.append(None)
            continue
        parent_pos[i] = pos[p[0]]
        fed.append(i)
        rows.append(row[p[1]])
        keys.append(p[1])
        by_depth.setdefault(forest.depth[b], []).append(i)
    if fed:
        z[fed] = network.line_table.z[rows]
        line_mask[fed] = network.line_table.mask[rows]
    levels = [np.array(by_depth[d], dtype=int) for d in sorted(by_depth)]
    idx = np.array([network.bus_index[b] for b in order], dtype=int)
    return _TreeArrays(idx, parent_pos, levels, z, line_mask, keys)


def sweep_power_flow(
    network: DistributionNetwork,
    forest: OrientedForest,
    active_set: Iterable[str] | None = None,
    tol: float = SWEEP_TOL,
    max_iter: int = SWEEP_MAX_ITER,
) -> PowerFlowSolution:
    """Backward-forward sweep on a radial forest.

    Stops when the largest per-bus complex power mismatch drops below ``tol``
    or after ``max_iter`` sweeps; a non-converged run is returned with
    ``converged=False`` rather than raised.
    """
    if len(forest.order) != network.n_buses:
        raise NotRadial("forest does not span every bus")
    if active_set is not None:
        active = set(active_set)
        stray = [r for r in forest.roots if r not in active]
        if stray:
            raise NotRadial(f"roots {stray} are not in the active set")

    t = _tree_arrays(network, forest)
    n = len(t.idx)
    bus_mask = network.bus_phase_mask[t.idx]
    load = network.load_pu[t.idx]

    energized = np.zeros((n, 3), dtype=bool)
    is_root = t.parent_pos < 0
    energized[is_root] = bus_mask[is_root]
    for lvl in t.levels:
        energized[lvl] = energized[t.parent_pos[lvl]] & t.line_mask[lvl] & bus_mask[lvl]

    served = np.where(energized, load, 0)
    unserved = np.where(energized, 0, load)
    v_root = np.where(energized, NOMINAL, 0)
    v = v_root.copy()
    has_load = served != 0
    i_branch = np.zeros((n, 3), dtype=complex)
    i_load = np.zeros((n, 3), dtype=complex)
    converged = False
    mismatch = math.inf
    iterations = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for iterations in range(1, max_iter + 1):
            i_load = np.where(has_load, np.conj(served / np.where(has_load, v, 1)), 0)
            i_branch = i_load.copy()
            for lvl in reversed(t.levels):
                np.add.at(i_branch, t.parent_pos[lvl], i_branch[lvl])
            i_branch[is_root] = 0
            v_new = v_root.copy()
            for lvl in t.levels:
                v_new[lvl] = np.where(energized[lvl], v_new[t.parent_pos[lvl]] - t.z[lvl] * i_branch[lvl], 0)
            res = np.abs(v_new * np.conj(i_load) - served)
            res[is_root] = 0
            mismatch = float(res.max()) if n else 0.0
            v = v_new
            if not np.isfinite(mismatch):
                break
            if mismatch < tol:
                converged = True
                break

    line_pos = np.flatnonzero(~is_root)
    # Sending-end complex power of every line, oriented downstream.
    current = i_branch[line_pos]
    flow = v[t.parent_pos[line_pos]] * np.conj(current)
    r = t.z[line_pos].real
    total_loss = float(np.sum(r * np.abs(current) ** 2))

    generation: dict[str, np.ndarray] = {}
    order = forest.order
    for i in np.flatnonzero(is_root):
        generation[order[i]] = served[i].copy()
    for li, i in enumerate(line_pos):
        p = t.parent_pos[i]
        if is_root[p]:
            generation[order[p]] += flow[li]

    inv = np.empty(n, dtype=int)
    inv[t.idx] = np.arange(n)
    return PowerFlowSolution(
        bus_ids=network.bus_ids,
        voltage=v[inv],
        energized=energized[inv],
        lines=tuple(t.keys[i] for i in line_pos),
        upstream=tuple(order[t.parent_pos[i]] for i in line_pos),
        downstream=tuple(order[i] for i in line_pos),
        current=current,
        flow=flow,
        generation=generation,
        unserved=unserved[inv],
        total_loss_pu=total_loss,
        kva_base=network.kva_base,
        converged=converged,
        iterations=iterations,
        mismatch=mismatch,
    )


def balance_residuals(network: DistributionNetwork, solution: PowerFlowSolution) -> np.ndarray:
    """(N, 3) nodal power-balance residual of a solution.

    Each bus compares what its incoming line delivers, minus what its
    outgoing lines take at their sending ends, with its own demand; roots
    compare generation against outgoing flow plus their demand.
    """
    n = network.n_buses
    index = network.bus_index
    net_in = np.zeros((n, 3), dtype=complex)
    i_in = np.zeros((n, 3), dtype=complex)
    i_out = np.zeros((n, 3), dtype=complex)
    if solution.lines:
        np.add.at(i_in, [index[b] for b in solution.downstream], solution.current)
        np.add.at(i_out, [index[b] for b in solution.upstream], solution.current)
    net_in = solution.voltage * np.conj(i_in - i_out)
    for root, gen in solution.generation.items():
        net_in[index[root]] += gen
    demand = np.where(solution.energized, network.load_pu, 0)
    res = np.abs(net_in - demand)
    res[~solution.energized] = 0
    return res


def exact_loss(solution: PowerFlowSolution, network: DistributionNetwork) -> float:
    """Objective loss in kW: sum of R |I|^2 cos^2(theta) over selected lines and phases."""
    if not solution.converged:
        raise NotConverged(f"sweep did not converge (mismatch {solution.mismatch:.3g})")
    if not solution.lines:
        return 0.0
    coef = network.line_table.loss_coef[network.line_rows(solution.lines)]
    cur = solution.current
    return float(np.sum(coef * (cur.real**2 + cur.imag**2))) * network.kva_base


def _quadratic_cost(network: DistributionNetwork, key: LineKey, s: np.ndarray) -> float:
    coef = network.line(*key).loss_coef
    return float(np.sum(coef * (s.real**2 + s.imag**2)))


def approx_loss(network: DistributionNetwork, config: RadialConfiguration | OrientedForest) -> float:
    """Closed-form loss (kW) at flat voltage: each line carries the demand of
    every bus whose root path runs through it."""
    forest = config if isinstance(config, OrientedForest) else orient(config, network)
    load = network.load_pu
    through: dict[LineKey, np.ndarray] = {key: np.zeros(3, dtype=complex) for key in forest.lines}
    for b in forest.order:
        s = load[network.bus_index[b]]
        p = forest.parent[b]
        while p is not None:
            through[p[1]] += s
            p = forest.parent[p[0]]
    return sum(_quadratic_cost(network, key, s) for key, s in through.items()) * network.kva_base


def surrogate_loss(network: DistributionNetwork, partial: RadialConfiguration) -> float:
    """Loss (kW) from demand accumulated below each selected line of a partial forest."""
    forest = orient_partial(partial, network)
    acc = {b: network.load_pu[network.bus_index[b]].copy() for b in forest.order}
    total = 0.0
    for b in reversed(forest.order):
        p = forest.parent[b]
        if p is None:
            continue
        total += _quadratic_cost(network, p[1], acc[b])
        acc[p[0]] += acc[b]
    return total * network.kva_base


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------


@dataclass
class Violation:
    magnitude: float = 0.0
    element: str | None = None

    def update(self, magnitude: float, element: str) -> None:
        if magnitude > self.magnitude:
            self.magnitude = magnitude
            self.element = element


@dataclass
class FeasibilityReport:
    violations: dict[str, Violation] = field(default_factory=lambda: {f: Violation() for f in FAMILIES})
    total_violation: float = 0.0
    tolerance: float = FEASIBILITY_TOL
    offending: dict[tuple, float] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(v.magnitude <= self.tolerance for v in self.violations.values())

    def add(self, family: str, magnitude: float, element: str, ref: tuple | None = None) -> None:
        """Record one check; ``ref`` is ``("bus", id)`` or ``("line", key)``."""
        if magnitude > self.tolerance:
            self.total_violation += magnitude
            ref = ref or ("element", element)
            self.offending[ref] = max(self.offending.get(ref, 0.0), magnitude)
        self.violations[family].update(magnitude, element)

    def add_many(self, family: str, magnitudes: np.ndarray, element, ref) -> None:
        """Vectorized ``add``: ``element(i)`` and ``ref(i)`` label flat index ``i``."""
        flat = np.ravel(magnitudes)
        if flat.size == 0:
            return
        i_max = int(np.argmax(flat))
        viol = self.violations[family]
        if flat[i_max] > viol.magnitude:
            viol.magnitude = float(flat[i_max])
            viol.element = element(i_max)
        for i in np.flatnonzero(flat > self.tolerance):
            m = float(flat[i])
            self.total_violation += m
            r = ref(int(i))
            self.offending[r] = max(self.offending.get(r, 0.0), m)

    def to_dict(self) -> dict[str, Any]:
        return {
            "feasible": self.feasible,
            "tolerance": self.tolerance,
            "total_violation": self.total_violation,
            "violations": {
                f: {"magnitude": v.magnitude, "element": v.element} for f, v in self.violations.items()
            },
        }


def check_feasibility(
    network: DistributionNetwork,
    config: RadialConfiguration,
    solution: PowerFlowSolution,
    tol: float = FEASIBILITY_TOL,
) -> FeasibilityReport:
    """Check a converged solution against balance, Ohm, voltage, line, generation and angle limits.

    Line limits apply only to selected lines; generation limits only to the
    active roots (inactive generators behave as ordinary loads).
    Element labels are ``bus.phase`` or ``from-to#k.phase``.
    """
    if not solution.converged:
        raise NotConverged("feasibility needs a converged solution")
    rep = FeasibilityReport(tolerance=tol)
    index = network.bus_index
    ids = network.bus_ids
    bus_el = lambda i: f"{ids[i // 3]}.{PHASES[i % 3]}"  # noqa: E731
    bus_ref = lambda i: ("bus", ids[i // 3])  # noqa: E731

    res = balance_residuals(network, solution)
    rep.add_many("balance", np.maximum(res, np.abs(solution.unserved)), bus_el, bus_ref)
    vm = np.abs(solution.voltage)
    v_lo = np.array([b.v_min_pu for b in network.buses])[:, None]
    v_hi = np.array([b.v_max_pu for b in network.buses])[:, None]
    v_viol = np.maximum(np.maximum(v_lo - vm, vm - v_hi), 0.0)
    rep.add_many("voltage", np.where(solution.energized, v_viol, -np.inf), bus_el, bus_ref)

    keys = solution.lines
    if keys:
        table = network.line_table
        rows = network.line_rows(keys)
        mask, z = table.mask[rows], table.z[rows]
        p_cap, q_cap = table.p_cap[rows], table.q_cap[rows]
        th_lo, th_hi = table.theta_min[rows], table.theta_max[rows]
        up = np.array([index[b] for b in solution.upstream])
        down = np.array([index[b] for b in solution.downstream])
        v_up, v_down = solution.voltage[up], solution.voltage[down]
        cur = solution.current
        send = solution.flow
        recv = v_down * np.conj(cur)
        line_el = lambda i: f"{keys[i // 3][0]}-{keys[i // 3][1]}#{keys[i // 3][2]}.{PHASES[i % 3]}"  # noqa: E731
        line_ref = lambda i: ("line", keys[i // 3])  # noqa: E731
        with np.errstate(divide="ignore", invalid="ignore"):
            ohm = np.abs(cur - (v_up - v_down) / np.where(z != 0, z, 1))
        rep.add_many("ohm", np.where(mask & (z != 0), ohm, -np.inf), line_el, line_ref)
        line_p = np.maximum(np.abs(send.real), np.abs(recv.real)) - p_cap
        line_q = np.maximum(np.abs(send.imag), np.abs(recv.imag)) - q_cap
        rep.add_many("line_p", np.where(mask, line_p, -np.inf), line_el, line_ref)
        rep.add_many("line_q", np.where(mask, line_q, -np.inf), line_el, line_ref)
        vi = solution.voltage[table.from_idx[rows]]
        vj = solution.voltage[table.to_idx[rows]]
        ang = np.angle(vi * np.conj(vj))
        ang_viol = np.maximum(np.maximum(th_lo - ang, ang - th_hi), 0.0)
        rep.add_many("angle", np.where(mask & solution.energized[up], ang_viol, -np.inf), line_el, line_ref)

    roots = sorted(config.roots)
    if roots:
        lim = [network.gen_limits_pu(r) for r in roots]
        gen = np.array([solution.generation.get(r, np.zeros(3, dtype=complex)) for r in roots])
        rmask = network.bus_phase_mask[[index[r] for r in roots]]
        p_lo, p_hi = np.array([m["p_min"] for m in lim]), np.array([m["p_max"] for m in lim])
        q_lo, q_hi = np.array([m["q_min"] for m in lim]), np.array([m["q_max"] for m in lim])
        node_p = np.maximum(np.maximum(p_lo - gen.real, gen.real - p_hi), 0.0)
        node_q = np.maximum(np.maximum(q_lo - gen.imag, gen.imag - q_hi), 0.0)
        root_el = lambda i: f"{roots[i // 3]}.{PHASES[i % 3]}"  # noqa: E731
        root_ref = lambda i: ("bus", roots[i // 3])  # noqa: E731
        rep.add_many("node_p", np.where(rmask, node_p, -np.inf), root_el, root_ref)
        rep.add_many("node_q", np.where(rmask, node_q, -np.inf), root_el, root_ref)
    return rep


@dataclass
class Evaluation:
    config: RadialConfiguration
    forest: OrientedForest
    solution: PowerFlowSolution
    feasibility: FeasibilityReport | None

    @property
    def feasible(self) -> bool:
        return self.feasibility is not None and self.feasibility.feasible

    @property
    def violation(self) -> float:
        return math.inf if self.feasibility is None else self.feasibility.total_violation


def evaluate(network: DistributionNetwork, config: RadialConfiguration, *, trusted: bool = False) -> Evaluation:
    """Orient, sweep and check one configuration.

    ``trusted`` skips the radiality check, for callers that only produce
    radial configurations (branch exchanges of a radial one).
    """
    forest = orient_unchecked(config, network) if trusted else orient(config, network)
    sol = sweep_power_flow(network, forest, config.roots)
    rep = check_feasibility(network, config, sol) if sol.converged else None
    return Evaluation(config, forest, sol, rep)

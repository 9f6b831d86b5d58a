"""Solver reports and warm-start export."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from gridforest import __version__
from gridforest.network import PHASES, DistributionNetwork
from gridforest.power import Evaluation, approx_loss, exact_loss
from gridforest.radial import RadialConfiguration, is_radial

LOSS_BAND = 0.20
TIMING_KEYS = ("timings",)


@dataclass
class SolverReport:
    network: str
    problem: int
    mode: str
    seed: int
    active_set: list[str]
    configuration: RadialConfiguration
    feasible: bool
    exact_loss_kw: float | None = None
    approx_loss_kw: float | None = None
    physical_loss_kw: float | None = None
    supplied_kw: float | None = None
    feasibility: dict[str, Any] | None = None
    solution: dict[str, Any] | None = None
    trace: list[dict[str, Any]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    stats: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    generator_pool: list[str] = field(default_factory=list)
    line_keys: list[list] = field(default_factory=list)
    version: str = __version__

    @property
    def loss_fraction(self) -> float | None:
        if self.exact_loss_kw is None or not self.supplied_kw:
            return None
        return self.exact_loss_kw / self.supplied_kw

    @property
    def objective(self) -> float:
        """Loss used to rank solutions; infeasible reports rank last."""
        if not self.feasible or self.exact_loss_kw is None:
            return math.inf
        return self.exact_loss_kw

    def to_dict(self) -> dict[str, Any]:
        return {
            "network": self.network,
            "problem": self.problem,
            "mode": self.mode,
            "seed": self.seed,
            "active_set": list(self.active_set),
            "configuration": self.configuration.to_dict(),
            "feasible": self.feasible,
            "exact_loss_kw": self.exact_loss_kw,
            "approx_loss_kw": self.approx_loss_kw,
            "physical_loss_kw": self.physical_loss_kw,
            "supplied_kw": self.supplied_kw,
            "loss_fraction": self.loss_fraction,
            "feasibility": self.feasibility,
            "solution": self.solution,
            "trace": self.trace,
            "stats": self.stats,
            "notes": self.notes,
            "generator_pool": self.generator_pool,
            "line_keys": self.line_keys,
            "timings": self.timings,
            "version": self.version,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def report_from_evaluation(
    network: DistributionNetwork,
    ev: Evaluation,
    *,
    problem: int,
    mode: str,
    seed: int,
    active_set,
) -> SolverReport:
    sol = ev.solution
    rep = SolverReport(
        network=network.name,
        problem=problem,
        mode=mode,
        seed=seed,
        active_set=sorted(active_set),
        configuration=ev.config,
        feasible=ev.feasible,
        generator_pool=list(network.generator_pool),
        line_keys=[list(k) for k in network.all_line_keys],
    )
    if sol.converged:
        rep.exact_loss_kw = exact_loss(sol, network)
        rep.physical_loss_kw = sol.total_loss_kw
        rep.supplied_kw = sol.total_supplied_kw
        rep.feasibility = ev.feasibility.to_dict()
        rep.solution = sol.to_dict()
    else:
        rep.notes.append(f"power flow did not converge after {sol.iterations} sweeps")
    rep.approx_loss_kw = approx_loss(network, ev.forest)
    frac = rep.loss_fraction
    if frac is not None and frac > LOSS_BAND:
        rep.notes.append(f"loss fraction {frac:.4f} exceeds the {LOSS_BAND:.2f} band")
    return rep


def strip_timings(report: Mapping[str, Any]) -> dict[str, Any]:
    """Copy of a report dict without wall-clock fields, for reproducibility checks."""
    out = {k: v for k, v in report.items() if k not in TIMING_KEYS}
    if isinstance(out.get("trace"), list):
        out["trace"] = [{k: v for k, v in t.items() if k != "time_s"} for t in out["trace"]]
    return out


# ---------------------------------------------------------------------------
# Warm start
# ---------------------------------------------------------------------------


@dataclass
class WarmStart:
    """Variable assignment for an external mixed-integer solver."""

    network: str
    gamma: dict[tuple[str, str, int], int]
    beta: dict[str, int]
    x: dict[tuple[str, str, int, str], complex]
    v: dict[tuple[str, str], complex]
    loss_kw: float | None = None

    def configuration(self) -> RadialConfiguration:
        return RadialConfiguration(
            frozenset(k for k, g in self.gamma.items() if g),
            frozenset(b for b, on in self.beta.items() if on),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "network": self.network,
            "loss_kw": self.loss_kw,
            "gamma": [{"from": u, "to": v, "k": k, "value": g} for (u, v, k), g in sorted(self.gamma.items())],
            "beta": [{"id": b, "value": on} for b, on in sorted(self.beta.items())],
            "x": [
                {"from": u, "to": v, "k": k, "phase": p, "re": c.real, "im": c.imag}
                for (u, v, k, p), c in sorted(self.x.items())
            ],
            "v": [{"bus": b, "phase": p, "re": c.real, "im": c.imag} for (b, p), c in sorted(self.v.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> WarmStart:
        return cls(
            network=data["network"],
            gamma={(g["from"], g["to"], int(g["k"])): int(g["value"]) for g in data["gamma"]},
            beta={b["id"]: int(b["value"]) for b in data["beta"]},
            x={(e["from"], e["to"], int(e["k"]), e["phase"]): complex(e["re"], e["im"]) for e in data["x"]},
            v={(e["bus"], e["phase"]): complex(e["re"], e["im"]) for e in data["v"]},
            loss_kw=data.get("loss_kw"),
        )


def warmstart_from_report(report: Mapping[str, Any]) -> WarmStart:
    """Build a warm start from a serialized report (no network file needed).

    Line currents are written in the stored from->to orientation, so a line
    whose power flows to->from gets a negated current.
    """
    selected = {(s["from"], s["to"], int(s["k"])) for s in report["configuration"]["selected"]}
    roots = set(report["configuration"]["roots"])
    keys = [tuple(k) for k in report.get("line_keys") or []] or sorted(selected)
    gamma = {(u, v, int(k)): int((u, v, int(k)) in selected) for u, v, k in keys}
    pool = report.get("generator_pool") or sorted(roots)
    beta = {g: int(g in roots) for g in pool}
    x: dict[tuple[str, str, int, str], complex] = {}
    v: dict[tuple[str, str], complex] = {}
    sol = report.get("solution")
    if sol is not None:
        for e in sol["lines"]:
            c = complex(*e["current"])
            if e["upstream"] != e["from"]:
                c = -c
            x[(e["from"], e["to"], int(e["k"]), e["phase"])] = c
        for e in sol["voltage"]:
            v[(e["bus"], e["phase"])] = complex(e["re"], e["im"])
    return WarmStart(report["network"], gamma, beta, x, v, report.get("exact_loss_kw"))


def check_warmstart(ws: WarmStart, network: DistributionNetwork) -> list[str]:
    """Consistency problems of a warm start against a network (empty when sound)."""
    problems = []
    cfg = ws.configuration()
    if not is_radial(cfg, network):
        problems.append("gamma/beta do not form a radial configuration")
    for (b, p) in ws.v:
        if p not in PHASES or b not in network.bus_index:
            problems.append(f"voltage for unknown bus/phase {b}.{p}")
    return problems

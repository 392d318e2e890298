"""Scenario generators, scenario files, and trajectory exporters.

The scenario file format is JSON with an explicit schema version; field
names mirror :class:`~swarmplan.planner.AgentSpec` so fixtures stay
readable and diffable.  CSV and SVG exports are byte-deterministic.
"""

from __future__ import annotations

import io
import json
import math
import xml.sax.saxutils as sx

import numpy as np

from .errors import InvalidP, InvalidScenario, PlacementFailed
from .geometry import Segment
from .planner import AgentSpec, CostMode, ScenarioSpec, TrajectorySet

SCHEMA = "swarmplan-scenario"
SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def conf1_radius(p: int, circle_radius: float) -> float:
    """Common agent radius for the antipodal-exchange benchmark."""
    return 1.25 * circle_radius * math.sin(math.pi / (2 * p - 4))


def gen_conf1(
    p: int,
    circle_radius: float = 1.0,
    eta: int = 4,
    cost_mode: CostMode | str = CostMode.ENERGY,
    energy_coeff: float = 1.0,
) -> ScenarioSpec:
    """Antipodal exchange: p agents on a circle swap with their opposites.

    The classical hard case: straight-line motion sends everyone through the
    center simultaneously.  Requires even ``p >= 6``.
    """
    if p % 2 != 0 or p < 6:
        raise InvalidP(f"antipodal exchange needs even p >= 6, got {p}")
    r = conf1_radius(p, circle_radius)
    agents = []
    for i in range(p):
        ang = 2.0 * math.pi * i / p
        start = np.array([math.cos(ang), math.sin(ang)]) * circle_radius
        agents.append(
            AgentSpec(id=i, start=start, goal=-start, radius=r, energy_coeff=energy_coeff)
        )
    return ScenarioSpec(agents=agents, eta=eta, cost_mode=cost_mode).validate()


def gen_conf2(
    p: int,
    box: tuple[float, float, float, float] = (0.0, 0.0, 6.0, 6.0),
    radius: float = 0.3,
    seed: int = 0,
    eta: int = 4,
    cost_mode: CostMode | str = CostMode.ENERGY,
    max_tries: int = 20_000,
) -> ScenarioSpec:
    """Random starts and goals in a box, resampled until pairwise clear."""
    rng = np.random.default_rng(seed)
    lo = np.array(box[:2], dtype=float) + radius
    hi = np.array(box[2:], dtype=float) - radius
    if np.any(hi <= lo):
        raise InvalidScenario("box too small for the agent radius")

    def sample_points():
        pts = []
        tries = 0
        while len(pts) < p:
            cand = rng.uniform(lo, hi)
            tries += 1
            if tries > max_tries:
                raise PlacementFailed(
                    f"could not place {p} agents of radius {radius} in {box}"
                )
            if all(float(np.hypot(*(cand - q))) >= 2.0 * radius for q in pts):
                pts.append(cand)
        return pts

    starts = sample_points()
    goals = sample_points()
    agents = [
        AgentSpec(id=i, start=starts[i], goal=goals[i], radius=radius)
        for i in range(p)
    ]
    return ScenarioSpec(agents=agents, eta=eta, cost_mode=cost_mode).validate()


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

def scenario_to_dict(spec: ScenarioSpec, solver_overrides: dict | None = None) -> dict:
    doc = {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "eta": spec.eta,
        "cost_mode": spec.cost_mode.value,
        "agents": [
            {
                "id": a.id,
                "start": [float(a.start[0]), float(a.start[1])],
                "goal": [float(a.goal[0]), float(a.goal[1])],
                "radius": float(a.radius),
                "energy_coeff": float(a.energy_coeff),
                "vmax": None if a.vmax is None else float(a.vmax),
                "vmin": None if a.vmin is None else float(a.vmin),
            }
            for a in spec.agents
        ],
        "walls": [
            {"a": [float(w.a[0]), float(w.a[1])], "b": [float(w.b[0]), float(w.b[1])]}
            for w in spec.walls
        ],
    }
    if solver_overrides:
        doc["solver"] = solver_overrides
    return doc


def scenario_from_dict(doc: dict) -> tuple[ScenarioSpec, dict]:
    if doc.get("schema") != SCHEMA:
        raise InvalidScenario(f"not a {SCHEMA} document")
    if doc.get("version") != SCHEMA_VERSION:
        raise InvalidScenario(f"unsupported schema version {doc.get('version')!r}")
    agents = [
        AgentSpec(
            id=a["id"],
            start=a["start"],
            goal=a["goal"],
            radius=a["radius"],
            energy_coeff=a.get("energy_coeff", 1.0),
            vmax=a.get("vmax"),
            vmin=a.get("vmin"),
        )
        for a in doc["agents"]
    ]
    walls = [Segment(w["a"], w["b"]) for w in doc.get("walls", [])]
    spec = ScenarioSpec(
        agents=agents,
        walls=walls,
        eta=int(doc["eta"]),
        cost_mode=CostMode(doc.get("cost_mode", "energy")),
    )
    return spec, dict(doc.get("solver", {}))


def dump_scenario(spec: ScenarioSpec, solver_overrides: dict | None = None) -> str:
    return json.dumps(scenario_to_dict(spec, solver_overrides), indent=2, sort_keys=True) + "\n"


def load_scenario(path) -> tuple[ScenarioSpec, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(path, spec: ScenarioSpec, solver_overrides: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_scenario(spec, solver_overrides))


# ---------------------------------------------------------------------------
# exporters
# ---------------------------------------------------------------------------

def export_csv(traj: TrajectorySet) -> str:
    """Rows ``agent,s,x,y``, one per agent and break-point, 9 significant digits."""
    out = io.StringIO()
    out.write("agent,s,x,y\n")
    for i, aid in enumerate(traj.agent_ids):
        for s in range(traj.eta + 1):
            x, y = traj.positions[i, s]
            out.write(f"{aid},{s},{x:.9g},{y:.9g}\n")
    return out.getvalue()


def parse_csv(text: str) -> TrajectorySet:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if lines[0] != "agent,s,x,y":
        raise ValueError("unexpected CSV header")
    rows = {}
    for ln in lines[1:]:
        aid, s, x, y = ln.split(",")
        rows.setdefault(int(aid), {})[int(s)] = (float(x), float(y))
    agent_ids = sorted(rows)
    eta = max(max(r) for r in rows.values())
    pos = np.zeros((len(agent_ids), eta + 1, 2))
    for i, aid in enumerate(agent_ids):
        for s, xy in rows[aid].items():
            pos[i, s] = xy
    return TrajectorySet(agent_ids, pos)


_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def export_svg(
    traj: TrajectorySet, scenario: ScenarioSpec, samples_per_segment: int = 4
) -> str:
    """SVG 1.1 document: walls, per-agent polylines, discs at sampled times."""
    pos = traj.positions
    pts = pos.reshape(-1, 2)
    rmax = max(a.radius for a in scenario.agents)
    lo = pts.min(axis=0) - 2 * rmax
    hi = pts.max(axis=0) + 2 * rmax
    for w in scenario.walls:
        lo = np.minimum(lo, np.minimum(w.a, w.b) - rmax)
        hi = np.maximum(hi, np.maximum(w.a, w.b) + rmax)
    size = hi - lo

    def fmt(v):
        return f"{v:.6g}"

    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{fmt(lo[0])} {fmt(-hi[1])} {fmt(size[0])} {fmt(size[1])}" '
        f'width="640" height="{fmt(640 * size[1] / size[0])}">\n'
    )
    out.write(f'<g transform="scale(1,-1)">\n')
    for w in scenario.walls:
        out.write(
            f'<line x1="{fmt(w.a[0])}" y1="{fmt(w.a[1])}" x2="{fmt(w.b[0])}" '
            f'y2="{fmt(w.b[1])}" stroke="#333333" stroke-width="{fmt(0.04 * rmax + 0.01)}"/>\n'
        )
    for i, aid in enumerate(traj.agent_ids):
        color = _PALETTE[i % len(_PALETTE)]
        path = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in pos[i])
        out.write(
            f'<polyline points="{sx.escape(path)}" fill="none" stroke="{color}" '
            f'stroke-width="{fmt(0.05 * rmax)}"/>\n'
        )
        radius = scenario.agents[i].radius
        for s in range(traj.eta):
            for k in range(samples_per_segment):
                alpha = k / samples_per_segment
                c = (1 - alpha) * pos[i, s] + alpha * pos[i, s + 1]
                out.write(
                    f'<circle cx="{fmt(c[0])}" cy="{fmt(c[1])}" r="{fmt(radius)}" '
                    f'fill="{color}" fill-opacity="0.12" stroke="none"/>\n'
                )
        c = pos[i, -1]
        out.write(
            f'<circle cx="{fmt(c[0])}" cy="{fmt(c[1])}" r="{fmt(radius)}" '
            f'fill="{color}" fill-opacity="0.35" stroke="{color}" '
            f'stroke-width="{fmt(0.02 * rmax)}"/>\n'
        )
    out.write("</g>\n</svg>\n")
    return out.getvalue()

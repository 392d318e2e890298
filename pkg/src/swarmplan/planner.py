"""Trajectory planners: global break-point optimization and the local
velocity-obstacle loop.

The global planner builds one factor graph for a whole scenario: one
equality node per agent per break-point (ends pinned), a pairwise collision
node per agent pair per segment, a cost node per agent per segment (kind
chosen by the scenario's cost mode), and a wall node per agent/wall/segment.

The local planner re-plans epoch end positions every ``epoch_fraction * tau``
seconds: each epoch solves a small graph with one equality node per agent,
pairwise epoch-collision nodes, wall nodes, and a quadratic pull toward the
reference position implied by the preferred velocity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from . import geometry as geo
from .errors import EpochCapExceeded, InvalidScenario
from .geometry import Segment

DEFAULT_WARMUP_SCALE = 1e-5


class CostMode(enum.Enum):
    ENERGY = "energy"
    FEASIBLE = "feasible"
    VELOCITY_CAP = "velcap"


@dataclass
class AgentSpec:
    id: int
    start: np.ndarray
    goal: np.ndarray
    radius: float
    energy_coeff: float = 1.0
    vmax: float | None = None
    vmin: float | None = None

    def __post_init__(self):
        self.start = geo.vec(self.start)
        self.goal = geo.vec(self.goal)
        if self.radius <= 0:
            raise InvalidScenario(f"agent {self.id}: radius must be positive")


@dataclass
class ScenarioSpec:
    agents: list[AgentSpec]
    walls: list[Segment] = field(default_factory=list)
    eta: int = 4
    cost_mode: CostMode = CostMode.ENERGY

    def __post_init__(self):
        if isinstance(self.cost_mode, str):
            self.cost_mode = CostMode(self.cost_mode)
        self.walls = [w if isinstance(w, Segment) else Segment(*w) for w in self.walls]

    @property
    def p(self) -> int:
        return len(self.agents)

    def validate(self):
        if self.eta < 1:
            raise InvalidScenario("eta must be >= 1")
        if not self.agents:
            raise InvalidScenario("scenario has no agents")
        for field_name in ("start", "goal"):
            pts = [getattr(a, field_name) for a in self.agents]
            for i in range(len(pts)):
                for k in range(i + 1, len(pts)):
                    need = self.agents[i].radius + self.agents[k].radius
                    if float(np.hypot(*(pts[i] - pts[k]))) < need:
                        raise InvalidScenario(
                            f"agents {self.agents[i].id} and {self.agents[k].id} "
                            f"overlap at their {field_name}s"
                        )
        return self


@dataclass
class TrajectorySet:
    """Per-agent piecewise-linear paths over break-points 0..eta."""

    agent_ids: list[int]
    positions: np.ndarray  # (p, eta + 1, 2)

    @property
    def eta(self) -> int:
        return self.positions.shape[1] - 1

    def kinetic_energy(self, coeffs=None) -> float:
        """Sum of per-segment squared displacements, weighted per agent."""
        d = np.diff(self.positions, axis=1)
        seg = np.einsum("psk,psk->ps", d, d)
        if coeffs is None:
            return float(seg.sum())
        return float(np.sum(np.asarray(coeffs)[:, None] * seg))


@dataclass
class Violation:
    kind: str  # "pair" or "wall"
    a: int
    b: int  # other agent id, or wall index
    segment: int
    amount: float


@dataclass
class FeasibilityReport:
    violations: list[Violation]
    worst: float

    @property
    def feasible(self) -> bool:
        return not self.violations


@dataclass
class PlanResult:
    trajectories: TrajectorySet
    report: FeasibilityReport
    solve: eng.SolveResult

    @property
    def converged(self) -> bool:
        return self.solve.converged


def default_config(scenario: ScenarioSpec, **overrides) -> eng.SolverConfig:
    """Solver configuration with the scenario-sized warm-up weight."""
    config = eng.SolverConfig(**overrides)
    if config.warmup_rho0 is None:
        config.warmup_rho0 = scenario.eta * scenario.p * DEFAULT_WARMUP_SCALE
    return config


# ---------------------------------------------------------------------------
# global planning
# ---------------------------------------------------------------------------

def build_global_graph(scenario: ScenarioSpec, config: eng.SolverConfig | None = None):
    """Factor graph for the whole-horizon problem.

    Node counts for p agents, eta segments, w walls:
    collision eta*p*(p-1)/2, cost eta*p (energy or velocity-cap mode),
    wall eta*p*w, equality (eta+1)*p with the end break-points pinned.
    """
    scenario.validate()
    eta = scenario.eta
    g = eng.FactorGraph()
    for a in scenario.agents:
        for s in range(eta + 1):
            fixed = a.start if s == 0 else (a.goal if s == eta else None)
            g.add_variable((a.id, s), home=a.start, fixed=fixed)

    mode = scenario.cost_mode
    for a in scenario.agents:
        for s in range(eta):
            pair = [(a.id, s), (a.id, s + 1)]
            if mode is CostMode.ENERGY:
                g.add_minimizer("energy", pair, coeff=a.energy_coeff)
            elif mode is CostMode.VELOCITY_CAP:
                if a.vmax is None:
                    raise InvalidScenario(
                        f"agent {a.id}: velocity-cap mode requires vmax"
                    )
                g.add_minimizer("vmax", pair, cap=a.vmax)
                if a.vmin is not None:
                    g.add_minimizer("vmin", pair, cap=a.vmin)

    for s in range(eta):
        for i in range(scenario.p):
            for k in range(i + 1, scenario.p):
                ai, ak = scenario.agents[i], scenario.agents[k]
                g.add_minimizer(
                    "coll",
                    [(ai.id, s), (ai.id, s + 1), (ak.id, s), (ak.id, s + 1)],
                    r_sum=ai.radius + ak.radius,
                )

    for a in scenario.agents:
        for wi, wall in enumerate(scenario.walls):
            for s in range(eta):
                g.add_minimizer(
                    "wall",
                    [(a.id, s), (a.id, s + 1)],
                    x_l=wall.a,
                    x_r=wall.b,
                    radius=a.radius,
                )
    return g


def extract_trajectories(graph, scenario: ScenarioSpec) -> TrajectorySet:
    graph.compile()
    eta = scenario.eta
    pos = np.zeros((scenario.p, eta + 1, 2))
    for i, a in enumerate(scenario.agents):
        for s in range(eta + 1):
            pos[i, s] = graph.z[graph._var_index[(a.id, s)]]
    return TrajectorySet([a.id for a in scenario.agents], pos)


def verify_feasible(
    traj: TrajectorySet, scenario: ScenarioSpec, tol: float = 1e-6
) -> FeasibilityReport:
    """Check pairwise and wall clearance on every segment of a trajectory set."""
    violations = []
    worst = 0.0
    p, eta = scenario.p, traj.eta
    pos = traj.positions
    for s in range(eta):
        for i in range(p):
            for k in range(i + 1, p):
                need = scenario.agents[i].radius + scenario.agents[k].radius
                got = geo.min_relative_distance(
                    pos[i, s] - pos[k, s], pos[i, s + 1] - pos[k, s + 1]
                )
                gap = need - got
                worst = max(worst, gap)
                if gap > tol:
                    violations.append(
                        Violation("pair", scenario.agents[i].id, scenario.agents[k].id, s, gap)
                    )
        for i in range(p):
            for wi, wall in enumerate(scenario.walls):
                got = geo.segment_segment_distance(pos[i, s], pos[i, s + 1], wall.a, wall.b)
                gap = scenario.agents[i].radius - got
                worst = max(worst, gap)
                if gap > tol:
                    violations.append(Violation("wall", scenario.agents[i].id, wi, s, gap))
    return FeasibilityReport(violations, worst)


def plan_global(
    scenario: ScenarioSpec,
    config: eng.SolverConfig | None = None,
    init: str = "start",
    record_z: bool = False,
) -> PlanResult:
    """Solve a scenario end to end and verify the result."""
    config = config or default_config(scenario)
    if config.warmup_rho0 is None:
        config.warmup_rho0 = scenario.eta * scenario.p * DEFAULT_WARMUP_SCALE
    graph = build_global_graph(scenario, config)
    eng.initialize(graph, config, init)
    result = eng.run_until_converged(graph, config, record_z=record_z)
    traj = extract_trajectories(graph, scenario)
    report = verify_feasible(traj, scenario, tol=config.feas_tol)
    return PlanResult(traj, report, result)


# ---------------------------------------------------------------------------
# local (velocity-obstacle) planning
# ---------------------------------------------------------------------------

@dataclass
class LocalPlanConfig:
    """Epoch parameters for the velocity-obstacle loop.

    ``tau`` is the look-ahead horizon; velocities are recomputed every
    ``epoch_fraction * tau`` seconds.  ``v_cap`` is the preferred cruising
    speed used by the reference-velocity policy; per-agent cost coefficients
    can be staggered (``1 + 0.001 i``) to break symmetric deadlocks.
    """

    tau: float = 1.0
    epoch_fraction: float = 0.5
    v_cap: float = 1.0
    goal_tol: float = 1e-2
    epoch_cap: int = 1000
    coeffs: np.ndarray | None = None  # per-agent C_i; default all ones

    def cost_coeffs(self, p: int) -> np.ndarray:
        if self.coeffs is None:
            return np.ones(p)
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (p,):
            raise InvalidScenario(f"expected {p} cost coefficients, got {c.shape}")
        return c


def staggered_coeffs(p: int, step: float = 0.001) -> np.ndarray:
    """Slightly distinct per-agent coefficients, breaking circular symmetry."""
    return 1.0 + step * np.arange(p)


def reference_positions(
    positions: np.ndarray, goals: np.ndarray, cfg: LocalPlanConfig
) -> np.ndarray:
    """Head-to-goal-at-capped-speed reference: x_ref = x + v_ref * tau."""
    delta = goals - positions
    dist = np.hypot(delta[:, 0], delta[:, 1])
    denom = np.maximum(cfg.tau, dist / cfg.v_cap)
    v_ref = delta / denom[:, None]
    return positions + v_ref * cfg.tau


@dataclass
class EpochResult:
    targets: np.ndarray  # solved epoch-end positions (p, 2)
    solve: eng.SolveResult
    fallback: bool  # True when a non-converged epoch fell back


def plan_local_epoch(
    positions: np.ndarray,
    scenario: ScenarioSpec,
    local_cfg: LocalPlanConfig,
    config: eng.SolverConfig,
    init_z: np.ndarray | None = None,
) -> EpochResult:
    """Solve one epoch's joint velocity choice as a factor graph.

    Builds one equality node per agent's epoch-end position, a pairwise
    epoch-collision node per pair, a wall node per agent and wall, and a
    quadratic pull toward each agent's reference position.  Falls back to the
    best feasible iterate (or to holding position) when not converged.
    """
    p = scenario.p
    positions = np.asarray(positions, dtype=float)
    goals = np.stack([a.goal for a in scenario.agents])
    for i in range(p):
        for k in range(i + 1, p):
            need = scenario.agents[i].radius + scenario.agents[k].radius
            if float(np.hypot(*(positions[i] - positions[k]))) < need - config.feas_tol:
                raise InvalidScenario(
                    f"epoch start positions of agents {i} and {k} overlap"
                )

    x_ref = reference_positions(positions, goals, local_cfg)
    coeffs = local_cfg.cost_coeffs(p) / (local_cfg.tau**2)

    g = eng.FactorGraph()
    for i, a in enumerate(scenario.agents):
        g.add_variable(a.id, home=positions[i] if init_z is None else init_z[i])
    for i, a in enumerate(scenario.agents):
        g.add_minimizer("vo_cost", [a.id], x_ref=x_ref[i], coeff=coeffs[i])
    for i in range(p):
        for k in range(i + 1, p):
            ai, ak = scenario.agents[i], scenario.agents[k]
            g.add_minimizer(
                "vo_coll",
                [ai.id, ak.id],
                x0_a=positions[i],
                x0_b=positions[k],
                r_sum=ai.radius + ak.radius,
            )
    for i, a in enumerate(scenario.agents):
        for wall in scenario.walls:
            g.add_minimizer(
                "vo_wall", [a.id], x0=positions[i], x_l=wall.a, x_r=wall.b, radius=a.radius
            )

    eng.initialize(g, config, "start")
    result = eng.run_until_converged(g, config)
    fallback = False
    if result.converged:
        targets = result.z.copy()
    elif result.best_violation <= config.feas_tol:
        targets = result.best_z.copy()
        fallback = True
    else:
        targets = positions.copy()  # hold for one epoch
        fallback = True
    return EpochResult(targets, result, fallback)


def epoch_clearance(positions, targets, scenario: ScenarioSpec) -> float:
    """Worst constraint violation along the straight epoch paths (0 if clear)."""
    worst = 0.0
    p = scenario.p
    for i in range(p):
        for k in range(i + 1, p):
            need = scenario.agents[i].radius + scenario.agents[k].radius
            got = geo.min_relative_distance(
                positions[i] - positions[k], targets[i] - targets[k]
            )
            worst = max(worst, need - got)
    for i in range(p):
        for wall in scenario.walls:
            got = geo.segment_segment_distance(positions[i], targets[i], wall.a, wall.b)
            worst = max(worst, scenario.agents[i].radius - got)
    return max(0.0, worst)


@dataclass
class LocalPlanResult:
    trace: np.ndarray  # (epochs + 1, p, 2) positions, first row = starts
    epochs: int
    arrived: np.ndarray  # (p,) bool
    max_epoch_violation: float
    epoch_iterations: list[int]
    fallbacks: int


def run_local_planner(
    scenario: ScenarioSpec,
    local_cfg: LocalPlanConfig | None = None,
    config: eng.SolverConfig | None = None,
) -> LocalPlanResult:
    """Run epochs until every agent is within ``goal_tol`` of its goal.

    Raises :class:`EpochCapExceeded` (with the partial trace attached) if the
    epoch cap is hit first.
    """
    scenario.validate()
    local_cfg = local_cfg or LocalPlanConfig()
    config = config or default_config(scenario)
    if config.warmup_rho0 is None:
        config.warmup_rho0 = scenario.eta * scenario.p * DEFAULT_WARMUP_SCALE

    positions = np.stack([a.start for a in scenario.agents]).astype(float)
    goals = np.stack([a.goal for a in scenario.agents])
    trace = [positions.copy()]
    iters = []
    worst = 0.0
    fallbacks = 0
    prev: EpochResult | None = None
    alpha = local_cfg.epoch_fraction

    for epoch in range(local_cfg.epoch_cap):
        remaining = np.hypot(*(goals - positions).T)
        if np.all(remaining <= local_cfg.goal_tol):
            return LocalPlanResult(
                np.array(trace), epoch, remaining <= local_cfg.goal_tol, worst, iters, fallbacks
            )
        init_z = None
        if prev is not None:
            # warm start: extrapolate the previous solution one step forward
            init_z = prev.targets + alpha * (prev.targets - trace[-2])
        result = plan_local_epoch(positions, scenario, local_cfg, config, init_z=init_z)
        worst = max(worst, epoch_clearance(positions, result.targets, scenario))
        iters.append(result.solve.iterations)
        fallbacks += int(result.fallback)
        positions = positions + alpha * (result.targets - positions)
        trace.append(positions.copy())
        prev = result

    remaining = np.hypot(*(goals - positions).T)
    if np.all(remaining <= local_cfg.goal_tol):
        return LocalPlanResult(
            np.array(trace), local_cfg.epoch_cap, remaining <= local_cfg.goal_tol,
            worst, iters, fallbacks,
        )
    raise EpochCapExceeded(
        f"{int(np.sum(remaining > local_cfg.goal_tol))} agents still under way "
        f"after {local_cfg.epoch_cap} epochs",
        trace=np.array(trace),
    )

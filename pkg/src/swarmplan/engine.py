"""Three-weight ADMM message-passing engine over a bipartite factor graph.

The graph pairs *minimizer nodes* (one per local cost or constraint) with
*equality nodes* (one per optimization variable, here a 2-D position).  Each
iteration runs seven steps per edge: build correcting messages, solve every
minimizer's local proximal problem, update outgoing certainty weights, build
consensus messages, average them into new consensus values, update return
weights, and update the running-sum corrections.

Certainty weights take exactly three values: ZERO (no opinion), STANDARD
(the configured rho0), and INFINITE (total certainty).  Forcing every weight
to STANDARD (``admm_mode``) makes the cycle identical to plain consensus
ADMM; zero weights are what lets equality nodes ignore inactive constraints.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ConflictingCertainty
from .minimizers import INFINITY_SURROGATE, ZERO_SURROGATE, Weight

ZERO = Weight.ZERO.value
STANDARD = Weight.STANDARD.value
INFINITE = Weight.INFINITE.value


@dataclass
class SolverConfig:
    """Engine parameters.

    ``warmup_rho0`` defaults to ``eta * p * 1e-5`` when a planner builds the
    configuration for a scenario; at the engine level ``None`` means "no
    warm-up distinction".  ``admm_mode`` forces every weight to STANDARD,
    reducing the cycle to plain ADMM.
    """

    rho0: float = 1.0
    warmup_rho0: float | None = None
    warmup_iters: int = 20
    step_alpha: float = 0.1
    max_iters: int = 10_000
    feas_tol: float = 1e-6
    res_tol: float = 1e-6
    rng_seed: int = 0
    admm_mode: bool = False
    infinity_surrogate: float = INFINITY_SURROGATE
    zero_surrogate: float = ZERO_SURROGATE
    threads: int = 1

    def effective_rho0(self, iteration: int) -> float:
        if self.warmup_rho0 is not None and iteration < self.warmup_iters:
            return self.warmup_rho0
        return self.rho0


@dataclass
class IterationStats:
    iteration: int
    max_residual: float
    max_disagreement: float
    active_constraints: int
    objective: float | None
    rho0_effective: float


@dataclass
class SolveResult:
    """Outcome of :func:`run_until_converged` (scipy-result style)."""

    converged: bool
    z: np.ndarray
    iterations: int
    stats: list[IterationStats]
    max_violation: float
    best_z: np.ndarray
    best_violation: float
    z_trace: np.ndarray | None = None


@dataclass
class EqualityNode:
    variable_id: object
    index: int
    z: np.ndarray
    incident_edges: list[int]
    fixed: np.ndarray | None


@dataclass
class MinimizerNode:
    minimizer_id: int
    kind: str
    params: dict
    incident_edges: list[int]


@dataclass
class EdgeState:
    x: np.ndarray
    u: np.ndarray
    n: np.ndarray
    m: np.ndarray
    fwd_weight: Weight
    rev_weight: Weight


class _EvalContext:
    """Per-iteration constants handed to the kind evaluators."""

    def __init__(self, config: SolverConfig, rho0_eff: float, rng_for_node):
        self.config = config
        self.rho0_eff = rho0_eff
        self.rng_for_node = rng_for_node
        self.zero_surrogate = config.zero_surrogate
        self.infinity_surrogate = config.infinity_surrogate

    def numeric(self, rev_tags: np.ndarray) -> np.ndarray:
        """Numeric weights as seen inside minimizer closed forms (zeros lifted)."""
        return np.where(
            rev_tags == STANDARD,
            self.rho0_eff,
            np.where(rev_tags == INFINITE, self.infinity_surrogate, self.zero_surrogate),
        )


def _harmonic(w1, w2):
    return w1 * w2 / (w1 + w2)


class KindBlock:
    """Column store for all minimizer nodes of one kind."""

    name = "?"
    arity = 0
    hard = False  # hard kinds define feasibility at consensus

    def __init__(self, node_ids, var_idx):
        self.node_ids = np.asarray(node_ids, dtype=np.int64)
        self.var_idx = np.asarray(var_idx, dtype=np.int64).reshape(len(node_ids), self.arity)

    def __len__(self):
        return self.var_idx.shape[0]

    def evaluate(self, n, rev, ctx, rows):
        """Solve rows' local problems.  Returns (x[rows, arity, 2], active[rows])."""
        raise NotImplementedError

    def violation(self, zv) -> np.ndarray:
        """Constraint violation magnitude per node at consensus values ``zv``."""
        return np.zeros(len(self), dtype=float)

    def objective(self, zv) -> float | None:
        return None


class EnergyKind(KindBlock):
    name = "energy"
    arity = 2

    def __init__(self, node_ids, var_idx, coeff):
        super().__init__(node_ids, var_idx)
        self.coeff = np.asarray(coeff, dtype=float)

    def evaluate(self, n, rev, ctx, rows):
        w = ctx.numeric(rev)
        wl, wh = w[:, 0], w[:, 1]
        c2 = 2.0 * self.coeff[rows]
        den = (c2 * (wl + wh) + wl * wh)[:, None]
        common = c2[:, None] * (wl[:, None] * n[:, 0] + wh[:, None] * n[:, 1])
        x = np.empty_like(n)
        x[:, 0] = ((wl * wh)[:, None] * n[:, 0] + common) / den
        x[:, 1] = ((wl * wh)[:, None] * n[:, 1] + common) / den
        return x, np.zeros(len(rows), dtype=bool)

    def objective(self, zv):
        d = zv[:, 0] - zv[:, 1]
        return float(np.sum(self.coeff * np.einsum("ij,ij->i", d, d)))


class _VelKind(KindBlock):
    arity = 2

    def __init__(self, node_ids, var_idx, cap):
        super().__init__(node_ids, var_idx)
        self.cap = np.asarray(cap, dtype=float)

    def _active(self, dist, rows):
        raise NotImplementedError

    def evaluate(self, n, rev, ctx, rows):
        x = n.copy()
        diff = n[:, 0] - n[:, 1]
        dist = np.hypot(diff[:, 0], diff[:, 1])
        active = self._active(dist, rows)
        if not active.any():
            return x, active
        act_rows = np.nonzero(active)[0]
        cap = self.cap[rows][act_rows]
        w = ctx.numeric(rev[act_rows])
        wl, wh = w[:, 0], w[:, 1]
        nl, nh = n[act_rows, 0], n[act_rows, 1]
        d = dist[act_rows]
        ok = d > 0.0
        if ok.any():
            lam = (d[ok] / cap[ok] - 1.0) / (1.0 / wl[ok] + 1.0 / wh[ok])
            den = (wl[ok] * wh[ok] * d[ok] / cap[ok])[:, None]
            x[act_rows[ok], 0] = (
                (wl[ok] * (wh[ok] + lam))[:, None] * nl[ok] + (lam * wh[ok])[:, None] * nh[ok]
            ) / den
            x[act_rows[ok], 1] = (
                (wh[ok] * (wl[ok] + lam))[:, None] * nh[ok] + (lam * wl[ok])[:, None] * nl[ok]
            ) / den
        for i in np.nonzero(~ok)[0]:
            # coincident messages: split a random unit direction by the weights
            node = int(self.node_ids[rows[act_rows[i]]])
            ang = ctx.rng_for_node(node).uniform(0.0, 2.0 * math.pi)
            shift = cap[i] * np.array([math.cos(ang), math.sin(ang)])
            tot = wl[i] + wh[i]
            x[act_rows[i], 0] = nl[i] + (wh[i] / tot) * shift
            x[act_rows[i], 1] = nh[i] - (wl[i] / tot) * shift
        return x, active


class VmaxKind(_VelKind):
    name = "vmax"
    hard = True

    def _active(self, dist, rows):
        return dist > self.cap[rows]

    def violation(self, zv):
        d = zv[:, 0] - zv[:, 1]
        return np.maximum(0.0, np.hypot(d[:, 0], d[:, 1]) - self.cap)


class VminKind(_VelKind):
    name = "vmin"
    hard = True

    def _active(self, dist, rows):
        return dist < self.cap[rows]

    def violation(self, zv):
        d = zv[:, 0] - zv[:, 1]
        return np.maximum(0.0, self.cap - np.hypot(d[:, 0], d[:, 1]))


def _coll_recover(v, vb, n, w):
    """Affine recovery of the four points from the reduced slab solution.

    ``n``/``w`` are (k, 4, 2)/(k, 4) in slot order (lo, hi, lo', hi').
    """
    s_lo = w[:, 0] + w[:, 2]
    s_hi = w[:, 1] + w[:, 3]
    u = ((w[:, 0] - w[:, 2]) / s_lo)[:, None] * v + 2.0 * (
        w[:, 0, None] * n[:, 0] + w[:, 2, None] * n[:, 2]
    ) / s_lo[:, None]
    ub = ((w[:, 1] - w[:, 3]) / s_hi)[:, None] * vb + 2.0 * (
        w[:, 1, None] * n[:, 1] + w[:, 3, None] * n[:, 3]
    ) / s_hi[:, None]
    x = np.empty_like(n)
    x[:, 0] = (u - v) / 2.0
    x[:, 1] = (ub - vb) / 2.0
    x[:, 2] = (u + v) / 2.0
    x[:, 3] = (ub + vb) / 2.0
    return x


class CollKind(KindBlock):
    """Pairwise collision constraint on one trajectory segment.

    Slot order: (agent A at s, agent A at s+1, agent B at s, agent B at s+1).
    """

    name = "coll"
    arity = 4
    hard = True

    def __init__(self, node_ids, var_idx, r_sum):
        super().__init__(node_ids, var_idx)
        self.r_sum = np.asarray(r_sum, dtype=float)

    def evaluate(self, n, rev, ctx, rows):
        x = n.copy()
        r_sum = self.r_sum[rows]
        mrd = geo.min_relative_distance_batch(n[:, 0] - n[:, 2], n[:, 1] - n[:, 3])
        active = mrd < r_sum
        if not active.any():
            return x, active
        na = n[active]
        w = ctx.numeric(rev[active])
        va = na[:, 2] - na[:, 0]
        vba = na[:, 3] - na[:, 1]
        wv = _harmonic(w[:, 0], w[:, 2])
        wvb = _harmonic(w[:, 1], w[:, 3])
        node_rows = rows[active]

        def row_rng(i):
            return ctx.rng_for_node(int(self.node_ids[node_rows[i]]))

        v_star, vb_star = geo.solve_disk_slab_batch(
            va, vba, r_sum[active], wv, wvb, rng=row_rng
        )
        x[active] = _coll_recover(v_star, vb_star, na, w)
        return x, active

    def violation(self, zv):
        mrd = geo.min_relative_distance_batch(zv[:, 0] - zv[:, 2], zv[:, 1] - zv[:, 3])
        return np.maximum(0.0, self.r_sum - mrd)


class VoCollKind(KindBlock):
    """Epoch-end pairwise collision constraint with pinned start positions."""

    name = "vo_coll"
    arity = 2
    hard = True

    def __init__(self, node_ids, var_idx, x0_a, x0_b, r_sum):
        super().__init__(node_ids, var_idx)
        self.x0_a = np.asarray(x0_a, dtype=float).reshape(-1, 2)
        self.x0_b = np.asarray(x0_b, dtype=float).reshape(-1, 2)
        self.r_sum = np.asarray(r_sum, dtype=float)

    def evaluate(self, n, rev, ctx, rows):
        x = n.copy()
        r_sum = self.r_sum[rows]
        d0 = self.x0_a[rows] - self.x0_b[rows]
        mrd = geo.min_relative_distance_batch(d0, n[:, 0] - n[:, 1])
        active = mrd < r_sum
        if not active.any():
            return x, active
        na = n[active]
        w_up = ctx.numeric(rev[active])
        w_inf = ctx.infinity_surrogate
        # slots (lo=start A, hi=end A, lo'=start B, hi'=end B)
        n4 = np.stack(
            [self.x0_a[rows][active], na[:, 0], self.x0_b[rows][active], na[:, 1]], axis=1
        )
        w4 = np.stack(
            [np.full(w_up.shape[0], w_inf), w_up[:, 0],
             np.full(w_up.shape[0], w_inf), w_up[:, 1]], axis=1
        )
        va = n4[:, 2] - n4[:, 0]
        vba = n4[:, 3] - n4[:, 1]
        node_rows = rows[active]

        def row_rng(i):
            return ctx.rng_for_node(int(self.node_ids[node_rows[i]]))

        v_star, vb_star = geo.solve_disk_slab_batch(
            va, vba, r_sum[active],
            _harmonic(w4[:, 0], w4[:, 2]), _harmonic(w4[:, 1], w4[:, 3]),
            rng=row_rng,
        )
        x4 = _coll_recover(v_star, vb_star, n4, w4)
        x[active, 0] = x4[:, 1]
        x[active, 1] = x4[:, 3]
        return x, active

    def violation(self, zv):
        mrd = geo.min_relative_distance_batch(self.x0_a - self.x0_b, zv[:, 0] - zv[:, 1])
        return np.maximum(0.0, self.r_sum - mrd)


class WallKind(KindBlock):
    """Static-obstacle constraint on one trajectory segment."""

    name = "wall"
    arity = 2
    hard = True

    def __init__(self, node_ids, var_idx, x_l, x_r, radius):
        super().__init__(node_ids, var_idx)
        self.x_l = np.asarray(x_l, dtype=float).reshape(-1, 2)
        self.x_r = np.asarray(x_r, dtype=float).reshape(-1, 2)
        self.radius = np.asarray(radius, dtype=float)

    def _clearance(self, p0, p1, rows):
        return geo.segment_segment_distance_batch(
            p0, p1, self.x_l[rows], self.x_r[rows]
        ) - self.radius[rows]

    def evaluate(self, n, rev, ctx, rows):
        x = n.copy()
        active = self._clearance(n[:, 0], n[:, 1], rows) < 0.0
        if not active.any():
            return x, active
        w = ctx.numeric(rev)
        for i in np.nonzero(active)[0]:
            row = rows[i]
            capsule = geo.Capsule(
                geo.Segment(self.x_l[row], self.x_r[row]), self.radius[row]
            )
            problem = geo.SpringSlabProblem(
                n[i, 0], n[i, 1], w[i, 0], w[i, 1], capsule, ctx.zero_surrogate
            )
            rng = ctx.rng_for_node(int(self.node_ids[row]))
            x[i, 0], x[i, 1], _ = geo.solve_spring_slab(problem, rng=rng)
        return x, active

    def violation(self, zv):
        return np.maximum(
            0.0, -self._clearance(zv[:, 0], zv[:, 1], np.arange(len(self)))
        )


class VoWallKind(KindBlock):
    """Epoch wall constraint with a pinned start position."""

    name = "vo_wall"
    arity = 1
    hard = True

    def __init__(self, node_ids, var_idx, x0, x_l, x_r, radius):
        super().__init__(node_ids, var_idx)
        self.x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
        self.x_l = np.asarray(x_l, dtype=float).reshape(-1, 2)
        self.x_r = np.asarray(x_r, dtype=float).reshape(-1, 2)
        self.radius = np.asarray(radius, dtype=float)

    def _clearance(self, p1, rows):
        return geo.segment_segment_distance_batch(
            self.x0[rows], p1, self.x_l[rows], self.x_r[rows]
        ) - self.radius[rows]

    def evaluate(self, n, rev, ctx, rows):
        x = n.copy()
        active = self._clearance(n[:, 0], rows) < 0.0
        if not active.any():
            return x, active
        w = ctx.numeric(rev)
        for i in np.nonzero(active)[0]:
            row = rows[i]
            capsule = geo.Capsule(
                geo.Segment(self.x_l[row], self.x_r[row]), self.radius[row]
            )
            problem = geo.SpringSlabProblem(
                self.x0[row], n[i, 0], ctx.infinity_surrogate, w[i, 0],
                capsule, ctx.zero_surrogate,
            )
            rng = ctx.rng_for_node(int(self.node_ids[row]))
            _, x[i, 0], _ = geo.solve_spring_slab(problem, rng=rng)
        return x, active

    def violation(self, zv):
        return np.maximum(0.0, -self._clearance(zv[:, 0], np.arange(len(self))))


class VoCostKind(KindBlock):
    """Quadratic pull of an epoch-end position toward its reference point."""

    name = "vo_cost"
    arity = 1

    def __init__(self, node_ids, var_idx, x_ref, coeff):
        super().__init__(node_ids, var_idx)
        self.x_ref = np.asarray(x_ref, dtype=float).reshape(-1, 2)
        self.coeff = np.asarray(coeff, dtype=float)

    def evaluate(self, n, rev, ctx, rows):
        w = ctx.numeric(rev)[:, 0]
        w_inf = ctx.infinity_surrogate
        c2 = 2.0 * self.coeff[rows]
        den = c2 * (w_inf + w) + w_inf * w
        common = c2[:, None] * (w_inf * self.x_ref[rows] + w[:, None] * n[:, 0])
        x = np.empty_like(n)
        x[:, 0] = ((w_inf * w)[:, None] * n[:, 0] + common) / den[:, None]
        return x, np.zeros(len(rows), dtype=bool)

    def objective(self, zv):
        d = zv[:, 0] - self.x_ref
        return float(np.sum(self.coeff * np.einsum("ij,ij->i", d, d)))


_KIND_CLASSES = {
    cls.name: cls
    for cls in (EnergyKind, VmaxKind, VminKind, CollKind, VoCollKind, WallKind,
                VoWallKind, VoCostKind)
}

_KIND_PARAM_NAMES = {
    "energy": ("coeff",),
    "vmax": ("cap",),
    "vmin": ("cap",),
    "coll": ("r_sum",),
    "vo_coll": ("x0_a", "x0_b", "r_sum"),
    "wall": ("x_l", "x_r", "radius"),
    "vo_wall": ("x0", "x_l", "x_r", "radius"),
    "vo_cost": ("x_ref", "coeff"),
}


class FactorGraph:
    """Bipartite graph of equality nodes and minimizer nodes.

    Build with :meth:`add_variable` and :meth:`add_minimizer`; the engine
    compiles the edge tables on first use.  Node/edge ordering is the
    insertion order and is stable across runs, which is what makes runs
    deterministic.
    """

    def __init__(self):
        self._var_ids: list = []
        self._var_index: dict = {}
        self._fixed: list = []
        self._home: list = []
        self._pending: dict[str, list] = {}
        self._node_count = 0
        self._compiled = False

    # -- construction ------------------------------------------------------

    def add_variable(self, variable_id, home=None, fixed=None) -> int:
        if self._compiled:
            raise RuntimeError("graph already compiled")
        if variable_id in self._var_index:
            raise ValueError(f"duplicate variable {variable_id!r}")
        idx = len(self._var_ids)
        self._var_index[variable_id] = idx
        self._var_ids.append(variable_id)
        self._fixed.append(None if fixed is None else geo.vec(fixed))
        self._home.append(None if home is None else geo.vec(home))
        return idx

    def add_minimizer(self, kind: str, variables, **params) -> int:
        if self._compiled:
            raise RuntimeError("graph already compiled")
        if kind not in _KIND_CLASSES:
            raise ValueError(f"unknown minimizer kind {kind!r}")
        expected = _KIND_PARAM_NAMES[kind]
        if set(params) != set(expected):
            raise ValueError(f"{kind} expects params {expected}, got {tuple(params)}")
        var_idx = [self._var_index[v] for v in variables]
        if len(var_idx) != _KIND_CLASSES[kind].arity:
            raise ValueError(
                f"{kind} expects {_KIND_CLASSES[kind].arity} variables, got {len(var_idx)}"
            )
        node_id = self._node_count
        self._node_count += 1
        self._pending.setdefault(kind, []).append(
            (node_id, var_idx, [params[name] for name in expected])
        )
        return node_id

    # -- compiled state ----------------------------------------------------

    def compile(self):
        if self._compiled:
            return self
        self.num_vars = len(self._var_ids)
        self.pinned = np.array([f is not None for f in self._fixed], dtype=bool)
        self.pinned_values = np.zeros((self.num_vars, 2))
        for i, f in enumerate(self._fixed):
            if f is not None:
                self.pinned_values[i] = f
        self.homes = np.zeros((self.num_vars, 2))
        for i, h in enumerate(self._home):
            if h is not None:
                self.homes[i] = h
            elif self._fixed[i] is not None:
                self.homes[i] = self._fixed[i]

        self.blocks: list[KindBlock] = []
        edge_eq = []
        self._block_slices = []
        offset = 0
        for kind in _KIND_PARAM_NAMES:
            entries = self._pending.get(kind, [])
            if not entries:
                continue
            cls = _KIND_CLASSES[kind]
            node_ids = [e[0] for e in entries]
            var_idx = [e[1] for e in entries]
            param_cols = list(zip(*[e[2] for e in entries]))
            params = {
                name: np.asarray(col, dtype=float)
                for name, col in zip(_KIND_PARAM_NAMES[kind], param_cols)
            }
            block = cls(node_ids, var_idx, **params)
            self.blocks.append(block)
            k, arity = len(block), cls.arity
            self._block_slices.append(slice(offset, offset + k * arity))
            edge_eq.append(block.var_idx.reshape(-1))
            offset += k * arity

        self.edge_eq = (
            np.concatenate(edge_eq) if edge_eq else np.zeros(0, dtype=np.int64)
        )
        self.num_edges = int(self.edge_eq.shape[0])
        self.z = self.homes.copy()
        self.z[self.pinned] = self.pinned_values[self.pinned]
        self.u = np.zeros((self.num_edges, 2))
        self.x = np.zeros((self.num_edges, 2))
        self.n = np.zeros((self.num_edges, 2))
        self.m = np.zeros((self.num_edges, 2))
        self.fwd = np.full(self.num_edges, STANDARD, dtype=np.int8)
        self.rev = np.full(self.num_edges, STANDARD, dtype=np.int8)
        self.deg = np.bincount(self.edge_eq, minlength=self.num_vars).astype(float)

        # per-edge lookup for introspection
        self._edges_of_var = [[] for _ in range(self.num_vars)]
        for e, j in enumerate(self.edge_eq):
            self._edges_of_var[int(j)].append(e)
        self._compiled = True
        return self

    @property
    def init_box(self):
        pts = [h for h in self._home if h is not None]
        pts += [f for f in self._fixed if f is not None]
        arr = np.array(pts) if pts else np.zeros((1, 2))
        return arr.min(axis=0), arr.max(axis=0)

    # -- introspection views -----------------------------------------------

    def equality_node(self, variable_id) -> EqualityNode:
        self.compile()
        j = self._var_index[variable_id]
        return EqualityNode(
            variable_id=variable_id,
            index=j,
            z=self.z[j].copy(),
            incident_edges=list(self._edges_of_var[j]),
            fixed=self.pinned_values[j].copy() if self.pinned[j] else None,
        )

    def minimizer_nodes(self) -> list[MinimizerNode]:
        self.compile()
        out = []
        for block, sl in zip(self.blocks, self._block_slices):
            for i, nid in enumerate(block.node_ids):
                out.append(
                    MinimizerNode(
                        minimizer_id=int(nid),
                        kind=block.name,
                        params={},
                        incident_edges=list(
                            range(sl.start + i * block.arity, sl.start + (i + 1) * block.arity)
                        ),
                    )
                )
        return sorted(out, key=lambda node: node.minimizer_id)

    def edge_state(self, edge: int) -> EdgeState:
        self.compile()
        return EdgeState(
            x=self.x[edge].copy(),
            u=self.u[edge].copy(),
            n=self.n[edge].copy(),
            m=self.m[edge].copy(),
            fwd_weight=Weight(int(self.fwd[edge])),
            rev_weight=Weight(int(self.rev[edge])),
        )


# ---------------------------------------------------------------------------
# engine steps
# ---------------------------------------------------------------------------

def initialize(graph: FactorGraph, config: SolverConfig, mode: str = "start"):
    """Reset engine state.  ``mode`` is ``"start"`` or ``"random"``.

    ``"start"`` places every consensus value at its variable's home position
    (an agent's start); ``"random"`` samples uniformly in the bounding box of
    all home and pinned positions, seeded by ``config.rng_seed``.  Pinned
    variables always hold their fixed values.
    """
    graph.compile()
    if mode == "start":
        graph.z = graph.homes.copy()
    elif mode == "random":
        rng = np.random.default_rng(config.rng_seed)
        lo, hi = graph.init_box
        graph.z = rng.uniform(lo, hi, size=(graph.num_vars, 2))
    else:
        raise ValueError(f"unknown initialization mode {mode!r}")
    graph.z[graph.pinned] = graph.pinned_values[graph.pinned]
    graph.u[:] = 0.0
    graph.x[:] = 0.0
    graph.n[:] = 0.0
    graph.m[:] = 0.0
    graph.fwd[:] = STANDARD
    graph.rev[:] = STANDARD


def _evaluate_blocks(graph, ctx, threads, active_counts):
    for block, sl in zip(graph.blocks, graph._block_slices):
        k = len(block)
        n_k = graph.n[sl].reshape(k, block.arity, 2)
        rev_k = graph.rev[sl].reshape(k, block.arity)
        if threads <= 1 or k < 2 * threads:
            rows = np.arange(k)
            x_k, act = block.evaluate(n_k, rev_k, ctx, rows)
            graph.x[sl] = x_k.reshape(-1, 2)
            fwd_k = np.where(act, STANDARD, ZERO).astype(np.int8) if block.hard else np.full(
                k, STANDARD, dtype=np.int8
            )
            graph.fwd[sl] = np.repeat(fwd_k, block.arity)
            active_counts[block.name] = int(act.sum()) if block.hard else 0
        else:
            chunks = np.array_split(np.arange(k), threads)
            x_out = np.empty((k, block.arity, 2))
            act_out = np.empty(k, dtype=bool)

            def work(rows):
                x_c, act_c = block.evaluate(n_k[rows], rev_k[rows], ctx, rows)
                x_out[rows] = x_c
                act_out[rows] = act_c

            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, [c for c in chunks if len(c)]))
            graph.x[sl] = x_out.reshape(-1, 2)
            fwd_k = np.where(act_out, STANDARD, ZERO).astype(np.int8) if block.hard else np.full(
                k, STANDARD, dtype=np.int8
            )
            graph.fwd[sl] = np.repeat(fwd_k, block.arity)
            active_counts[block.name] = int(act_out.sum()) if block.hard else 0


def run_iteration(graph: FactorGraph, config: SolverConfig, iteration: int) -> IterationStats:
    """Execute one full seven-step message-passing cycle in place."""
    graph.compile()
    rho0 = config.effective_rho0(iteration)
    ctx = _EvalContext(
        config, rho0, lambda node: np.random.default_rng((config.rng_seed, node))
    )

    # 1. correcting messages
    np.subtract(graph.z[graph.edge_eq], graph.u, out=graph.n)

    # 2-3. minimizer solves and outgoing weights
    active_counts: dict[str, int] = {}
    _evaluate_blocks(graph, ctx, config.threads, active_counts)
    if config.admm_mode:
        graph.fwd[:] = STANDARD

    # 4. consensus messages
    np.add(graph.x, graph.u, out=graph.m)

    # 5. weighted consensus
    j = graph.edge_eq
    std = graph.fwd == STANDARD
    inf = graph.fwd == INFINITE
    w = std.astype(float) * rho0
    sw = np.bincount(j, weights=w, minlength=graph.num_vars)
    inf_cnt = np.bincount(j, weights=inf.astype(float), minlength=graph.num_vars)
    z_new = np.empty_like(graph.z)
    for c in range(2):
        swm = np.bincount(j, weights=w * graph.m[:, c], minlength=graph.num_vars)
        inf_sum = np.bincount(j, weights=inf * graph.m[:, c], minlength=graph.num_vars)
        all_sum = np.bincount(j, weights=graph.m[:, c], minlength=graph.num_vars)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_all = all_sum / np.where(graph.deg > 0, graph.deg, 1.0)
            mean_std = swm / np.where(sw > 0, sw, 1.0)
            mean_inf = inf_sum / np.where(inf_cnt > 0, inf_cnt, 1.0)
        z_new[:, c] = np.where(inf_cnt > 0, mean_inf, np.where(sw > 0, mean_std, mean_all))
    if inf_cnt.max(initial=0) > 1:
        dev = np.abs(graph.m - z_new[j]) * inf[:, None]
        conflict = (inf_cnt[j] > 1) & (dev.max(axis=1) > config.feas_tol)
        if conflict.any():
            bad = int(j[conflict][0])
            raise ConflictingCertainty(
                f"infinite-certainty messages disagree at variable index {bad}"
            )
    z_new[graph.pinned] = graph.pinned_values[graph.pinned]
    residual = float(np.max(np.abs(z_new - graph.z))) if graph.num_vars else 0.0
    graph.z = z_new

    # 6. return weights
    nz = graph.fwd != ZERO
    nz_cnt = np.bincount(j, weights=nz.astype(float), minlength=graph.num_vars)
    others_inf = inf_cnt[j] - inf
    others_nz = nz_cnt[j] - nz
    rev_new = np.full(graph.num_edges, STANDARD, dtype=np.int8)
    rev_new[others_nz == 0] = ZERO
    rev_new[(others_inf > 0) | graph.pinned[j]] = INFINITE
    if config.admm_mode:
        rev_new[:] = STANDARD
    graph.rev = rev_new

    # 7. running-sum corrections.  The dual step divides by the standard
    # rho0, not the warm-up value: u is the rho0-scaled dual, and scaling by
    # a tiny warm-up weight would turn the damped dual step into a huge one.
    disagreement = float(np.max(np.abs(graph.x - graph.z[j]))) if graph.num_edges else 0.0
    dual_step = config.step_alpha / config.rho0
    if config.admm_mode:
        graph.u += dual_step * (graph.x - graph.z[j])
    else:
        both_std = (graph.fwd == STANDARD) & (rev_new == STANDARD)
        graph.u = np.where(
            both_std[:, None],
            graph.u + dual_step * (graph.x - graph.z[j]),
            0.0,
        )

    objective = None
    obj_terms = [
        block.objective(graph.z[block.var_idx]) for block in graph.blocks
    ]
    obj_terms = [t for t in obj_terms if t is not None]
    if obj_terms:
        objective = float(sum(obj_terms))

    return IterationStats(
        iteration=iteration,
        max_residual=residual,
        max_disagreement=disagreement,
        active_constraints=int(sum(active_counts.values())),
        objective=objective,
        rho0_effective=rho0,
    )


def max_violation(graph: FactorGraph) -> float:
    """Worst hard-constraint violation at the current consensus values."""
    graph.compile()
    worst = 0.0
    for block in graph.blocks:
        if block.hard and len(block):
            worst = max(worst, float(block.violation(graph.z[block.var_idx]).max()))
    return worst


def run_until_converged(
    graph: FactorGraph,
    config: SolverConfig,
    record_z: bool = False,
) -> SolveResult:
    """Iterate until feasible-and-settled, or until ``config.max_iters``.

    Convergence requires every hard constraint satisfied at consensus within
    ``feas_tol`` and the consensus residual below ``res_tol``.  The best
    (lowest-violation) iterate seen is always retained.
    """
    graph.compile()
    stats: list[IterationStats] = []
    trace = [] if record_z else None
    best_violation = math.inf
    best_z = graph.z.copy()
    converged = False
    violation = math.inf
    it = 0
    for it in range(config.max_iters):
        st = run_iteration(graph, config, it)
        stats.append(st)
        if record_z:
            trace.append(graph.z.copy())
        violation = max_violation(graph)
        if violation < best_violation:
            best_violation = violation
            best_z = graph.z.copy()
        if violation <= config.feas_tol and st.max_residual < config.res_tol:
            converged = True
            break
    return SolveResult(
        converged=converged,
        z=graph.z.copy(),
        iterations=it + 1,
        stats=stats,
        max_violation=violation,
        best_z=best_z,
        best_violation=best_violation,
        z_trace=np.array(trace) if record_z else None,
    )

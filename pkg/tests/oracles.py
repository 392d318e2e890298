"""Independent brute-force oracles used to freeze expected values.

Everything here is deliberately simple and slow: dense grids, generic
constrained minimization, and a textbook consensus-ADMM loop.  The oracles
never call the solver paths they are used to check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# distance oracles
# ---------------------------------------------------------------------------

def grid_min_relative_distance(d0, d1, n=100001):
    d0 = np.asarray(d0, float)
    d1 = np.asarray(d1, float)
    t = np.linspace(0.0, 1.0, n)
    pts = (1.0 - t)[:, None] * d0 + t[:, None] * d1
    return float(np.min(np.hypot(pts[:, 0], pts[:, 1])))


def grid_segment_distance(p0, p1, q0, q1, n=1500):
    p0, p1, q0, q1 = (np.asarray(v, float) for v in (p0, p1, q0, q1))
    s = np.linspace(0.0, 1.0, n)
    a = (1.0 - s)[:, None] * p0 + s[:, None] * p1
    b = (1.0 - s)[:, None] * q0 + s[:, None] * q1
    diff = a[:, None, :] - b[None, :, :]
    return float(np.min(np.hypot(diff[..., 0], diff[..., 1])))


def seg_seg_distance_vec(p0, p1, q0, q1):
    """Closed-form segment-segment distance, vectorized over leading axes.

    Written independently of the package implementation so it can back the
    spring-slab oracle without circularity (and is itself cross-checked
    against ``grid_segment_distance`` in the tests).
    """
    p0, p1, q0, q1 = np.broadcast_arrays(
        np.asarray(p0, float), np.asarray(p1, float), np.asarray(q0, float), np.asarray(q1, float)
    )
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    c = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)
    denom = a * e - b * b
    safe = lambda x: np.where(x == 0.0, 1.0, x)  # noqa: E731
    s = np.where(denom > 0.0, np.clip((b * f - c * e) / safe(denom), 0.0, 1.0), 0.0)
    s = np.where((e == 0.0) & (a > 0.0), np.clip(-c / safe(a), 0.0, 1.0), s)
    t = np.where(e > 0.0, (b * s + f) / safe(e), 0.0)
    s = np.where((t < 0.0) & (a > 0.0), np.clip(-c / safe(a), 0.0, 1.0), s)
    s = np.where((t > 1.0) & (a > 0.0), np.clip((b - c) / safe(a), 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    s = np.where(a == 0.0, 0.0, s)
    closest = p0 + s[..., None] * d1 - (q0 + t[..., None] * d2)
    return np.sqrt(np.einsum("...i,...i->...", closest, closest))


# ---------------------------------------------------------------------------
# spring-slab oracle: dense tangent grid + dense boundary end-contact grid
# ---------------------------------------------------------------------------

def _capsule_boundary_points(xl, xr, radius, n_arc=4000, n_edge=4000):
    xl = np.asarray(xl, float)
    xr = np.asarray(xr, float)
    d = xr - xl
    length = float(np.hypot(*d))
    pts = []
    if length == 0.0:
        ang = np.linspace(0.0, TWO_PI, 2 * n_arc, endpoint=False)
        pts.append(xl + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        return np.concatenate(pts, axis=0)
    that = d / length
    phi = math.atan2(that[1], that[0])
    nu = np.array([-that[1], that[0]])
    t = np.linspace(0.0, 1.0, n_edge)
    for sign in (1.0, -1.0):
        pts.append(xl + sign * radius * nu + t[:, None] * d)
    ang_r = phi - 0.5 * math.pi + np.linspace(0.0, math.pi, n_arc)
    pts.append(xr + radius * np.stack([np.cos(ang_r), np.sin(ang_r)], axis=1))
    ang_l = phi + 0.5 * math.pi + np.linspace(0.0, math.pi, n_arc)
    pts.append(xl + radius * np.stack([np.cos(ang_l), np.sin(ang_l)], axis=1))
    return np.concatenate(pts, axis=0)


def spring_slab_oracle_energy(
    n,
    nbar,
    rho,
    rhobar,
    xl,
    xr,
    radius,
    n_theta=100_000,
    n_boundary=4000,
    feas_eps=1e-9,
):
    """Best (lowest) feasible slab energy found by dense enumeration.

    Candidates: the anchors themselves, slabs tangent to the capsule on a
    dense contact-angle grid, and end-contact configurations with one spring
    fully compressed and the free end sampled densely on the boundary.
    """
    n = np.asarray(n, float)
    nbar = np.asarray(nbar, float)
    xl = np.asarray(xl, float)
    xr = np.asarray(xr, float)

    if seg_seg_distance_vec(n, nbar, xl, xr) >= radius:
        return 0.0

    theta = np.arange(n_theta) * (TWO_PI / n_theta)
    cs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    d = xr - xl
    use_r = cs @ d >= 0.0
    anchor = np.where(use_r[:, None], xr, xl)
    p = anchor + radius * cs
    g1 = np.einsum("ij,ij->i", p - n, cs)
    g2 = np.einsum("ij,ij->i", p - nbar, cs)
    energies = [float(np.min(0.5 * rho * g1 * g1 + 0.5 * rhobar * g2 * g2))]

    boundary = _capsule_boundary_points(xl, xr, radius, n_boundary, n_boundary)
    for pin, free_anchor, w_free in ((n, nbar, rhobar), (nbar, n, rho)):
        if seg_seg_distance_vec(pin, pin, xl, xr) < radius:  # pin inside the region
            continue
        dist = seg_seg_distance_vec(
            np.broadcast_to(pin, boundary.shape), boundary, xl, xr
        )
        ok = dist >= radius - feas_eps
        if ok.any():
            diff = boundary[ok] - free_anchor
            energies.append(float(np.min(0.5 * w_free * np.einsum("ij,ij->i", diff, diff))))
    return min(energies)


# ---------------------------------------------------------------------------
# proximal oracles (generic constrained minimization)
# ---------------------------------------------------------------------------

def energy_prox_objective(x, xbar, n, nbar, rho, rhobar, coeff):
    return (
        coeff * float(np.sum((x - xbar) ** 2))
        + 0.5 * rho * float(np.sum((x - n) ** 2))
        + 0.5 * rhobar * float(np.sum((xbar - nbar) ** 2))
    )


def pair_prox_objective(x, xbar, n, nbar, rho, rhobar):
    return 0.5 * rho * float(np.sum((x - n) ** 2)) + 0.5 * rhobar * float(np.sum((xbar - nbar) ** 2))


def energy_prox_oracle(n, nbar, rho, rhobar, coeff):
    """Stationary point of the energy prox via a direct linear solve."""
    n = np.asarray(n, float)
    nbar = np.asarray(nbar, float)
    a = np.array([[2.0 * coeff + rho, -2.0 * coeff], [-2.0 * coeff, 2.0 * coeff + rhobar]])
    sol = np.linalg.solve(a, np.stack([rho * n, rhobar * nbar]))
    return sol[0], sol[1]


def velocity_prox_oracle(n, nbar, rho, rhobar, c, kind, starts=8, seed=0):
    """Best objective for the velocity cap (kind='max') / floor (kind='min') prox."""
    n = np.asarray(n, float)
    nbar = np.asarray(nbar, float)

    def obj(z):
        x, xbar = z[:2], z[2:]
        return 0.5 * rho * np.sum((x - n) ** 2) + 0.5 * rhobar * np.sum((xbar - nbar) ** 2)

    if kind == "max":
        cons = {"type": "ineq", "fun": lambda z: c * c - np.sum((z[:2] - z[2:]) ** 2)}
    else:
        cons = {"type": "ineq", "fun": lambda z: np.sum((z[:2] - z[2:]) ** 2) - c * c}

    rng = np.random.default_rng(seed)
    z0s = [np.concatenate([n, nbar])]
    for _ in range(starts - 1):
        z0s.append(np.concatenate([n, nbar]) + rng.normal(scale=max(1.0, c), size=4))
    best = math.inf
    for z0 in z0s:
        res = minimize(obj, z0, method="SLSQP", constraints=[cons],
                       options={"maxiter": 300, "ftol": 1e-14})
        if res.fun < best and cons["fun"](res.x) > -1e-9 * max(1.0, c * c):
            best = float(res.fun)
    return best


def coll_prox_oracle(n, nbar, np_, nbarp, rho, rhobar, rhop, rhobarp, r_sum,
                     starts=12, seed=0):
    """Best objective for the 4-point collision prox via SLSQP multistart.

    The closest-approach constraint is expressed through the interpolation
    parameter; SLSQP works on the squared closest distance, which is smooth
    almost everywhere.
    """
    anchors = [np.asarray(v, float) for v in (n, nbar, np_, nbarp)]
    w = [rho, rhobar, rhop, rhobarp]

    def obj(z):
        total = 0.0
        for i in range(4):
            total += 0.5 * w[i] * np.sum((z[2 * i : 2 * i + 2] - anchors[i]) ** 2)
        return total

    def min_sq_dist(z):
        d0 = z[0:2] - z[4:6]
        d1 = z[2:4] - z[6:8]
        dd = d1 - d0
        denom = float(dd @ dd)
        t = 0.0 if denom == 0.0 else min(1.0, max(0.0, -float(d0 @ dd) / denom))
        v = d0 + t * dd
        return float(v @ v)

    cons = {"type": "ineq", "fun": lambda z: min_sq_dist(z) - r_sum * r_sum}
    rng = np.random.default_rng(seed)
    z_anchor = np.concatenate(anchors)
    best = math.inf
    for k in range(starts):
        z0 = z_anchor if k == 0 else z_anchor + rng.normal(scale=r_sum, size=8)
        res = minimize(obj, z0, method="SLSQP", constraints=[cons],
                       options={"maxiter": 400, "ftol": 1e-14})
        if cons["fun"](res.x) > -1e-8 * r_sum * r_sum and res.fun < best:
            best = float(res.fun)
    return best


# ---------------------------------------------------------------------------
# reference consensus ADMM
# ---------------------------------------------------------------------------

class ReferenceAdmm:
    """Textbook consensus ADMM on a bipartite prox/variable graph.

    ``factors`` is a list of ``(prox, var_ids)`` where ``prox`` maps a list
    of incoming points and weights to a list of solved points.  Pinned
    variables keep their initial value.  This mirrors the seven-step message
    cycle with every certainty weight forced to the standard value.
    """

    def __init__(self, variables, factors, rho0=1.0, alpha=0.1, warmup_rho0=None,
                 warmup_iters=0):
        self.z = {j: np.asarray(v, float).copy() for j, (v, _) in variables.items()}
        self.pinned = {j: bool(p) for j, (_, p) in variables.items()}
        self.factors = factors
        self.rho0 = rho0
        self.alpha = alpha
        self.warmup_rho0 = warmup_rho0 if warmup_rho0 is not None else rho0
        self.warmup_iters = warmup_iters
        self.u = [
            [np.zeros(2) for _ in var_ids] for _, var_ids in factors
        ]

    def run(self, iters):
        trace = []
        for it in range(iters):
            rho = self.warmup_rho0 if it < self.warmup_iters else self.rho0
            msum = {j: np.zeros(2) for j in self.z}
            mcount = {j: 0 for j in self.z}
            xs_all = []
            for fi, (prox, var_ids) in enumerate(self.factors):
                ns = [self.z[j] - self.u[fi][k] for k, j in enumerate(var_ids)]
                xs = prox(ns, [rho] * len(var_ids))
                xs_all.append(xs)
                for k, j in enumerate(var_ids):
                    msum[j] = msum[j] + xs[k] + self.u[fi][k]
                    mcount[j] += 1
            for j in self.z:
                if not self.pinned[j]:
                    self.z[j] = msum[j] / mcount[j]
            for fi, (_, var_ids) in enumerate(self.factors):
                for k, j in enumerate(var_ids):
                    self.u[fi][k] = self.u[fi][k] + (self.alpha / rho) * (
                        xs_all[fi][k] - self.z[j]
                    )
            trace.append({j: v.copy() for j, v in self.z.items()})
        return trace

"""Catalog of proximal minimizers and their outgoing-weight rules.

Each function solves one local subproblem exactly: minimize the node's own
cost (a hard constraint or a quadratic) plus weighted squared distances to
the incoming messages.  Outgoing certainty weights are ``ZERO`` when the
constraint is inactive at the incoming messages (the node then returns them
unchanged) and ``STANDARD`` otherwise; these minimizers never emit
``INFINITE``.
"""

from __future__ import annotations

import enum
import logging
import math

import numpy as np

from . import geometry as geo
from .geometry import Capsule, Segment, SpringSlabProblem, Vec2

logger = logging.getLogger(__name__)

#: Numeric stand-in for an infinite certainty weight inside closed forms.
INFINITY_SURROGATE = 1e8

#: Numeric stand-in for a zero certainty weight inside closed forms.
ZERO_SURROGATE = 1e-8


class Weight(enum.Enum):
    """Three-valued certainty attached to every message."""

    ZERO = 0
    STANDARD = 1
    INFINITE = 2


def lift_zero(*weights: float, surrogate: float = ZERO_SURROGATE) -> tuple[float, ...]:
    """Replace zero weights by a small positive surrogate.

    Zero pairs become equal small values, which is the limit prescription for
    the indeterminate fractions in the collision reduction; lone zeros are
    lifted too so constrained closed forms (which divide by weights) stay
    defined.
    """
    return tuple(surrogate if w <= 0.0 else float(w) for w in weights)


# ---------------------------------------------------------------------------
# wall / collision
# ---------------------------------------------------------------------------

def g_wall(
    n: Vec2,
    nbar: Vec2,
    r: float,
    x_l: Vec2,
    x_r: Vec2,
    rho: float,
    rhobar: float,
    *,
    zero_surrogate: float = ZERO_SURROGATE,
    scan_points: int = geo.DEFAULT_SCAN_POINTS,
    rng=None,
) -> tuple[Vec2, Vec2, Weight]:
    """Keep a trajectory segment clear of the capsule around ``[x_l, x_r]``.

    Returns ``(x, xbar, weight)``.  If the segment ``n -> nbar`` already
    misses the capsule the constraint is inactive: the inputs are returned
    unchanged with weight ``ZERO``.  Otherwise the spring-slab system is
    solved exactly and the weight is ``STANDARD``.
    """
    n = geo.vec(n)
    nbar = geo.vec(nbar)
    r = float(r) if r > 0.0 else zero_surrogate
    capsule = Capsule(Segment(x_l, x_r), r)
    if geo.segment_capsule_distance(n, nbar, capsule) >= 0.0:
        return n.copy(), nbar.copy(), Weight.ZERO
    rho, rhobar = lift_zero(rho, rhobar, surrogate=zero_surrogate)
    problem = SpringSlabProblem(n, nbar, rho, rhobar, capsule, zero_surrogate)
    x, xbar, _ = geo.solve_spring_slab(problem, scan_points=scan_points, rng=rng)
    return x, xbar, Weight.STANDARD


def _coll_reduction(n, nbar, np_, nbarp, rho, rhobar, rhop, rhobarp):
    """Change of variables mapping the 4-point collision prox onto a wall prox.

    With v = x' - x and u = x' + x, completing the square in u leaves a
    spring-slab problem in (v, vbar) anchored at the message differences with
    the harmonic-mean stiffness of each weight pair, plus an affine recovery
    of (u, ubar).  Returns the reduced anchors, stiffnesses, and a function
    mapping (v*, vbar*) back to the four points.
    """
    v_anchor = np_ - n
    vbar_anchor = nbarp - nbar
    w_v = rho * rhop / (rho + rhop)
    w_vbar = rhobar * rhobarp / (rhobar + rhobarp)

    def recover(v_star, vbar_star):
        u_star = ((rho - rhop) / (rho + rhop)) * v_star + 2.0 * (rho * n + rhop * np_) / (rho + rhop)
        ubar_star = ((rhobar - rhobarp) / (rhobar + rhobarp)) * vbar_star + 2.0 * (
            rhobar * nbar + rhobarp * nbarp
        ) / (rhobar + rhobarp)
        x = (u_star - v_star) / 2.0
        xp = (u_star + v_star) / 2.0
        xbar = (ubar_star - vbar_star) / 2.0
        xbarp = (ubar_star + vbar_star) / 2.0
        return x, xbar, xp, xbarp

    return v_anchor, vbar_anchor, w_v, w_vbar, recover


def g_coll(
    n: Vec2,
    nbar: Vec2,
    np_: Vec2,
    nbarp: Vec2,
    rho: float,
    rhobar: float,
    rhop: float,
    rhobarp: float,
    r: float,
    rp: float,
    *,
    zero_surrogate: float = ZERO_SURROGATE,
    rng=None,
) -> tuple[Vec2, Vec2, Vec2, Vec2, Weight]:
    """Keep two agents' trajectory segments at least ``r + rp`` apart.

    Arguments follow (agent, other-agent) order: ``n``/``nbar`` are one
    agent's messages at consecutive break-points, ``np_``/``nbarp`` the other
    agent's.  Solved via :func:`g_wall` on the relative-motion point capsule.
    """
    n, nbar, np_, nbarp = geo.vec(n), geo.vec(nbar), geo.vec(np_), geo.vec(nbarp)
    r_sum = float(r) + float(rp)
    if geo.min_relative_distance(n - np_, nbar - nbarp) >= r_sum:
        return n.copy(), nbar.copy(), np_.copy(), nbarp.copy(), Weight.ZERO

    if rho <= 0.0 and rhop <= 0.0:
        rho = rhop = zero_surrogate
    if rhobar <= 0.0 and rhobarp <= 0.0:
        rhobar = rhobarp = zero_surrogate
    (rho, rhobar, rhop, rhobarp) = lift_zero(
        rho, rhobar, rhop, rhobarp, surrogate=zero_surrogate
    )

    v_anchor, vbar_anchor, w_v, w_vbar, recover = _coll_reduction(
        n, nbar, np_, nbarp, rho, rhobar, rhop, rhobarp
    )
    origin = np.zeros(2)
    v_star, vbar_star, _ = g_wall(
        v_anchor,
        vbar_anchor,
        r_sum,
        origin,
        origin,
        w_v,
        w_vbar,
        zero_surrogate=zero_surrogate,
        rng=rng,
    )
    x, xbar, xp, xbarp = recover(v_star, vbar_star)
    return x, xbar, xp, xbarp, Weight.STANDARD


# ---------------------------------------------------------------------------
# cost / velocity
# ---------------------------------------------------------------------------

def g_cost_energy(
    n: Vec2,
    nbar: Vec2,
    rho: float,
    rhobar: float,
    coeff: float,
    *,
    zero_surrogate: float = ZERO_SURROGATE,
) -> tuple[Vec2, Vec2, Weight]:
    """Quadratic kinetic-energy pull between consecutive break-points.

    Closed form of the 2x2 stationarity system for
    ``coeff*|x - xbar|^2`` plus the message springs; always ``STANDARD``.
    """
    n = geo.vec(n)
    nbar = geo.vec(nbar)
    rho, rhobar = lift_zero(rho, rhobar, surrogate=zero_surrogate)
    c2 = 2.0 * float(coeff)
    den = c2 * (rho + rhobar) + rho * rhobar
    common = c2 * (rho * n + rhobar * nbar)
    x = (rho * rhobar * n + common) / den
    xbar = (rho * rhobar * nbar + common) / den
    return x, xbar, Weight.STANDARD


def _vel_constrained(n, nbar, rho, rhobar, cap):
    """Shared active-case solution for the velocity cap/floor constraints."""
    diff = n - nbar
    dist = float(np.hypot(*diff))
    lam = (dist / cap - 1.0) / (1.0 / rho + 1.0 / rhobar)
    den = rho * rhobar * dist / cap  # equals rho*rhobar + lam*(rho + rhobar)
    x = (rho * (rhobar + lam) * n + lam * rhobar * nbar) / den
    xbar = (rhobar * (rho + lam) * nbar + lam * rho * n) / den
    return x, xbar


def g_vmax(
    n: Vec2,
    nbar: Vec2,
    rho: float,
    rhobar: float,
    cap: float,
    *,
    zero_surrogate: float = ZERO_SURROGATE,
) -> tuple[Vec2, Vec2, Weight]:
    """Cap the per-segment displacement at ``cap``.

    Inactive (``|n - nbar| <= cap``) returns the inputs with weight ``ZERO``;
    otherwise the unique KKT point with ``|x - xbar| = cap``.
    """
    n = geo.vec(n)
    nbar = geo.vec(nbar)
    if float(np.hypot(*(n - nbar))) <= cap:
        return n.copy(), nbar.copy(), Weight.ZERO
    rho, rhobar = lift_zero(rho, rhobar, surrogate=zero_surrogate)
    x, xbar = _vel_constrained(n, nbar, rho, rhobar, float(cap))
    return x, xbar, Weight.STANDARD


def g_vmin(
    n: Vec2,
    nbar: Vec2,
    rho: float,
    rhobar: float,
    floor: float,
    *,
    zero_surrogate: float = ZERO_SURROGATE,
    rng=None,
) -> tuple[Vec2, Vec2, Weight]:
    """Force the per-segment displacement to be at least ``floor``.

    When ``n == nbar`` exactly the separation direction is undefined; a
    seeded random unit direction breaks the tie.
    """
    n = geo.vec(n)
    nbar = geo.vec(nbar)
    dist = float(np.hypot(*(n - nbar)))
    if dist >= floor:
        return n.copy(), nbar.copy(), Weight.ZERO
    rho, rhobar = lift_zero(rho, rhobar, surrogate=zero_surrogate)
    if dist == 0.0:
        g = rng if rng is not None else np.random.default_rng(0)
        ang = g.uniform(0.0, 2.0 * math.pi)
        logger.debug("degenerate minimum-velocity input; random direction %.6f rad", ang)
        d = np.array([math.cos(ang), math.sin(ang)])
        shift = float(floor) * d
        x = n + (rhobar / (rho + rhobar)) * shift
        xbar = nbar - (rho / (rho + rhobar)) * shift
        return x, xbar, Weight.STANDARD
    x, xbar = _vel_constrained(n, nbar, rho, rhobar, float(floor))
    return x, xbar, Weight.STANDARD


# ---------------------------------------------------------------------------
# velocity-obstacle wrappers (one planning epoch, start positions pinned)
# ---------------------------------------------------------------------------

def g_vo_coll(
    n: Vec2,
    np_: Vec2,
    rho: float,
    rhop: float,
    x0: Vec2,
    x0p: Vec2,
    r: float,
    rp: float,
    *,
    inf_surrogate: float = INFINITY_SURROGATE,
    zero_surrogate: float = ZERO_SURROGATE,
    rng=None,
) -> tuple[Vec2, Vec2, Weight]:
    """Epoch-end positions for two agents leaving pinned starts ``x0``/``x0p``."""
    n, np_, x0, x0p = geo.vec(n), geo.vec(np_), geo.vec(x0), geo.vec(x0p)
    if geo.min_relative_distance(x0 - x0p, n - np_) >= float(r) + float(rp):
        return n.copy(), np_.copy(), Weight.ZERO
    _, xbar, _, xbarp, _ = g_coll(
        x0, n, x0p, np_, inf_surrogate, rho, inf_surrogate, rhop, r, rp,
        zero_surrogate=zero_surrogate, rng=rng,
    )
    return xbar, xbarp, Weight.STANDARD


def g_vo_wall(
    n: Vec2,
    x0: Vec2,
    x_l: Vec2,
    x_r: Vec2,
    r: float,
    rho: float,
    *,
    inf_surrogate: float = INFINITY_SURROGATE,
    zero_surrogate: float = ZERO_SURROGATE,
    rng=None,
) -> tuple[Vec2, Weight]:
    """Epoch-end position for an agent leaving pinned start ``x0`` past a wall."""
    n, x0 = geo.vec(n), geo.vec(x0)
    r_eff = float(r) if r > 0.0 else zero_surrogate
    capsule = Capsule(Segment(x_l, x_r), r_eff)
    if geo.segment_capsule_distance(x0, n, capsule) >= 0.0:
        return n.copy(), Weight.ZERO
    _, xbar, _ = g_wall(
        x0, n, r, x_l, x_r, inf_surrogate, rho,
        zero_surrogate=zero_surrogate, rng=rng,
    )
    return xbar, Weight.STANDARD


def g_vo_cost(
    n: Vec2,
    rho: float,
    x_ref: Vec2,
    coeff: float,
    *,
    inf_surrogate: float = INFINITY_SURROGATE,
    zero_surrogate: float = ZERO_SURROGATE,
) -> tuple[Vec2, Weight]:
    """Quadratic pull of an epoch-end position toward its reference point."""
    n, x_ref = geo.vec(n), geo.vec(x_ref)
    _, xbar, _ = g_cost_energy(
        x_ref, n, inf_surrogate, rho, coeff, zero_surrogate=zero_surrogate
    )
    return xbar, Weight.STANDARD

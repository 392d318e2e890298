"""2-D geometric kernel: capsules, segment distances, and the spring-slab solver.

The central object is the *capsule*: the region swept by a disk of radius r
translated along a segment.  Trajectory segments must stay clear of capsules,
and the active case of the obstacle proximal step reduces to the minimum-energy
configuration of two zero-rest-length springs joined by a freely extensible
rigid slab that may not cross the capsule.  That mechanical problem is solved
here by minimizing a one-dimensional tangent-energy function over the contact
angle, plus a closed-form enumeration of end-contact configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleConfiguration

Vec2 = np.ndarray  # shape (2,), float64

#: Default number of scan points for the tangent-angle fallback search.
DEFAULT_SCAN_POINTS = 1000

#: Candidates closer than this to the capsule are treated as touching, not crossing.
FEAS_EPS = 1e-9

_TWO_PI = 2.0 * math.pi


def vec(x, y=None) -> Vec2:
    """Build a float64 2-vector from two scalars or any length-2 sequence."""
    if y is None:
        a = np.asarray(x, dtype=float)
        if a.shape != (2,):
            raise ValueError(f"expected a 2-vector, got shape {a.shape}")
        return a
    return np.array([x, y], dtype=float)


@dataclass(frozen=True)
class Segment:
    """Directed segment from ``a`` to ``b``; ``a == b`` is a point obstacle."""

    a: Vec2
    b: Vec2

    def __post_init__(self):
        object.__setattr__(self, "a", vec(self.a))
        object.__setattr__(self, "b", vec(self.b))


@dataclass(frozen=True)
class Capsule:
    """Region swept by a disk of radius ``radius`` moving along ``seg``."""

    seg: Segment
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be positive")

    def contains(self, p: Vec2, tol: float = 0.0) -> bool:
        """True if ``p`` lies strictly inside the swept region (within ``tol``)."""
        return point_segment_distance(p, self.seg.a, self.seg.b) < self.radius - tol


@dataclass
class SpringSlabProblem:
    """Two springs anchored at ``n``/``nbar`` joined by a slab avoiding ``capsule``.

    Stiffnesses may be zero; a simultaneous zero pair is lifted internally to
    equal small values so the limiting configuration is well defined.
    """

    n: Vec2
    nbar: Vec2
    rho: float
    rhobar: float
    capsule: Capsule
    zero_surrogate: float = 1e-8

    def __post_init__(self):
        self.n = vec(self.n)
        self.nbar = vec(self.nbar)
        if self.rho < 0 or self.rhobar < 0:
            raise ValueError("spring stiffnesses must be non-negative")


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    """Distance from point ``p`` to segment ``[a, b]``."""
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ d) / dd
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(p - (a + t * d))))


def segment_segment_distance(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> float:
    """Minimum distance between segments ``[p0, p1]`` and ``[q0, q1]``.

    Closed form: the squared distance is piecewise quadratic in the two
    interpolation parameters; the minimum is at the interior critical point
    or on one of the four edges of the parameter square.
    """
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)

    if a == 0.0 and e == 0.0:
        return float(np.hypot(*r))
    if a == 0.0:
        t = min(1.0, max(0.0, f / e))
        return float(np.hypot(*(p0 - (q0 + t * d2))))
    c = float(d1 @ r)
    if e == 0.0:
        s = min(1.0, max(0.0, -c / a))
        return float(np.hypot(*(p0 + s * d1 - q0)))

    b = float(d1 @ d2)
    denom = a * e - b * b
    if denom > 0.0:
        s = min(1.0, max(0.0, (b * f - c * e) / denom))
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(1.0, max(0.0, -c / a))
    elif t > 1.0:
        t = 1.0
        s = min(1.0, max(0.0, (b - c) / a))
    return float(np.hypot(*(p0 + s * d1 - (q0 + t * d2))))


def segment_capsule_distance(p0: Vec2, p1: Vec2, capsule: Capsule) -> float:
    """Signed clearance of segment ``[p0, p1]`` from the capsule boundary.

    Positive: the segment stays clear by that amount.  Negative: it penetrates.
    """
    return segment_segment_distance(p0, p1, capsule.seg.a, capsule.seg.b) - capsule.radius


def segment_intersects_capsule(s: Segment, c: Capsule) -> bool:
    """True iff segment ``s`` enters the open swept region of capsule ``c``."""
    return segment_segment_distance(s.a, s.b, c.seg.a, c.seg.b) < c.radius


def min_relative_distance(d0: Vec2, d1: Vec2) -> float:
    """Minimum of ``|(1 - t) d0 + t d1|`` over ``t`` in [0, 1].

    With ``d0``/``d1`` the difference of two agents' positions at consecutive
    break-points, this is the closest approach of their constant-velocity
    trajectories.
    """
    dd = d1 - d0
    denom = float(dd @ dd)
    if denom == 0.0:
        return float(np.hypot(*d0))
    t = -float(d0 @ dd) / denom
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(d0 + t * dd)))


def min_relative_distance_batch(d0: np.ndarray, d1: np.ndarray) -> np.ndarray:
    """Vectorized :func:`min_relative_distance` for (..., 2) stacks."""
    dd = d1 - d0
    denom = np.einsum("...i,...i->...", dd, dd)
    num = -np.einsum("...i,...i->...", d0, dd)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = d0 + t[..., None] * dd
    return np.hypot(closest[..., 0], closest[..., 1])


def point_segment_distance_batch(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized point-to-segment distance for (..., 2) stacks."""
    d = b - a
    dd = np.einsum("...i,...i->...", d, d)
    num = np.einsum("...i,...i->...", p - a, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(dd > 0.0, num / np.where(dd > 0.0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * d
    return np.sqrt(np.einsum("...i,...i->...", p - closest, p - closest))


def segment_segment_distance_batch(p0, p1, q0, q1) -> np.ndarray:
    """Vectorized :func:`segment_segment_distance` for (..., 2) stacks."""
    p0, p1, q0, q1 = np.broadcast_arrays(
        np.asarray(p0, float), np.asarray(p1, float),
        np.asarray(q0, float), np.asarray(q1, float),
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

    def safe(x):
        return np.where(x == 0.0, 1.0, x)

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
# tangent configurations
# ---------------------------------------------------------------------------

def _support_anchor(theta: float, capsule: Capsule) -> Vec2:
    """Spine endpoint whose cap supports the capsule in direction ``theta``."""
    x_l, x_r = capsule.seg.a, capsule.seg.b
    nhat = np.array([math.cos(theta), math.sin(theta)])
    # Support point of the swept region in direction nhat; ties go to x_r.
    return x_r if float((x_r - x_l) @ nhat) >= 0.0 else x_l


def contact_point(theta: float, capsule: Capsule) -> Vec2:
    """Boundary point where a slab with outward normal angle ``theta`` touches.

    This is the support point of the swept region in direction
    ``(cos theta, sin theta)``: the far cap's center plus radius along the
    normal.  The cap selector compares the spine direction with the normal,
    which keeps the map translation invariant.
    """
    nhat = np.array([math.cos(theta), math.sin(theta)])
    return _support_anchor(theta, capsule) + capsule.radius * nhat


def tangent_energy(theta: float, problem: SpringSlabProblem) -> tuple[float, float, float]:
    """Spring energy of the tangent slab at contact angle ``theta``.

    Returns ``(E, dE/dtheta, d2E/dtheta2)``.  Within one cap branch the
    contact point is ``a + r*nhat`` for a fixed cap center ``a``, so the
    spring extensions gamma = <a - anchor, nhat> + r differentiate cleanly:
    gamma' = <a - anchor, perp(nhat)> and gamma'' = r - gamma.
    """
    cap = problem.capsule
    a = _support_anchor(theta, cap)
    c, s = math.cos(theta), math.sin(theta)
    r = cap.radius

    def branch_terms(anchor):
        dx, dy = a[0] - anchor[0], a[1] - anchor[1]
        g = dx * c + dy * s + r
        gp = -dx * s + dy * c
        gpp = r - g
        return g, gp, gpp

    g1, g1p, g1pp = branch_terms(problem.n)
    g2, g2p, g2pp = branch_terms(problem.nbar)
    rho, rhobar = problem.rho, problem.rhobar
    e = 0.5 * rho * g1 * g1 + 0.5 * rhobar * g2 * g2
    de = rho * g1 * g1p + rhobar * g2 * g2p
    d2e = rho * (g1p * g1p + g1 * g1pp) + rhobar * (g2p * g2p + g2 * g2pp)
    return e, de, d2e


def _branch_switch_angles(capsule: Capsule) -> tuple[float, ...]:
    """Angles where the contact map jumps between the two caps."""
    d = capsule.seg.b - capsule.seg.a
    if float(d @ d) == 0.0:
        return ()
    phi = math.atan2(d[1], d[0])
    return ((phi + 0.5 * math.pi) % _TWO_PI, (phi - 0.5 * math.pi) % _TWO_PI)


def _near_switch(theta: float, switches, tol: float = 1e-6) -> bool:
    for s in switches:
        d = abs((theta - s + math.pi) % _TWO_PI - math.pi)
        if d < tol:
            return True
    return False


def _newton_tangent(problem: SpringSlabProblem, theta0: float, iters: int = 60) -> float:
    theta = theta0 % _TWO_PI
    for _ in range(iters):
        _, de, d2e = tangent_energy(theta, problem)
        if d2e <= 1e-300:
            break
        step = de / d2e
        if abs(step) > 0.5:
            step = math.copysign(0.5, step)
        theta = (theta - step) % _TWO_PI
        if abs(step) < 1e-14:
            break
    return theta


def _golden_minimize(f, lo: float, hi: float, iters: int = 90) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _tangent_config(theta: float, problem: SpringSlabProblem):
    """Reconstruct the slab endpoints for contact angle ``theta``."""
    cap = problem.capsule
    nhat = np.array([math.cos(theta), math.sin(theta)])
    p = _support_anchor(theta, cap) + cap.radius * nhat
    gamma = float((p - problem.n) @ nhat)
    gammabar = float((p - problem.nbar) @ nhat)
    x = problem.n + gamma * nhat
    xbar = problem.nbar + gammabar * nhat
    return x, xbar, 0.5 * problem.rho * gamma**2 + 0.5 * problem.rhobar * gammabar**2


def _boundary_candidates(anchor: Vec2, pin: Vec2, capsule: Capsule, rng=None):
    """Boundary points of the capsule that can minimize distance to ``anchor``
    subject to the slab ``[pin, x]`` staying clear of the capsule.

    Enumerates: per-piece closest points (two offset edges, two arcs), the
    four corner points, and the horizon (tangency) points seen from ``pin``.
    Infeasible ones are filtered by the caller.
    """
    x_l, x_r = capsule.seg.a, capsule.seg.b
    r = capsule.radius
    d = x_r - x_l
    length = float(np.hypot(*d))
    out = []

    def closest_on_circle(center, towards):
        v = towards - center
        nv = float(np.hypot(*v))
        if nv == 0.0:
            if rng is None:
                u = np.array([1.0, 0.0])
            else:
                ang = rng.uniform(0.0, _TWO_PI)
                u = np.array([math.cos(ang), math.sin(ang)])
            return center + r * u
        return center + (r / nv) * v

    def circle_tangent_points(center, q):
        v = q - center
        dist = float(np.hypot(*v))
        if dist <= r:
            return []
        k = r * r / (dist * dist)
        h = r * math.sqrt(dist * dist - r * r) / (dist * dist)
        perp = np.array([-v[1], v[0]])
        return [center + k * v + h * perp, center + k * v - h * perp]

    if length == 0.0:
        out.append(closest_on_circle(x_l, anchor))
        out.extend(circle_tangent_points(x_l, pin))
        return out

    that = d / length
    nu = np.array([-that[1], that[0]])

    # offset edges
    for sign in (1.0, -1.0):
        a_e = x_l + sign * r * nu
        b_e = x_r + sign * r * nu
        t = float((anchor - a_e) @ (b_e - a_e)) / (length * length)
        t = min(1.0, max(0.0, t))
        out.append(a_e + t * (b_e - a_e))

    # arcs, clamped to the half facing away from the other cap
    for center, inward in ((x_l, that), (x_r, -that)):
        c = closest_on_circle(center, anchor)
        if float((c - center) @ inward) <= 0.0:
            out.append(c)
        out.extend(
            t
            for t in circle_tangent_points(center, pin)
            if float((t - center) @ inward) <= 1e-12 * r
        )

    # corners
    for center in (x_l, x_r):
        for sign in (1.0, -1.0):
            out.append(center + sign * r * nu)
    return out


def solve_spring_slab(
    problem: SpringSlabProblem,
    scan_points: int = DEFAULT_SCAN_POINTS,
    rng=None,
) -> tuple[Vec2, Vec2, str]:
    """Minimum-energy slab endpoints ``(x, xbar, scenario)``.

    scenario is ``"untouched"`` when the anchors are already feasible,
    ``"tangent"`` when the slab rests tangent to the capsule, and
    ``"compressed"`` when one spring is fully compressed with the free slab
    end on the capsule boundary.

    Raises :class:`NoFeasibleConfiguration` if no candidate survives the
    clearance check; that indicates a numerical breakdown, not a legitimate
    outcome.
    """
    cap = problem.capsule
    n, nbar = problem.n, problem.nbar
    rho, rhobar = problem.rho, problem.rhobar
    if rho == 0.0 and rhobar == 0.0:
        rho = rhobar = problem.zero_surrogate
        problem = SpringSlabProblem(n, nbar, rho, rhobar, cap, problem.zero_surrogate)

    if segment_capsule_distance(n, nbar, cap) >= 0.0:
        return n.copy(), nbar.copy(), "untouched"

    switches = _branch_switch_angles(cap)
    thetas = [_newton_tangent(problem, t0) for t0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)]

    # scan + polish; the scan also guards Newton against missing the global basin
    grid = np.arange(scan_points) * (_TWO_PI / scan_points)
    cos_g, sin_g = np.cos(grid), np.sin(grid)
    d_spine = cap.seg.b - cap.seg.a
    use_r = (d_spine[0] * cos_g + d_spine[1] * sin_g) >= 0.0
    ax = np.where(use_r, cap.seg.b[0], cap.seg.a[0])
    ay = np.where(use_r, cap.seg.b[1], cap.seg.a[1])
    g1 = (ax - n[0]) * cos_g + (ay - n[1]) * sin_g + cap.radius
    g2 = (ax - nbar[0]) * cos_g + (ay - nbar[1]) * sin_g + cap.radius
    energies = 0.5 * rho * g1 * g1 + 0.5 * rhobar * g2 * g2
    best = int(np.argmin(energies))
    theta_g = float(grid[best])
    thetas.append(theta_g)
    polished = _newton_tangent(problem, theta_g)
    if _near_switch(polished, switches):
        h = _TWO_PI / scan_points
        polished = _golden_minimize(
            lambda t: tangent_energy(t, problem)[0], theta_g - h, theta_g + h
        )
    thetas.append(polished)

    candidates = []
    for theta in thetas:
        x, xbar, e = _tangent_config(theta, problem)
        candidates.append((e, x, xbar, "tangent"))

    n_out = not cap.contains(n)
    nbar_out = not cap.contains(nbar)
    if n_out:
        for c in _boundary_candidates(nbar, n, cap, rng):
            candidates.append((0.5 * rhobar * float((c - nbar) @ (c - nbar)), n, c, "compressed"))
    if nbar_out:
        for c in _boundary_candidates(n, nbar, cap, rng):
            candidates.append((0.5 * rho * float((c - n) @ (c - n)), c, nbar, "compressed"))

    best_cand = None
    for e, x, xbar, tag in candidates:
        if segment_capsule_distance(x, xbar, cap) < -FEAS_EPS:
            continue
        if best_cand is None or e < best_cand[0]:
            best_cand = (e, x, xbar, tag)
    if best_cand is None:
        raise NoFeasibleConfiguration(
            f"no feasible slab configuration for anchors {n}, {nbar} and capsule {cap}"
        )
    _, x, xbar, tag = best_cand
    return np.asarray(x, dtype=float).copy(), np.asarray(xbar, dtype=float).copy(), tag


# ---------------------------------------------------------------------------
# batched disk variant (point capsule), used by the pairwise-collision step
# ---------------------------------------------------------------------------

def solve_disk_slab_batch(
    a: np.ndarray,
    abar: np.ndarray,
    radius: np.ndarray,
    w: np.ndarray,
    wbar: np.ndarray,
    newton_iters: int = 40,
    coarse_points: int = 64,
    rng=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Spring-slab solutions for K disk obstacles centered at the origin.

    ``a``/``abar`` are (K, 2) anchors, ``radius``/``w``/``wbar`` are (K,).
    All K instances are assumed active (anchor segment crosses the disk);
    rows that are in fact clear simply return a zero-energy tangent through
    the anchors before any other candidate can beat it -- the caller is
    expected to have short-circuited inactive rows already.

    Implements the same candidate taxonomy as :func:`solve_spring_slab`
    (tangent minimization by Newton from four starts plus a coarse scan,
    and compressed-spring end-contact candidates), vectorized over rows.
    """
    k = a.shape[0]
    if k == 0:
        return a.copy(), abar.copy()
    r = radius

    ax, ay = a[:, 0], a[:, 1]
    bx, by = abar[:, 0], abar[:, 1]

    def energy_grid(theta):
        c, s = np.cos(theta), np.sin(theta)
        g1 = r[:, None] - (ax[:, None] * c + ay[:, None] * s)
        g2 = r[:, None] - (bx[:, None] * c + by[:, None] * s)
        return 0.5 * w[:, None] * g1 * g1 + 0.5 * wbar[:, None] * g2 * g2

    coarse = np.arange(coarse_points) * (_TWO_PI / coarse_points)
    e_coarse = energy_grid(np.broadcast_to(coarse, (k, coarse_points)))
    seed = coarse[np.argmin(e_coarse, axis=1)]

    starts = np.stack(
        [
            np.zeros(k),
            np.full(k, 0.5 * math.pi),
            np.full(k, math.pi),
            np.full(k, 1.5 * math.pi),
            seed,
        ],
        axis=1,
    )

    theta = starts.copy()
    for _ in range(newton_iters):
        c, s = np.cos(theta), np.sin(theta)
        g1 = r[:, None] - (ax[:, None] * c + ay[:, None] * s)
        g1p = ax[:, None] * s - ay[:, None] * c
        g2 = r[:, None] - (bx[:, None] * c + by[:, None] * s)
        g2p = bx[:, None] * s - by[:, None] * c
        de = w[:, None] * g1 * g1p + wbar[:, None] * g2 * g2p
        d2e = w[:, None] * (g1p * g1p + g1 * (r[:, None] - g1)) + wbar[:, None] * (
            g2p * g2p + g2 * (r[:, None] - g2)
        )
        step = np.where(np.abs(d2e) > 1e-300, de / np.where(d2e == 0.0, 1.0, d2e), 0.0)
        np.clip(step, -0.5, 0.5, out=step)
        theta -= step

    # evaluate every Newton lane as a tangent candidate
    c, s = np.cos(theta), np.sin(theta)
    g1 = r[:, None] - (ax[:, None] * c + ay[:, None] * s)
    g2 = r[:, None] - (bx[:, None] * c + by[:, None] * s)
    e_lanes = 0.5 * w[:, None] * g1 * g1 + 0.5 * wbar[:, None] * g2 * g2

    nhat = np.stack([c, s], axis=2)
    x_l = a[:, None, :] + g1[:, :, None] * nhat
    x_u = abar[:, None, :] + g2[:, :, None] * nhat

    # 2b candidates: pin one anchor (must be outside the disk), put the free
    # slab end on the boundary: closest boundary point to its anchor plus the
    # two horizon points seen from the pinned anchor.
    na = np.hypot(ax, ay)
    nb = np.hypot(bx, by)

    def boundary_cands(free, free_norm, pin, pin_norm):
        safe_free = np.where(free_norm > 0.0, free_norm, 1.0)
        c1 = free * (r / safe_free)[:, None]
        degenerate = free_norm == 0.0
        if degenerate.any():
            for i in np.nonzero(degenerate)[0]:
                g = rng(int(i)) if callable(rng) else (rng or np.random.default_rng(0))
                ang = g.uniform(0.0, _TWO_PI)
                c1[i] = r[i] * np.array([math.cos(ang), math.sin(ang)])
        d2 = pin_norm * pin_norm
        safe_d2 = np.where(d2 > 0.0, d2, 1.0)
        kk = (r * r) / safe_d2
        under = d2 - r * r
        h = r * np.sqrt(np.maximum(under, 0.0)) / safe_d2
        perp = np.stack([-pin[:, 1], pin[:, 0]], axis=1)
        t1 = kk[:, None] * pin + h[:, None] * perp
        t2 = kk[:, None] * pin - h[:, None] * perp
        ok = under >= 0.0
        return np.stack([c1, t1, t2], axis=1), np.stack([np.ones(k, bool), ok, ok], axis=1)

    cand_b, ok_b = boundary_cands(a, na, abar, nb)      # pin = abar, free end near a
    cand_a, ok_a = boundary_cands(abar, nb, a, na)      # pin = a, free end near abar
    ok_b &= (nb >= r)[:, None]
    ok_a &= (na >= r)[:, None]

    e_b = 0.5 * w[:, None] * np.einsum("kij,kij->ki", cand_b - a[:, None, :], cand_b - a[:, None, :])
    e_a = 0.5 * wbar[:, None] * np.einsum(
        "kij,kij->ki", cand_a - abar[:, None, :], cand_a - abar[:, None, :]
    )

    # assemble all candidates: tangent lanes, pin-abar, pin-a
    lower = np.concatenate([x_l, cand_b, np.broadcast_to(a[:, None, :], cand_a.shape)], axis=1)
    upper = np.concatenate([x_u, np.broadcast_to(abar[:, None, :], cand_b.shape), cand_a], axis=1)
    energies = np.concatenate([e_lanes, e_b, e_a], axis=1)

    dist = point_segment_distance_batch(np.zeros_like(lower), lower, upper)
    feasible = dist >= r[:, None] - FEAS_EPS
    n_tang = theta.shape[1]
    feasible[:, n_tang : n_tang + 3] &= ok_b
    feasible[:, n_tang + 3 :] &= ok_a

    energies = np.where(feasible, energies, np.inf)
    pick = np.argmin(energies, axis=1)
    if not np.all(np.isfinite(energies[np.arange(k), pick])):
        bad = np.nonzero(~np.isfinite(energies[np.arange(k), pick]))[0]
        raise NoFeasibleConfiguration(f"disk slab solve failed for rows {bad.tolist()}")
    rows = np.arange(k)
    return lower[rows, pick], upper[rows, pick]

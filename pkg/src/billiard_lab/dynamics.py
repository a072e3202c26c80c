"""The billiard collision map, its tangent map, invariant-measure sampling.

Phase coordinates are (r, phi): r the cumulative arc length on the boundary,
phi in [-pi/2, pi/2] the reflection angle measured from the inward normal
toward the boundary traversal direction, so the outgoing velocity is
v = cos(phi) * normal + sin(phi) * tangent.  The map preserves
d(mu) = cos(phi) dr dphi.

Tangent map in (r, phi), with tau the free path, K/K1 the signed curvatures
at departure/arrival and phi/phi1 the angles:

    DF = -1/cos(phi1) * [[tau*K + cos(phi),                      tau            ],
                         [tau*K*K1 + K*cos(phi1) + K1*cos(phi),  tau*K1 + cos(phi1)]]

so that |det DF| = cos(phi)/cos(phi1) exactly.  The formula is pinned by two
independent checks (the determinant identity and finite differences of the
collision map) rather than by citation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Arc, Segment, Table

EPS_MIN = 1e-9     # smallest accepted flight parameter (avoids re-hitting the start)
EPS_GRAZE = 1e-8   # cos(phi) below this flags a grazing collision
EPS_CORNER = 1e-9  # arc-length distance to a junction that flags a corner hit


class CornerHitError(RuntimeError):
    """The orbit hit a component junction; callers gathering statistics
    must discard it."""


class NoIntersectionError(RuntimeError):
    """No boundary intersection found; signals a geometry bug."""


class NearGrazingError(RuntimeError):
    """Tangent-map entries blow up: cos(phi1) below the grazing threshold."""


@dataclass(frozen=True)
class PhasePoint:
    r: float
    phi: float


@dataclass(frozen=True)
class CollisionEvent:
    point: PhasePoint        # post-collision state
    position: tuple
    free_path: float
    component_id: int
    grazing: bool
    corner: bool


@dataclass(frozen=True)
class TangentVector:
    dr: float
    dphi: float


@dataclass
class OrbitSummary:
    collisions: int
    grazing_events: int
    truncated: bool
    component_hits: dict


def direction_at(table, r, phi):
    """Outgoing unit velocity and boundary frame at (r, phi)."""
    bp = table.locate(r)
    nx, ny = bp.normal
    tx, ty = bp.tangent
    c, s = math.cos(phi), math.sin(phi)
    return bp, (c * nx + s * tx, c * ny + s * ty)


def _segment_hit(px, py, vx, vy, seg):
    """Flight parameter and local arc length of the ray/segment intersection."""
    dx, dy = seg.direction
    denom = vx * dy - vy * dx
    if denom == 0.0:
        return None
    rx, ry = seg.p0[0] - px, seg.p0[1] - py
    t = (rx * dy - ry * dx) / denom
    s = (rx * vy - ry * vx) / denom
    if t <= EPS_MIN or s < -EPS_CORNER or s > seg.length + EPS_CORNER:
        return None
    return t, min(max(s, 0.0), seg.length)


def _arc_s_of_theta(arc, theta):
    """Arc length within the component for a hit at polar angle theta, or None."""
    span = abs(arc.dtheta)
    if arc.dtheta > 0:
        u = (theta - arc.theta0) % (2.0 * math.pi)
    else:
        u = (arc.theta0 - theta) % (2.0 * math.pi)
    tol = EPS_CORNER / arc.radius
    if arc.closed:
        return arc.radius * min(u, span)
    if u <= span + tol:
        return arc.radius * min(u, span)
    if u >= 2.0 * math.pi - tol:
        return 0.0
    return None


def _arc_hits(px, py, vx, vy, arc, departing):
    """Valid (t, s) intersections of the ray with an arc component.

    For the departure arc the quadratic has a root at ~0; the other root is
    computed in its numerically stable form -2 b (Vieta) to avoid the
    cancellation that would otherwise corrupt near-grazing re-hits.
    """
    ex, ey = px - arc.center[0], py - arc.center[1]
    b = ex * vx + ey * vy
    c0 = ex * ex + ey * ey - arc.radius * arc.radius
    out = []
    if departing:
        t = -2.0 * b
        if t > EPS_MIN:
            hx, hy = px + t * vx, py + t * vy
            s = _arc_s_of_theta(arc, math.atan2(hy - arc.center[1], hx - arc.center[0]))
            if s is not None:
                out.append((t, s))
        return out
    disc = b * b - c0
    if disc <= 0.0:
        return out
    root = math.sqrt(disc)
    # stable pair: the larger-magnitude root directly, the other via Vieta
    if b >= 0.0:
        t1 = -b - root
        t2 = c0 / t1 if t1 != 0.0 else math.inf
    else:
        t2 = -b + root
        t1 = c0 / t2 if t2 != 0.0 else math.inf
    for t in sorted((t1, t2)):
        if t > EPS_MIN and math.isfinite(t):
            hx, hy = px + t * vx, py + t * vy
            s = _arc_s_of_theta(arc, math.atan2(hy - arc.center[1], hx - arc.center[0]))
            if s is not None:
                out.append((t, s))
    return out


def collision_map(table, x, raise_on_corner=True):
    """One step of the billiard map F applied to PhasePoint x."""
    bp, (vx, vy) = direction_at(table, x.r, x.phi)
    px, py = bp.position
    best_t, best_comp, best_s = math.inf, None, 0.0
    for comp in table.components:
        sh = comp.shape
        if isinstance(sh, Segment):
            if comp.id == bp.component_id:
                continue   # a ray never re-hits its own flat wall
            hit = _segment_hit(px, py, vx, vy, sh)
            if hit is not None and hit[0] < best_t:
                best_t, best_comp, best_s = hit[0], comp, hit[1]
        else:
            for (t, s) in _arc_hits(px, py, vx, vy, sh, comp.id == bp.component_id):
                if t < best_t:
                    best_t, best_comp, best_s = t, comp, s
    if best_comp is None:
        raise NoIntersectionError(f"no boundary intersection from r={x.r}, phi={x.phi}")
    r1 = best_comp.r_offset + best_s
    bp1 = table.locate(r1)
    if bp1.is_corner:
        if raise_on_corner:
            raise CornerHitError(f"corner hit at r={r1}")
    n1x, n1y = bp1.normal
    t1x, t1y = bp1.tangent
    vn = vx * n1x + vy * n1y
    wx, wy = vx - 2.0 * vn * n1x, vy - 2.0 * vn * n1y
    phi1 = math.atan2(wx * t1x + wy * t1y, wx * n1x + wy * n1y)
    cos1 = math.cos(phi1)
    return CollisionEvent(PhasePoint(r1, phi1), bp1.position, best_t,
                          bp1.component_id, cos1 < EPS_GRAZE, bp1.is_corner)


def inverse_collision_map(table, x):
    """F^{-1} via the time-reversal involution (r, phi) -> (r, -phi)."""
    ev = collision_map(table, PhasePoint(x.r, -x.phi))
    return PhasePoint(ev.point.r, -ev.point.phi)


def tangent_map(table, x):
    """Derivative of the collision map at x, as a 2x2 array in (r, phi)."""
    ev = collision_map(table, x)
    return tangent_map_from_event(table, x, ev), ev


def tangent_map_from_event(table, x, ev):
    K = table.locate(x.r).curvature
    K1 = table.locate(ev.point.r).curvature
    tau = ev.free_path
    c0, c1 = math.cos(x.phi), math.cos(ev.point.phi)
    if c1 < EPS_GRAZE:
        raise NearGrazingError(f"cos(phi1)={c1} below grazing threshold")
    f = -1.0 / c1
    return np.array([
        [f * (tau * K + c0), f * tau],
        [f * (tau * K * K1 + K * c1 + K1 * c0), f * (tau * K1 + c1)],
    ])


def p_norm(phi, v):
    """p-metric length of a tangent vector: cos(phi) |dr|."""
    return math.cos(phi) * abs(v.dr)


def expansion_factor(table, x, v):
    """Expansion of the tangent vector v under DF in the p-metric
    dp = cos(phi) dr."""
    if v.dr == 0.0 and v.dphi == 0.0:
        raise ValueError("tangent vector must be nonzero")
    if v.dr == 0.0:
        raise ValueError("p-metric is degenerate on vertical tangent vectors")
    M, ev = tangent_map(table, x)
    dr1 = M[0, 0] * v.dr + M[0, 1] * v.dphi
    return math.cos(ev.point.phi) * abs(dr1) / p_norm(x.phi, v)


def front_curvature(table, x, v):
    """Outgoing wavefront curvature of the ray family tangent to v at x:
    B = (K + dphi/dr) / cos(phi)."""
    K = table.locate(x.r).curvature
    return (K + v.dphi / v.dr) / math.cos(x.phi)


def sample_mu(table, rng, n=None):
    """Sample the invariant measure: r uniform, phi = arcsin(u), u ~ U(-1,1).

    With n=None returns one PhasePoint; otherwise arrays (r, phi) of length n.
    """
    if n is None:
        r = rng.random() * table.perimeter
        phi = math.asin(2.0 * rng.random() - 1.0)
        return PhasePoint(r, phi)
    r = rng.random(n) * table.perimeter
    phi = np.arcsin(2.0 * rng.random(n) - 1.0)
    return r, phi


def orbit(table, x0, n_collisions, observer=None):
    """Iterate the collision map n_collisions times, reporting each event.

    A corner hit truncates the orbit (reported in the summary, not raised).
    """
    if n_collisions < 1:
        raise ValueError("n_collisions must be >= 1")
    x = x0
    hits = {}
    grazing = 0
    done = 0
    for _ in range(n_collisions):
        try:
            ev = collision_map(table, x)
        except CornerHitError:
            return OrbitSummary(done, grazing, True, hits)
        if observer is not None:
            observer(ev)
        hits[ev.component_id] = hits.get(ev.component_id, 0) + 1
        grazing += ev.grazing
        done += 1
        x = ev.point
    return OrbitSummary(done, grazing, False, hits)

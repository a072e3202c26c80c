"""Billiard table geometry: boundary components, family builders, validation.

A table is an ordered list of boundary components (line segments and circular
arcs) traversed with the domain Q on the left, so the inward unit normal is
always the left rotation of the unit tangent.  Signed curvature convention:
dispersing > 0, flat = 0, focusing < 0.  Tables are immutable after
construction; every downstream module treats them as shared read-only data.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

EPS_CORNER = 1e-9       # arc-length tolerance for corner-point detection
EPS_CLOSURE = 1e-9      # boundary closure residual tolerance (relative to scale)
EPS_PERIMETER = 1e-12   # relative tolerance for perimeter bookkeeping

FLAT = "flat"
DISPERSING = "dispersing"
FOCUSING = "focusing"

FAMILIES = ("semi-dispersing", "flower", "straight-stadium", "drive-belt", "custom")


class GeometryError(ValueError):
    """A table cannot be built from the given data."""


class OverlapError(GeometryError):
    """Scatterer closures intersect each other or the enclosing rectangle."""


class ArcExtentError(GeometryError):
    """A focusing arc is not shorter than half a circle."""


def _rot90(x, y):
    """Left rotation; maps the unit tangent to the inward unit normal."""
    return -y, x


@dataclass(frozen=True)
class Segment:
    p0: tuple
    p1: tuple

    @property
    def length(self):
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    @property
    def direction(self):
        L = self.length
        return (self.p1[0] - self.p0[0]) / L, (self.p1[1] - self.p0[1]) / L


@dataclass(frozen=True)
class Arc:
    center: tuple
    radius: float
    theta0: float       # angle of the start point
    dtheta: float       # signed angular span; > 0 means counterclockwise traversal
    closed: bool = False  # full circle (no junction at the parameter seam)

    @property
    def length(self):
        return self.radius * abs(self.dtheta)

    def point(self, theta):
        return (self.center[0] + self.radius * math.cos(theta),
                self.center[1] + self.radius * math.sin(theta))

    @property
    def theta1(self):
        return self.theta0 + self.dtheta


@dataclass(frozen=True)
class BoundaryComponent:
    """One smooth piece of the boundary with its cumulative arc-length offset."""

    id: int
    shape: object                 # Segment or Arc
    curvature_class: str          # FLAT | DISPERSING | FOCUSING
    r_offset: float
    loop: int = 0                 # boundary loop index (outer wall = 0, scatterers > 0)

    @property
    def length(self):
        return self.shape.length

    @property
    def curvature(self):
        """Signed curvature: dispersing > 0, flat = 0, focusing < 0."""
        if isinstance(self.shape, Segment):
            return 0.0
        # Q-on-the-left traversal: counterclockwise arcs bend away from Q (focusing).
        return -math.copysign(1.0, self.shape.dtheta) / self.shape.radius

    def point_at(self, s):
        """Boundary point at arc length s from the component start."""
        sh = self.shape
        if isinstance(sh, Segment):
            dx, dy = sh.direction
            return sh.p0[0] + s * dx, sh.p0[1] + s * dy
        th = sh.theta0 + math.copysign(1.0, sh.dtheta) * s / sh.radius
        return sh.point(th)

    def tangent_at(self, s):
        sh = self.shape
        if isinstance(sh, Segment):
            return sh.direction
        sgn = math.copysign(1.0, sh.dtheta)
        th = sh.theta0 + sgn * s / sh.radius
        return -sgn * math.sin(th), sgn * math.cos(th)

    def endpoints(self):
        return self.point_at(0.0), self.point_at(self.length)


@dataclass(frozen=True)
class BoundaryPoint:
    """Result of locate(): a boundary point with its local frame."""

    component_id: int
    position: tuple
    normal: tuple        # inward unit normal
    tangent: tuple       # unit tangent in traversal direction
    curvature: float     # signed
    s: float             # arc length within the component
    is_corner: bool      # within EPS_CORNER of a component junction


@dataclass(frozen=True)
class Table:
    components: tuple
    perimeter: float
    area: float
    family: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        offs = [c.r_offset for c in self.components]
        object.__setattr__(self, "_offsets", offs)

    @property
    def n_components(self):
        return len(self.components)

    def component_of(self, r):
        """Component index containing cumulative arc length r in [0, perimeter)."""
        i = bisect_right(self._offsets, r) - 1
        return max(i, 0)

    def locate(self, r):
        """Boundary point at cumulative arc length r (wrapped into [0, perimeter))."""
        r = r % self.perimeter
        i = self.component_of(r)
        comp = self.components[i]
        s = r - comp.r_offset
        # guard against r landing numerically at the next component's start
        if s > comp.length:
            s = comp.length
        pos = comp.point_at(s)
        tx, ty = comp.tangent_at(s)
        nx, ny = _rot90(tx, ty)
        corner = False
        if not (isinstance(comp.shape, Arc) and comp.shape.closed):
            corner = s < EPS_CORNER or comp.length - s < EPS_CORNER
        return BoundaryPoint(comp.id, pos, (nx, ny), (tx, ty), comp.curvature, s, corner)

    def dispersing_ids(self):
        return [c.id for c in self.components if c.curvature_class == DISPERSING]

    def focusing_ids(self):
        return [c.id for c in self.components if c.curvature_class == FOCUSING]

    def flat_ids(self):
        return [c.id for c in self.components if c.curvature_class == FLAT]

    def mean_free_path_exact(self):
        """Classical identity pi*|Q|/|dQ| for the mean free path under mu."""
        return math.pi * self.area / self.perimeter


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple
    warnings: tuple

    @staticmethod
    def build(violations, warnings):
        return ValidationReport(len(violations) == 0, tuple(violations), tuple(warnings))


# ---------------------------------------------------------------------------
# assembling components into tables


def _green_area(components):
    """Area of the region enclosed by the oriented boundary (Green's theorem)."""
    total = 0.0
    for c in components:
        sh = c.shape
        if isinstance(sh, Segment):
            total += 0.5 * (sh.p0[0] * sh.p1[1] - sh.p1[0] * sh.p0[1])
        else:
            th0, th1, w = sh.theta0, sh.theta1, sh.dtheta
            cx, cy, rho = sh.center[0], sh.center[1], sh.radius
            total += 0.5 * (rho * rho * w
                            + cx * rho * (math.sin(th1) - math.sin(th0))
                            + cy * rho * (math.cos(th0) - math.cos(th1)))
    return total


def _closure_residual(components):
    """Largest gap between consecutive component endpoints within each loop."""
    worst = 0.0
    by_loop = {}
    for c in components:
        by_loop.setdefault(c.loop, []).append(c)
    for loop_comps in by_loop.values():
        if len(loop_comps) == 1 and isinstance(loop_comps[0].shape, Arc) \
                and loop_comps[0].shape.closed:
            continue
        n = len(loop_comps)
        for i, c in enumerate(loop_comps):
            _, end = c.endpoints()
            start_next, _ = loop_comps[(i + 1) % n].endpoints()
            worst = max(worst, math.hypot(end[0] - start_next[0], end[1] - start_next[1]))
    return worst


def _assemble(shapes_classes_loops, family, meta=None):
    """Build a Table from (shape, curvature_class, loop) triples in boundary order."""
    comps = []
    r = 0.0
    for i, (shape, cls, loop) in enumerate(shapes_classes_loops):
        if shape.length <= 0:
            raise GeometryError(f"component {i} has non-positive length")
        comps.append(BoundaryComponent(i, shape, cls, r, loop))
        r += shape.length
    comps = tuple(comps)
    residual = _closure_residual(comps)
    if residual > EPS_CLOSURE * max(r, 1.0):
        raise GeometryError(f"boundary is not closed (residual {residual:.3e})")
    area = _green_area(comps)
    if area <= 0:
        raise GeometryError(f"boundary encloses non-positive area {area:.3e}")
    for c in comps:
        if isinstance(c.shape, Arc):
            want = DISPERSING if c.curvature > 0 else FOCUSING
            if c.curvature_class != want:
                raise GeometryError(
                    f"component {c.id}: curvature class {c.curvature_class} "
                    f"inconsistent with orientation (expected {want})")
        elif c.curvature_class != FLAT:
            raise GeometryError(f"component {c.id}: segments must be flat")
    return Table(comps, r, area, family, meta or {})


# ---------------------------------------------------------------------------
# family builders


def build_stadium(flat_length, arc_radius):
    """Straight stadium: two half-circle caps joined tangentially by parallel flats."""
    if flat_length <= 0 or arc_radius <= 0:
        raise GeometryError("flat_length and arc_radius must be positive")
    l2, rho = 0.5 * flat_length, arc_radius
    parts = [
        (Segment((-l2, -rho), (l2, -rho)), FLAT, 0),
        (Arc((l2, 0.0), rho, -0.5 * math.pi, math.pi), FOCUSING, 0),
        (Segment((l2, rho), (-l2, rho)), FLAT, 0),
        (Arc((-l2, 0.0), rho, 0.5 * math.pi, math.pi), FOCUSING, 0),
    ]
    return _assemble(parts, "straight-stadium",
                     {"flat_length": flat_length, "arc_radius": arc_radius})


def build_drivebelt(big_radius, small_radius, center_distance):
    """Skewed stadium around two pulleys; the big arc is always longer than pi.

    Common external tangent construction: the tangent lines touch both circles
    on the same side, at polar angle +-psi from the line of centers with
    cos(psi) = (R - r) / d.
    """
    R, r, d = big_radius, small_radius, center_distance
    if not (R > r > 0):
        raise GeometryError("requires big_radius > small_radius > 0 "
                            "(equal radii degenerate to a straight stadium)")
    if d <= R - r:
        raise GeometryError(f"center_distance {d} <= big_radius - small_radius {R - r}: "
                            "no external tangent lines")
    psi = math.acos((R - r) / d)
    big0, big1 = (R * math.cos(psi), R * math.sin(psi)), (R * math.cos(psi), -R * math.sin(psi))
    sm0 = (d + r * math.cos(psi), r * math.sin(psi))
    sm1 = (d + r * math.cos(psi), -r * math.sin(psi))
    parts = [
        (Arc((0.0, 0.0), R, psi, 2.0 * math.pi - 2.0 * psi), FOCUSING, 0),
        (Segment(big1, sm1), FLAT, 0),
        (Arc((d, 0.0), r, -psi, 2.0 * psi), FOCUSING, 0),
        (Segment(sm0, big0), FLAT, 0),
    ]
    table = _assemble(parts, "drive-belt",
                      {"big_radius": R, "small_radius": r, "center_distance": d,
                       "big_arc_extent": 2.0 * math.pi - 2.0 * psi})
    return table


def build_semidispersing(rect_width, rect_height, scatterers):
    """Rectangle with strictly convex internal scatterers (flat outer walls).

    Scatterers are discs {"disc": (center, radius)} or convex arc-gons
    {"arcgon": [(center, radius, theta0, theta1), ...]} traversed clockwise.
    """
    w, h = rect_width, rect_height
    if w <= 0 or h <= 0:
        raise GeometryError("rectangle sides must be positive")
    parts = [
        (Segment((0.0, 0.0), (w, 0.0)), FLAT, 0),
        (Segment((w, 0.0), (w, h)), FLAT, 0),
        (Segment((w, h), (0.0, h)), FLAT, 0),
        (Segment((0.0, h), (0.0, 0.0)), FLAT, 0),
    ]
    discs = []
    for loop, sc in enumerate(scatterers, start=1):
        if "disc" in sc:
            (cx, cy), rho = sc["disc"]
            if rho <= 0:
                raise GeometryError("scatterer radius must be positive")
            if not (cx - rho > 0 and cx + rho < w and cy - rho > 0 and cy + rho < h):
                raise OverlapError(f"scatterer {loop - 1} is not strictly inside the rectangle")
            discs.append(((cx, cy), rho))
            # clockwise traversal keeps Q on the left of a hole boundary
            parts.append((Arc((cx, cy), rho, 0.0, -2.0 * math.pi, closed=True),
                          DISPERSING, loop))
        elif "arcgon" in sc:
            pts = []
            for (cx, cy), rho, th0, th1 in sc["arcgon"]:
                if rho <= 0:
                    raise GeometryError("arc-gon arc radius must be positive")
                if th1 >= th0:
                    raise GeometryError("arc-gon arcs must be traversed clockwise")
                parts.append((Arc((cx, cy), rho, th0, th1 - th0), DISPERSING, loop))
                a = parts[-1][0]
                pts.extend([a.point(a.theta0), a.point(a.theta1)])
            for (px, py) in pts:
                if not (0 < px < w and 0 < py < h):
                    raise OverlapError(f"scatterer {loop - 1} is not strictly inside the rectangle")
        else:
            raise GeometryError(f"unknown scatterer spec {sc!r}")
    for i in range(len(discs)):
        for j in range(i + 1, len(discs)):
            (c1, r1), (c2, r2) = discs[i], discs[j]
            if math.hypot(c1[0] - c2[0], c1[1] - c2[1]) <= r1 + r2:
                raise OverlapError(f"scatterers {i} and {j} have intersecting closures")
    table = _assemble(parts, "semi-dispersing",
                      {"rect_width": w, "rect_height": h, "n_scatterers": len(scatterers)})
    if not scatterers:
        table.meta["warnings"] = ["no dispersing component: dynamics is integrable"]
    return table


def build_flower(arcs, walls=(), pathological=False):
    """Bunimovich-type table from placed focusing arcs and dispersing/flat walls.

    arcs:  [(center, radius, theta0, theta1)] focusing petals, counterclockwise.
    walls: [("arc", center, radius, theta0, theta1)] dispersing (clockwise) or
           [("segment", p0, p1)] flat walls.
    Components are supplied in boundary order.  Focusing arcs with angular
    extent >= pi are rejected unless `pathological` is set, in which case the
    table is accepted and validate() reports the violation.
    """
    parts = []
    for (center, rho, th0, th1) in arcs:
        if th1 <= th0:
            raise GeometryError("focusing arcs must be traversed counterclockwise")
        extent = th1 - th0
        if extent >= math.pi and not pathological:
            raise ArcExtentError(
                f"focusing arc extent {extent:.6f} >= pi; "
                "set pathological=True to build the large-arc demonstration table")
        parts.append((Arc(center, rho, th0, th1 - th0), FOCUSING, 0))
    for wall in walls:
        if wall[0] == "segment":
            parts.append((Segment(wall[1], wall[2]), FLAT, 0))
        elif wall[0] == "arc":
            _, center, rho, th0, th1 = wall
            if th1 >= th0:
                raise GeometryError("dispersing walls must be traversed clockwise")
            parts.append((Arc(center, rho, th0, th1 - th0), DISPERSING, 0))
        else:
            raise GeometryError(f"unknown wall spec {wall!r}")
    order = _chain_order(parts)
    table = _assemble([parts[i] for i in order], "flower",
                      {"pathological": bool(pathological)})
    if pathological:
        table.meta["warnings"] = ["focusing arc not shorter than half circle (pathological)"]
    return table


def _chain_order(parts):
    """Order components into a single closed chain by matching endpoints."""
    n = len(parts)
    comps = [BoundaryComponent(i, sh, cls, 0.0, loop) for i, (sh, cls, loop) in enumerate(parts)]
    used = [False] * n
    order = [0]
    used[0] = True
    _, cur_end = comps[0].endpoints()
    scale = max(max(c.length for c in comps), 1.0)
    for _ in range(n - 1):
        best, best_d = None, math.inf
        for j in range(n):
            if used[j]:
                continue
            start, _ = comps[j].endpoints()
            dch = math.hypot(start[0] - cur_end[0], start[1] - cur_end[1])
            if dch < best_d:
                best, best_d = j, dch
        if best is None or best_d > 1e-6 * scale:
            raise GeometryError("components do not form a closed boundary chain")
        order.append(best)
        used[best] = True
        _, cur_end = comps[best].endpoints()
    return order


def disc_table(radius=1.0):
    """Unit-style disc table (integrable; custom family, used as a test oracle)."""
    if radius <= 0:
        raise GeometryError("radius must be positive")
    return _assemble([(Arc((0.0, 0.0), radius, 0.0, 2.0 * math.pi, closed=True),
                       FOCUSING, 0)], "custom", {"kind": "disc", "radius": radius})


def rectangle_table(width=1.0, height=1.0):
    """Rectangle table (integrable; custom family, used as a test oracle)."""
    if width <= 0 or height <= 0:
        raise GeometryError("sides must be positive")
    parts = [
        (Segment((0.0, 0.0), (width, 0.0)), FLAT, 0),
        (Segment((width, 0.0), (width, height)), FLAT, 0),
        (Segment((width, height), (0.0, height)), FLAT, 0),
        (Segment((0.0, height), (0.0, 0.0)), FLAT, 0),
    ]
    return _assemble(parts, "custom", {"kind": "rectangle", "width": width, "height": height})


def flower_table(petals=3, petal_extent=0.8 * math.pi, hull_radius=1.0,
                 petal_radius=0.4, stalk_length=0.2, wall_pull=1.0):
    """Canonical flower with dispersing walls: a focusing petal bulges out at
    each vertex of a regular polygon; each petal is extended by two short
    radial flats ("stalks") and consecutive stalks are joined by a dispersing
    arc sagging into the domain.

    The radial stalks leave each petal circle orthogonally, which keeps every
    petal circle empty of other boundary points (the defocusing hypothesis);
    validate() re-checks this numerically.
    """
    if petals < 3:
        raise GeometryError("need at least 3 petals")
    if not (0 < petal_extent):
        raise GeometryError("petal extent must be positive")
    if not (0 < petal_radius < hull_radius):
        raise GeometryError("petal_radius must lie in (0, hull_radius)")
    if stalk_length <= 0:
        raise GeometryError("stalk_length must be positive")
    ang = [0.5 * math.pi + 2.0 * math.pi * k / petals for k in range(petals)]
    verts = [(hull_radius * math.cos(a), hull_radius * math.sin(a)) for a in ang]
    half = 0.5 * petal_extent
    arcs = [((verts[k][0], verts[k][1]), petal_radius, ang[k] - half, ang[k] + half)
            for k in range(petals)]
    walls = []

    def radial_pt(k, th, dist):
        return (verts[k][0] + dist * math.cos(th), verts[k][1] + dist * math.sin(th))

    for k in range(petals):
        kn = (k + 1) % petals
        th_e, th_s = ang[k] + half, ang[kn] - half
        e = radial_pt(k, th_e, petal_radius)
        ep = radial_pt(k, th_e, petal_radius + stalk_length)
        sp = radial_pt(kn, th_s, petal_radius + stalk_length)
        s = radial_pt(kn, th_s, petal_radius)
        walls.append(("segment", e, ep))
        mx, my = 0.5 * (ep[0] + sp[0]), 0.5 * (ep[1] + sp[1])
        chord = math.hypot(sp[0] - ep[0], sp[1] - ep[1])
        mm = math.hypot(mx, my)
        ux, uy = mx / mm, my / mm          # outward unit vector at the wall midpoint
        m = wall_pull * chord              # center offset; larger = shallower sag
        cx, cy = mx + m * ux, my + m * uy
        rho_d = math.hypot(ep[0] - cx, ep[1] - cy)
        ta = math.atan2(ep[1] - cy, ep[0] - cx)
        tb = math.atan2(sp[1] - cy, sp[0] - cx)
        while tb >= ta:
            tb -= 2.0 * math.pi
        walls.append(("arc", (cx, cy), rho_d, ta, tb))
        walls.append(("segment", sp, s))
    return build_flower(arcs, walls, pathological=(petal_extent >= math.pi))


def pathological_flower(big_extent=1.1 * math.pi, big_radius=1.0, fan_segments=6,
                        clearance=1.02):
    """Large-arc demonstration table: one focusing arc longer than half a
    circle, closed by a fan of flat walls kept strictly outside its circle."""
    if big_extent <= math.pi:
        raise GeometryError("big_extent must exceed pi")
    gap = 2.0 * math.pi - big_extent
    g = 0.5 * gap
    # arc spans [g, 2*pi - g]; the gap faces the +x direction
    arc = ((0.0, 0.0), big_radius, g, 2.0 * math.pi - g)
    pts = [(big_radius * math.cos(2.0 * math.pi - g), big_radius * math.sin(2.0 * math.pi - g))]
    rv = big_radius * clearance / math.cos(0.5 * gap / fan_segments)
    for i in range(1, fan_segments):
        th = -g + gap * i / fan_segments
        pts.append((rv * math.cos(th), rv * math.sin(th)))
    pts.append((big_radius * math.cos(g), big_radius * math.sin(g)))
    walls = [("segment", pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    return build_flower([arc], walls, pathological=True)


# ---------------------------------------------------------------------------
# validation


def _sample_component_points(comp, n=64):
    return [comp.point_at(comp.length * (i + 0.5) / n) for i in range(n)]


def validate(table):
    """Check the hypotheses of the table family's theorem; pure function.

    Violations and warnings are (rule-id, message) pairs; `passed` is true
    iff there are no violations.
    """
    violations, warnings = [], []

    # structural checks shared by all families
    r = 0.0
    for c in table.components:
        if abs(c.r_offset - r) > EPS_PERIMETER * max(table.perimeter, 1.0):
            violations.append(("r-offsets", f"component {c.id} offset mismatch"))
        r += c.length
    if abs(r - table.perimeter) > EPS_PERIMETER * max(table.perimeter, 1.0):
        violations.append(("perimeter", "perimeter does not equal the sum of component lengths"))
    residual = _closure_residual(table.components)
    if residual > EPS_CLOSURE * max(table.perimeter, 1.0):
        violations.append(("closure", f"boundary not closed (residual {residual:.3e})"))
    if table.area <= 0:
        violations.append(("area", "non-positive area"))

    fam = table.family
    if fam == "semi-dispersing":
        _validate_semidispersing(table, violations, warnings)
    elif fam == "flower":
        _validate_flower(table, violations, warnings)
    elif fam in ("straight-stadium", "drive-belt"):
        _validate_stadium(table, violations, warnings)
    else:
        warnings.append(("family", "family 'custom': no theorem of the mixing-rate "
                                   "analysis applies"))
    for msg in table.meta.get("warnings", []):
        warnings.append(("builder", msg))
    return ValidationReport.build(violations, warnings)


def _as_disc(loop_comps):
    if len(loop_comps) == 1 and isinstance(loop_comps[0].shape, Arc) \
            and loop_comps[0].shape.closed:
        a = loop_comps[0].shape
        return a.center, a.radius
    return None


def _validate_semidispersing(table, violations, warnings):
    loops = {}
    for c in table.components:
        loops.setdefault(c.loop, []).append(c)
    scatterer_loops = [l for l in loops if l > 0]
    if not scatterer_loops:
        warnings.append(("no-dispersing", "no dispersing component: dynamics is integrable"))
    for c in table.components:
        if c.loop > 0 and c.curvature_class != DISPERSING:
            violations.append(("scatterer-class", f"component {c.id} of a scatterer "
                                                  "is not dispersing"))
    # disjoint closures: exact circle distance for disc pairs, sampled otherwise
    pts = {l: [p for c in loops[l] for p in _sample_component_points(c, n=128)]
           for l in scatterer_loops}
    for i in scatterer_loops:
        for j in scatterer_loops:
            if i >= j:
                continue
            di, dj = _as_disc(loops[i]), _as_disc(loops[j])
            if di and dj:
                (c1, r1), (c2, r2) = di, dj
                dmin = math.hypot(c1[0] - c2[0], c1[1] - c2[1]) - r1 - r2
            else:
                dmin = min(math.hypot(p[0] - q[0], p[1] - q[1])
                           for p in pts[i] for q in pts[j])
            if dmin <= 1e-9:
                violations.append(("disjoint", f"scatterer loops {i} and {j} have "
                                               "intersecting closures"))
    # scatterers strictly inside the rectangle
    w = table.meta.get("rect_width")
    h = table.meta.get("rect_height")
    if w and h:
        for l in scatterer_loops:
            for (px, py) in pts[l]:
                if not (1e-12 < px < w - 1e-12 and 1e-12 < py < h - 1e-12):
                    violations.append(("inside", f"scatterer loop {l} touches the rectangle"))
                    break


def _validate_flower(table, violations, warnings):
    comps = table.components
    for c in comps:
        if c.curvature_class == FOCUSING:
            extent = abs(c.shape.dtheta)
            if extent >= math.pi:
                violations.append(("half-circle",
                                   f"focusing arc {c.id} not shorter than half circle "
                                   f"(extent {extent:.6f} >= pi)"))
            _check_circle_containment(table, c, violations)
    _check_cusps(table, violations)
    flats = table.flat_ids()
    if flats:
        warnings.append(("flat-walls",
                         "flat components present: the decay bound needs a uniform cap "
                         "on consecutive flat reflections"))
    warnings.append(("genericity", "genericity of the table is not checked"))


def _check_circle_containment(table, arc_comp, violations):
    sh = arc_comp.shape
    cx, cy, rho = sh.center[0], sh.center[1], sh.radius
    a0, a1 = arc_comp.endpoints()
    for c in table.components:
        if c.id == arc_comp.id:
            continue
        for (px, py) in _sample_component_points(c, n=96):
            d = math.hypot(px - cx, py - cy)
            if d < rho - 1e-9:
                violations.append(("circle-containment",
                                   f"boundary point of component {c.id} lies inside the "
                                   f"circle of focusing arc {arc_comp.id}"))
                return
            if abs(d - rho) <= 1e-9:
                near_end = min(math.hypot(px - a0[0], py - a0[1]),
                               math.hypot(px - a1[0], py - a1[1]))
                if near_end > 1e-6:
                    violations.append(("circle-containment",
                                       f"boundary point of component {c.id} lies on the "
                                       f"circle of focusing arc {arc_comp.id}"))
                    return


def _check_cusps(table, violations):
    comps = [c for c in table.components if c.loop == 0]
    n = len(comps)
    if n < 2:
        return
    for i, c in enumerate(comps):
        nxt = comps[(i + 1) % n]
        if c.curvature_class == DISPERSING and nxt.curvature_class == DISPERSING:
            tx0, ty0 = c.tangent_at(c.length)
            tx1, ty1 = nxt.tangent_at(0.0)
            # a cusp reverses the tangent direction at the junction
            if tx0 * tx1 + ty0 * ty1 < -1.0 + 1e-9:
                violations.append(("cusp", f"dispersing components {c.id} and {nxt.id} "
                                           "meet tangentially (cusp)"))


def _validate_stadium(table, violations, warnings):
    comps = table.components
    n = len(comps)
    n_big = 0
    for i, c in enumerate(comps):
        nxt = comps[(i + 1) % n]
        tx0, ty0 = c.tangent_at(c.length)
        tx1, ty1 = nxt.tangent_at(0.0)
        residual = abs(1.0 - (tx0 * tx1 + ty0 * ty1))
        if residual > 1e-12:
            violations.append(("tangency",
                               f"components {c.id} and {nxt.id} are not tangent at their "
                               f"junction (residual {residual:.3e})"))
        if c.curvature_class == FOCUSING and abs(c.shape.dtheta) > math.pi + 1e-12:
            n_big += 1
    if table.family == "drive-belt" and n_big != 1:
        violations.append(("big-arc", f"drive-belt must contain exactly one arc larger "
                                      f"than half a circle (found {n_big})"))
    if table.family == "straight-stadium":
        for c in comps:
            if c.curvature_class == FOCUSING and abs(abs(c.shape.dtheta) - math.pi) > 1e-12:
                violations.append(("half-arc", f"stadium arc {c.id} extent differs from pi"))


# ---------------------------------------------------------------------------
# JSON table definitions


def table_to_json(table):
    comps = []
    for c in table.components:
        if isinstance(c.shape, Segment):
            comps.append({"shape": "segment", "p0": list(c.shape.p0), "p1": list(c.shape.p1),
                          "curvature_class": c.curvature_class, "loop": c.loop})
        else:
            comps.append({"shape": "arc", "center": list(c.shape.center),
                          "radius": c.shape.radius, "theta0": c.shape.theta0,
                          "dtheta": c.shape.dtheta, "closed": c.shape.closed,
                          "curvature_class": c.curvature_class, "loop": c.loop})
    return {"family": table.family, "parameters": dict(table.meta), "components": comps}


def table_from_json(doc):
    """Build a table from a JSON document: family+parameters, or explicit components."""
    fam = doc.get("family", "custom")
    params = doc.get("parameters", {})
    if "components" not in doc:
        return build_family(fam, params)
    parts = []
    for c in doc["components"]:
        if c["shape"] == "segment":
            parts.append((Segment(tuple(c["p0"]), tuple(c["p1"])),
                          c["curvature_class"], c.get("loop", 0)))
        else:
            parts.append((Arc(tuple(c["center"]), c["radius"], c["theta0"], c["dtheta"],
                              c.get("closed", False)),
                          c["curvature_class"], c.get("loop", 0)))
    return _assemble(parts, fam, params)


def build_family(family, params):
    """Dispatch a family name and parameter dict to the matching builder."""
    if family == "straight-stadium":
        return build_stadium(params["flat_length"], params["arc_radius"])
    if family == "drive-belt":
        return build_drivebelt(params["big_radius"], params["small_radius"],
                               params["center_distance"])
    if family == "semi-dispersing":
        scatterers = [{"disc": (tuple(s["center"]), s["radius"])}
                      for s in params.get("scatterers", [])]
        return build_semidispersing(params["rect_width"], params["rect_height"], scatterers)
    if family == "flower":
        if params.get("pathological"):
            return pathological_flower(params.get("big_extent", 1.1 * math.pi))
        return flower_table(params.get("petals", 3),
                            params.get("petal_extent", 0.8 * math.pi),
                            params.get("hull_radius", 1.0),
                            params.get("petal_radius", 0.4),
                            params.get("stalk_length", 0.2),
                            params.get("wall_pull", 1.0))
    if family == "custom":
        kind = params.get("kind")
        if kind == "disc":
            return disc_table(params.get("radius", 1.0))
        if kind == "rectangle":
            return rectangle_table(params.get("width", 1.0), params.get("height", 1.0))
    raise GeometryError(f"cannot build family {family!r} from parameters alone")


def load_table(path):
    with open(path) as f:
        return table_from_json(json.load(f))


def save_table(table, path):
    with open(path, "w") as f:
        json.dump(table_to_json(table), f, indent=2)

"""Induced first-return maps F: M -> M and dynamic cell classification.

The subset M is picked by a family rule:

  * scatterer-collisions: every collision with a dispersing component
    (flat-wall collisions are skipped);
  * first-arc-collision: all dispersing collisions plus the first collision
    of every run on a focusing arc;
  * first-arc-collision-arcs-only: only the first collisions on focusing
    arcs (flats skipped altogether).

Excursions between returns are classified into trap cells by the observed
mechanism: sliding along an arc, running near a diameter, bouncing between
the stadium flats (direct/indirect), or escaping along a flat corridor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel as ker
from .dynamics import CollisionEvent, PhasePoint, collision_map, inverse_collision_map, \
    tangent_map_from_event
from .geometry import DISPERSING, FLAT, FOCUSING

RULE_SCATTERER = ker.RULE_SCATTERER
RULE_FIRST_ARC = ker.RULE_FIRST_ARC
RULE_ARCS_ONLY = ker.RULE_ARCS_ONLY

DEFAULT_RULES = {
    "semi-dispersing": RULE_SCATTERER,
    "flower": RULE_FIRST_ARC,
    "straight-stadium": RULE_ARCS_ONLY,
    "drive-belt": RULE_ARCS_ONLY,
}

PHI_SLIDE = 1.2    # mean |phi| above this marks a sliding run
PHI_DIAM = 0.35    # mean |phi| below this marks a diametric run

SLIDING = "sliding"
DIAMETRIC = "diametric"
FLAT_RUN_DIRECT = "flat-run-direct"
FLAT_RUN_INDIRECT = "flat-run-indirect"
IH_ESCAPE = "ih-escape"
REGULAR = "regular"

KINDS = (SLIDING, DIAMETRIC, FLAT_RUN_DIRECT, FLAT_RUN_INDIRECT, IH_ESCAPE, REGULAR)
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


class SpecCompatibilityError(ValueError):
    """The membership rule does not apply to the table family."""


@dataclass(frozen=True)
class SubsetSpec:
    rule: str
    phi_slide: float = PHI_SLIDE
    phi_diam: float = PHI_DIAM

    @staticmethod
    def for_table(table, rule=None, **kw):
        rule = rule or DEFAULT_RULES.get(table.family)
        if rule is None:
            raise SpecCompatibilityError(
                f"no default membership rule for family {table.family!r}")
        if rule == RULE_SCATTERER and not table.dispersing_ids():
            raise SpecCompatibilityError(
                "scatterer rule needs at least one dispersing component")
        if rule in (RULE_FIRST_ARC, RULE_ARCS_ONLY) and not table.focusing_ids():
            raise SpecCompatibilityError(
                "first-arc rules need at least one focusing arc")
        return SubsetSpec(rule, **kw)


@dataclass(frozen=True)
class CellLabel:
    kind: str
    n: int
    anchor_id: int = 0


@dataclass
class ReturnRecord:
    start: PhasePoint
    end: PhasePoint
    R: int
    flat_bounces: int
    same_arc_run_length: int
    cell: CellLabel
    truncated: bool = False
    censored: bool = False


def in_M(table, spec, x, prev=None):
    """Membership of x in M.  prev (the previous collision point) is required
    for the first-arc rules; pass prev=None to have it computed by one
    reverse step."""
    cls = table.components[table.locate(x.r).component_id].curvature_class
    if spec.rule == RULE_SCATTERER:
        return cls == DISPERSING
    if cls == DISPERSING:
        return spec.rule == RULE_FIRST_ARC
    if cls != FOCUSING:
        return False
    if prev is None:
        prev = inverse_collision_map(table, x)
    prev_comp = table.locate(prev.r).component_id
    return prev_comp != table.locate(x.r).component_id


def return_map(table, spec, x, r_max=1_000_000, collect_events=False):
    """Iterate the collision map from x in M until the first return to M."""
    start_comp = table.locate(x.r).component_id
    events = []
    cur = x
    cur_comp = start_comp
    run_len, run_absphi, flats = 1, abs(x.phi), 0
    run_open = True
    first_flat = False
    R = 0
    while True:
        try:
            ev = collision_map(table, cur)
        except Exception:
            cell = _classify_counters(table.family, spec, start_comp,
                                      _class_of(table, start_comp), run_len,
                                      run_absphi, flats, first_flat, 0)
            return ReturnRecord(x, cur, R, flats, run_len, cell, truncated=True)
        R += 1
        if collect_events:
            events.append(ev)
        cls1 = table.components[ev.component_id].curvature_class
        if R == 1:
            first_flat = cls1 == FLAT
        if cls1 == FLAT:
            flats += 1
        if run_open and ev.component_id == start_comp:
            run_len += 1
            run_absphi += abs(ev.point.phi)
        else:
            run_open = False
        member = _member_step(spec, cls1, ev.component_id, cur_comp)
        if member:
            cell = _classify_counters(table.family, spec, start_comp,
                                      _class_of(table, start_comp), run_len,
                                      run_absphi, flats, first_flat, 0)
            rec = ReturnRecord(x, ev.point, R, flats, run_len, cell)
            if collect_events:
                rec.events = events
            return rec
        if R >= r_max:
            cell = _classify_counters(table.family, spec, start_comp,
                                      _class_of(table, start_comp), run_len,
                                      run_absphi, flats, first_flat, 0)
            return ReturnRecord(x, ev.point, R, flats, run_len, cell, censored=True)
        cur, cur_comp = ev.point, ev.component_id


def _class_of(table, comp_id):
    return table.components[comp_id].curvature_class


def _member_step(spec, cls1, comp1, comp_prev):
    if spec.rule == RULE_SCATTERER:
        return cls1 == DISPERSING
    first_arc = cls1 == FOCUSING and comp1 != comp_prev
    if spec.rule == RULE_ARCS_ONLY:
        return first_arc
    return cls1 == DISPERSING or first_arc


def classify_cell(table, spec, excursion):
    """Classify one excursion, given as the list of CollisionEvents from the
    M-point start (inclusive) to the first return (inclusive)."""
    if not excursion:
        return CellLabel(REGULAR, 0)
    start = excursion[0]
    start_comp = start.component_id
    start_cls = _class_of(table, start_comp)
    run_len, run_absphi = 1, abs(start.point.phi)
    flats = 0
    first_flat = False
    run_open = True
    for i, ev in enumerate(excursion[1:], start=1):
        cls1 = _class_of(table, ev.component_id)
        if i == 1:
            first_flat = cls1 == FLAT
        if cls1 == FLAT:
            flats += 1
        if run_open and ev.component_id == start_comp:
            run_len += 1
            run_absphi += abs(ev.point.phi)
        else:
            run_open = False
    return _classify_counters(table.family, spec, start_comp, start_cls,
                              run_len, run_absphi, flats, first_flat, 0)


def _classify_counters(family, spec, start_comp, start_cls, run_len, run_absphi,
                       flats, first_flat, octant):
    if start_cls == DISPERSING:
        if flats >= 1:
            return CellLabel(IH_ESCAPE, flats, anchor_id=octant)
        return CellLabel(REGULAR, 0)
    if start_cls != FOCUSING:
        return CellLabel(REGULAR, 0)
    mean_phi = run_absphi / run_len
    anchor = 2 * start_comp + (1 if mean_phi >= 0 else 0)
    if family == "straight-stadium" and flats >= 1 and run_len <= 2:
        kind = FLAT_RUN_DIRECT if run_len == 1 else FLAT_RUN_INDIRECT
        return CellLabel(kind, flats, anchor_id=start_comp)
    if run_len >= 2:
        if mean_phi > spec.phi_slide:
            return CellLabel(SLIDING, run_len, anchor_id=anchor)
        if mean_phi < spec.phi_diam:
            return CellLabel(DIAMETRIC, run_len, anchor_id=anchor)
    return CellLabel(REGULAR, 0)


def classify_batch(table, spec, exc):
    """Vectorized classification of an ExcursionBatch: (kind codes, n)."""
    pt_class = np.array([{"flat": 0, "dispersing": 1, "focusing": 2}[c.curvature_class]
                         for c in table.components], dtype=np.int8)
    start_cls = pt_class[exc.start_comp]
    n_pts = len(exc.R)
    kind = np.full(n_pts, _KIND_CODE[REGULAR], dtype=np.int8)
    n = np.zeros(n_pts, dtype=np.int64)

    disp = start_cls == 1
    ih = disp & (exc.flat_bounces >= 1)
    kind[ih] = _KIND_CODE[IH_ESCAPE]
    n[ih] = exc.flat_bounces[ih]

    foc = start_cls == 2
    mean_phi = exc.run_absphi / exc.run_len
    if table.family == "straight-stadium":
        fr = foc & (exc.flat_bounces >= 1) & (exc.run_len <= 2)
        direct = fr & (exc.run_len == 1)
        indirect = fr & (exc.run_len == 2)
        kind[direct] = _KIND_CODE[FLAT_RUN_DIRECT]
        kind[indirect] = _KIND_CODE[FLAT_RUN_INDIRECT]
        n[fr] = exc.flat_bounces[fr]
        foc_rest = foc & ~fr
    else:
        foc_rest = foc
    runs = foc_rest & (exc.run_len >= 2)
    slid = runs & (mean_phi > spec.phi_slide)
    diam = runs & (mean_phi < spec.phi_diam)
    kind[slid] = _KIND_CODE[SLIDING]
    n[slid] = exc.run_len[slid]
    kind[diam] = _KIND_CODE[DIAMETRIC]
    n[diam] = exc.run_len[diam]
    return kind, n


def kind_name(code):
    return KINDS[code]


def kind_code(name):
    return _KIND_CODE[name]


def induced_tangent_map(table, spec, record=None, x=None, r_max=100_000):
    """Derivative of the induced map over one excursion: the product of the
    per-step tangent maps.  Either a ReturnRecord with events or a starting
    point x in M must be given."""
    if x is None:
        if record is None or not hasattr(record, "events"):
            raise ValueError("need a starting point or a record with events")
        x = record.start
        events = record.events
    else:
        record = return_map(table, spec, x, r_max=r_max, collect_events=True)
        if record.truncated or record.censored:
            raise RuntimeError("excursion truncated or censored; no tangent map")
        events = record.events
    M = np.eye(2)
    cur = x
    for ev in events:
        M = tangent_map_from_event(table, cur, ev) @ M
        cur = ev.point
    return M, record


def p_expansion_of_matrix(M, phi_start, phi_end, v=(1.0, 0.0)):
    """p-metric expansion of the matrix product along direction v."""
    dr1 = M[0, 0] * v[0] + M[0, 1] * v[1]
    return math.cos(phi_end) * abs(dr1) / (math.cos(phi_start) * abs(v[0]))

import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from billiard_lab import geometry as geo


def test_stadium_perimeter_area():
    t = geo.build_stadium(2.0, 1.0)
    assert t.perimeter == pytest.approx(4 + 2 * math.pi, rel=1e-12)
    assert t.area == pytest.approx(4 + math.pi, rel=1e-12)
    assert t.family == "straight-stadium"
    assert len(t.components) == 4


def test_stadium_rejects_nonpositive():
    with pytest.raises(geo.GeometryError):
        geo.build_stadium(0.0, 1.0)
    with pytest.raises(geo.GeometryError):
        geo.build_stadium(2.0, -1.0)


def test_stadium_tangency_at_junctions():
    t = geo.build_stadium(2.0, 1.0)
    comps = t.components
    for i, c in enumerate(comps):
        nxt = comps[(i + 1) % len(comps)]
        t0 = c.tangent_at(c.length)
        t1 = nxt.tangent_at(0.0)
        assert abs(1.0 - (t0[0] * t1[0] + t0[1] * t1[1])) < 1e-12


def test_semidispersing_perimeter():
    t = geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.5, 0.5), 0.25)}])
    assert len(t.components) == 5
    assert t.perimeter == pytest.approx(4 + math.pi / 2, rel=1e-12)
    assert t.area == pytest.approx(1 - math.pi * 0.25 ** 2, rel=1e-12)


def test_semidispersing_overlap_error():
    with pytest.raises(geo.OverlapError):
        geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.3, 0.5), 0.25)},
                                            {"disc": ((0.7, 0.5), 0.25)}])


def test_semidispersing_empty_is_warned():
    t = geo.build_semidispersing(1.0, 1.0, [])
    rep = geo.validate(t)
    assert rep.passed
    assert any("no dispersing" in msg for _, msg in rep.warnings)


def test_drivebelt_big_arc_extent():
    # independent oracle: find the external tangent line numerically and
    # compare the resulting tangency angle with the builder's construction
    R, r, d = 1.0, 0.5, 2.0
    t = geo.build_drivebelt(R, r, d)
    extent = t.meta["big_arc_extent"]
    assert extent == pytest.approx(math.pi + 2 * math.asin(0.25), rel=1e-12)

    def tangent_gap(psi):
        # signed distance of the small circle from the line tangent to the
        # big circle at polar angle psi (line on the same side)
        nx, ny = math.cos(psi), math.sin(psi)
        return (d * nx - (R - r))

    psi = brentq(tangent_gap, 1e-9, math.pi - 1e-9)
    assert extent == pytest.approx(2 * math.pi - 2 * psi, abs=1e-10)
    assert extent > math.pi


def test_drivebelt_rejections():
    with pytest.raises(geo.GeometryError):
        geo.build_drivebelt(1.0, 1.0, 2.0)
    with pytest.raises(geo.GeometryError):
        geo.build_drivebelt(1.0, 0.5, 0.4)


def test_drivebelt_exactly_one_big_arc():
    for (R, r, d) in [(1.0, 0.5, 2.0), (1.0, 0.2, 1.5), (2.0, 1.0, 4.0)]:
        t = geo.build_drivebelt(R, r, d)
        big = [c for c in t.components
               if c.curvature_class == geo.FOCUSING and abs(c.shape.dtheta) > math.pi]
        assert len(big) == 1
        assert geo.validate(t).passed


def test_flower_half_circle_gate():
    arcs_bad = [((0.0, 0.0), 1.0, 0.45 * math.pi, 2 * math.pi - 0.45 * math.pi)]
    with pytest.raises(geo.ArcExtentError):
        geo.build_flower(arcs_bad, [])
    t = geo.pathological_flower(1.1 * math.pi)
    assert any("half circle" in m for m in t.meta.get("warnings", []))
    rep = geo.validate(t)
    assert not rep.passed
    assert any(rule == "half-circle" for rule, _ in rep.violations)


def test_flower_canonical_accepted():
    t = geo.flower_table(petals=3, petal_extent=0.8 * math.pi)
    rep = geo.validate(t)
    assert rep.passed, rep.violations
    assert len(t.focusing_ids()) == 3
    assert len(t.dispersing_ids()) == 3
    assert len(t.flat_ids()) == 6


def test_flower_09pi_accepted():
    # 0.9*pi < pi, so the three-petal flower builds without the flag
    t = geo.flower_table(petals=3, petal_extent=0.9 * math.pi)
    assert geo.validate(t).passed


def test_locate_curvatures():
    t = geo.build_stadium(2.0, 1.0)
    bp = t.locate(1.0)  # midpoint of the bottom flat
    assert bp.curvature == 0.0
    assert bp.normal == pytest.approx((0.0, 1.0))

    d = geo.disc_table(1.0)
    bp = d.locate(0.3)
    assert bp.curvature == pytest.approx(-1.0)
    # normal points to the center
    px, py = bp.position
    assert bp.normal == pytest.approx((-px, -py), abs=1e-12)

    sd = geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.5, 0.5), 0.25)}])
    scat = [c for c in sd.components if c.curvature_class == geo.DISPERSING][0]
    bp = sd.locate(scat.r_offset + 0.1)
    assert bp.curvature == pytest.approx(4.0)


def test_locate_inverts_parametrization():
    rng = np.random.default_rng(7)
    for t in [geo.build_stadium(2.0, 1.0), geo.disc_table(1.0),
              geo.build_drivebelt(1.0, 0.5, 2.0),
              geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.5, 0.5), 0.25)}]),
              geo.flower_table()]:
        for r in rng.uniform(0, t.perimeter, size=10_000):
            bp = t.locate(r)
            comp = t.components[bp.component_id]
            assert abs((comp.r_offset + bp.s) - r) < 1e-9


def test_boundary_closure_walk():
    for t in [geo.build_stadium(2.0, 1.0), geo.build_drivebelt(1.0, 0.5, 2.0),
              geo.flower_table(), geo.pathological_flower(),
              geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.5, 0.5), 0.25)}])]:
        assert geo._closure_residual(t.components) < 1e-9 * max(t.perimeter, 1.0)


def test_corner_flag():
    t = geo.build_stadium(2.0, 1.0)
    assert t.locate(2.0 + 1e-12).is_corner     # junction flat -> right arc
    assert not t.locate(1.0).is_corner
    d = geo.disc_table(1.0)
    assert not d.locate(0.0).is_corner         # closed loop has no seam corner


def test_json_roundtrip(tmp_path):
    t = geo.build_drivebelt(1.0, 0.5, 2.0)
    p = tmp_path / "belt.json"
    geo.save_table(t, p)
    t2 = geo.load_table(p)
    assert t2.perimeter == pytest.approx(t.perimeter, rel=1e-15)
    assert t2.area == pytest.approx(t.area, rel=1e-15)
    assert t2.family == t.family

    doc = {"family": "straight-stadium",
           "parameters": {"flat_length": 2.0, "arc_radius": 1.0}}
    t3 = geo.table_from_json(doc)
    assert t3.perimeter == pytest.approx(4 + 2 * math.pi)


def test_validation_touching_scatterers_via_json():
    # touching discs cannot be built; check the validator's disjointness rule
    # on a hand-assembled table instead
    parts = [
        (geo.Segment((0.0, 0.0), (1.0, 0.0)), geo.FLAT, 0),
        (geo.Segment((1.0, 0.0), (1.0, 1.0)), geo.FLAT, 0),
        (geo.Segment((1.0, 1.0), (0.0, 1.0)), geo.FLAT, 0),
        (geo.Segment((0.0, 1.0), (0.0, 0.0)), geo.FLAT, 0),
        (geo.Arc((0.375, 0.5), 0.125, 0.0, -2 * math.pi, closed=True), geo.DISPERSING, 1),
        (geo.Arc((0.625, 0.5), 0.125, 0.0, -2 * math.pi, closed=True), geo.DISPERSING, 2),
    ]
    t = geo._assemble(parts, "semi-dispersing", {"rect_width": 1.0, "rect_height": 1.0})
    rep = geo.validate(t)
    assert not rep.passed
    assert any(rule == "disjoint" for rule, _ in rep.violations)


def test_area_green_disc_scatterer():
    t = geo.build_semidispersing(2.0, 1.0, [{"disc": ((1.0, 0.5), 0.2)}])
    assert t.area == pytest.approx(2.0 - math.pi * 0.04, rel=1e-12)

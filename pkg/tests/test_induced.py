import math

import numpy as np
import pytest

from billiard_lab import geometry as geo
from billiard_lab import induced as ind
from billiard_lab import kernel as ker
from billiard_lab.dynamics import PhasePoint, collision_map, sample_mu

STADIUM = geo.build_stadium(2.0, 1.0)
SEMI = geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.5, 0.5), 0.25)}])
FLOWER = geo.flower_table()
BELT = geo.build_drivebelt(1.0, 0.5, 2.0)


def test_rule_compatibility():
    with pytest.raises(ind.SpecCompatibilityError):
        ind.SubsetSpec.for_table(geo.disc_table(1.0), rule=ind.RULE_SCATTERER)
    with pytest.raises(ind.SpecCompatibilityError):
        ind.SubsetSpec.for_table(SEMI, rule=ind.RULE_ARCS_ONLY)
    assert ind.SubsetSpec.for_table(SEMI).rule == ind.RULE_SCATTERER
    assert ind.SubsetSpec.for_table(STADIUM).rule == ind.RULE_ARCS_ONLY
    assert ind.SubsetSpec.for_table(FLOWER).rule == ind.RULE_FIRST_ARC


def test_in_M_semidispersing():
    spec = ind.SubsetSpec.for_table(SEMI)
    scat = [c for c in SEMI.components if c.curvature_class == geo.DISPERSING][0]
    assert ind.in_M(SEMI, spec, PhasePoint(scat.r_offset + 0.2, 0.3))
    assert not ind.in_M(SEMI, spec, PhasePoint(0.5, 0.0))   # bottom wall


def test_in_M_stadium_same_arc_prev():
    spec = ind.SubsetSpec.for_table(STADIUM)
    # a sliding point on the right arc whose previous collision is the same arc
    arc = STADIUM.components[1]
    x = PhasePoint(arc.r_offset + 0.5 * arc.length, 1.4)
    prev = PhasePoint(arc.r_offset + 0.4 * arc.length, 1.4)
    assert not ind.in_M(STADIUM, spec, x, prev)
    prev2 = PhasePoint(0.5, 0.0)  # bottom flat
    assert ind.in_M(STADIUM, spec, x, prev2)


def test_in_M_flower_dispersing_always():
    spec = ind.SubsetSpec.for_table(FLOWER)
    wall = [c for c in FLOWER.components if c.curvature_class == geo.DISPERSING][0]
    x = PhasePoint(wall.r_offset + 0.5 * wall.length, 0.2)
    petal = [c for c in FLOWER.components if c.curvature_class == geo.FOCUSING][0]
    prev_same = PhasePoint(wall.r_offset + 0.3 * wall.length, 0.0)
    assert ind.in_M(FLOWER, spec, x, prev_same)  # dispersing: prev irrelevant


def test_return_map_stadium_axial():
    # axial shot from the left arc apex reaches the right arc in one step
    spec = ind.SubsetSpec.for_table(STADIUM)
    left = STADIUM.components[3]
    x = PhasePoint(left.r_offset + 0.5 * left.length, 0.0)
    rec = ind.return_map(STADIUM, spec, x)
    assert rec.R == 1
    assert rec.flat_bounces == 0
    assert rec.cell.kind == ind.REGULAR


def test_return_map_flat_run_counting():
    spec = ind.SubsetSpec.for_table(STADIUM)
    left = STADIUM.components[3]
    bp = STADIUM.locate(left.r_offset + 0.1)
    nx, ny = bp.normal
    tx, ty = bp.tangent
    d = (0.03, -1.0)
    h = math.hypot(*d)
    d = (d[0] / h, d[1] / h)
    phi = math.atan2(d[0] * tx + d[1] * ty, d[0] * nx + d[1] * ny)
    rec = ind.return_map(STADIUM, spec, PhasePoint(left.r_offset + 0.1, phi))
    assert rec.cell.kind in (ind.FLAT_RUN_DIRECT, ind.FLAT_RUN_INDIRECT)
    if rec.cell.kind == ind.FLAT_RUN_DIRECT:
        assert rec.R == rec.cell.n + 1
    else:
        assert rec.R == rec.cell.n + 2
    assert rec.cell.n == rec.flat_bounces


def test_return_map_semidispersing_R_counts_flats():
    spec = ind.SubsetSpec.for_table(SEMI)
    rng = np.random.default_rng(2)
    pt = ker.PackedTable(SEMI)
    r, phi, prev, _, _ = ker.sample_m_batch(pt, spec.rule, rng, 200)
    for i in range(50):
        rec = ind.return_map(SEMI, spec, PhasePoint(r[i], phi[i]))
        if rec.truncated or rec.censored:
            continue
        assert rec.R == rec.flat_bounces + 1
        if rec.flat_bounces >= 1:
            assert rec.cell.kind == ind.IH_ESCAPE
            assert rec.cell.n == rec.flat_bounces


def test_scalar_and_batch_classification_agree():
    rng = np.random.default_rng(9)
    for table in [STADIUM, SEMI, FLOWER, BELT]:
        spec = ind.SubsetSpec.for_table(table)
        pt = ker.PackedTable(table)
        r, phi, prev, _, _ = ker.sample_m_batch(pt, spec.rule, rng, 300)
        exc = ker.run_excursions(pt, spec.rule, r, phi, r_max=100_000)
        kinds, ns = ind.classify_batch(table, spec, exc)
        for i in range(60):
            if exc.truncated[i] or exc.censored[i]:
                continue
            rec = ind.return_map(table, spec, PhasePoint(r[i], phi[i]))
            if rec.truncated or rec.censored:
                continue
            assert rec.R == exc.R[i], (table.family, i)
            assert rec.flat_bounces == exc.flat_bounces[i]
            assert rec.cell.kind == ind.kind_name(kinds[i])
            assert rec.cell.n in (ns[i], 0)


def test_classify_cell_from_events():
    spec = ind.SubsetSpec.for_table(STADIUM)
    left = STADIUM.components[3]
    bp = STADIUM.locate(left.r_offset + 0.1)
    nx, ny = bp.normal
    tx, ty = bp.tangent
    d = (0.03, -1.0)
    h = math.hypot(*d)
    d = (d[0] / h, d[1] / h)
    phi = math.atan2(d[0] * tx + d[1] * ty, d[0] * nx + d[1] * ny)
    x = PhasePoint(left.r_offset + 0.1, phi)
    rec = ind.return_map(STADIUM, spec, x, collect_events=True)
    start_ev = collision_map(STADIUM, PhasePoint(x.r, -x.phi))  # fake a start event
    from billiard_lab.dynamics import CollisionEvent
    start = CollisionEvent(x, bp.position, 0.0, bp.component_id, False, False)
    label = ind.classify_cell(STADIUM, spec, [start] + rec.events)
    assert label.kind == rec.cell.kind
    assert label.n == rec.cell.n


def test_induced_det_identity():
    # |det DF| over an excursion telescopes to cos(phi_start)/cos(phi_end)
    rng = np.random.default_rng(21)
    for table in [STADIUM, FLOWER]:
        spec = ind.SubsetSpec.for_table(table)
        pt = ker.PackedTable(table)
        r, phi, prev, _, _ = ker.sample_m_batch(pt, spec.rule, rng, 100)
        done = 0
        for i in range(100):
            if done >= 25:
                break
            try:
                M, rec = ind.induced_tangent_map(table, spec, x=PhasePoint(r[i], phi[i]))
            except Exception:
                continue
            det = abs(np.linalg.det(M))
            expect = math.cos(rec.start.phi) / math.cos(rec.end.phi)
            assert det == pytest.approx(expect, rel=1e-6)
            done += 1
        assert done >= 25


def test_induced_expansion_matches_front_product():
    # matrix-product p-expansion along the cone-edge direction equals the
    # front-propagated product computed by the batch engine
    rng = np.random.default_rng(23)
    table = STADIUM
    spec = ind.SubsetSpec.for_table(table)
    pt = ker.PackedTable(table)
    r, phi, prev, _, _ = ker.sample_m_batch(pt, spec.rule, rng, 200)
    exc = ker.run_excursions(pt, spec.rule, r, phi, r_max=100_000, with_fronts=True)
    checked = 0
    for i in range(200):
        if checked >= 30 or exc.truncated[i] or exc.censored[i]:
            continue
        x = PhasePoint(r[i], phi[i])
        K = table.locate(x.r).curvature
        c0 = math.cos(x.phi)
        B0 = 2.0 * K / c0
        v = (1.0, B0 * c0 - K)   # slope consistent with the seeded front
        try:
            M, rec = ind.induced_tangent_map(table, spec, x=x)
        except Exception:
            continue
        lam_matrix = ind.p_expansion_of_matrix(M, x.phi, rec.end.phi, v)
        lam_front = math.exp(exc.log_lambda_p[i])
        assert lam_matrix == pytest.approx(lam_front, rel=1e-6), i
        checked += 1
    assert checked >= 30


def test_kac_consistency_flower():
    rng = np.random.default_rng(31)
    spec = ind.SubsetSpec.for_table(FLOWER)
    pt = ker.PackedTable(FLOWER)
    n = 30_000
    r, phi, prev, found, drawn = ker.sample_m_batch(pt, spec.rule, rng, n)
    mu_m = found / drawn
    exc = ker.run_excursions(pt, spec.rule, r, phi, r_max=1_000_000)
    good = ~exc.truncated & ~exc.censored
    meanR = exc.R[good].mean()
    se = exc.R[good].std() / math.sqrt(good.sum())
    assert abs(meanR - 1.0 / mu_m) < 3 * se + 0.02 * meanR

"""Vectorized stepping kernel used by the ensemble estimators.

Mirrors the scalar collision map formula-for-formula on a packed array
representation of the table, processing whole ensembles of phase points per
numpy call.  Consistency with the scalar map is enforced by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import EPS_CORNER, EPS_GRAZE, EPS_MIN
from .geometry import Arc, Segment

CLASS_FLAT, CLASS_DISPERSING, CLASS_FOCUSING = 0, 1, 2
_CLASS_CODE = {"flat": CLASS_FLAT, "dispersing": CLASS_DISPERSING, "focusing": CLASS_FOCUSING}


class PackedTable:
    """Flat numpy views of a Table's components for vectorized ray tracing."""

    def __init__(self, table):
        self.table = table
        self.perimeter = table.perimeter
        comps = table.components
        n = len(comps)
        self.comp_roff = np.array([c.r_offset for c in comps] + [table.perimeter])
        self.comp_len = np.array([c.length for c in comps])
        self.comp_K = np.array([c.curvature for c in comps])
        self.comp_class = np.array([_CLASS_CODE[c.curvature_class] for c in comps],
                                   dtype=np.int8)
        segs = [c for c in comps if isinstance(c.shape, Segment)]
        arcs = [c for c in comps if isinstance(c.shape, Arc)]
        self.seg_comp = np.array([c.id for c in segs], dtype=np.int32)
        self.seg_p0 = np.array([c.shape.p0 for c in segs]).reshape(-1, 2)
        self.seg_dir = np.array([c.shape.direction for c in segs]).reshape(-1, 2)
        self.seg_len = np.array([c.length for c in segs])
        self.arc_comp = np.array([c.id for c in arcs], dtype=np.int32)
        self.arc_c = np.array([c.shape.center for c in arcs]).reshape(-1, 2)
        self.arc_rho = np.array([c.shape.radius for c in arcs])
        self.arc_th0 = np.array([c.shape.theta0 for c in arcs])
        self.arc_sgn = np.array([math.copysign(1.0, c.shape.dtheta) for c in arcs])
        self.arc_span = np.array([abs(c.shape.dtheta) for c in arcs])
        self.arc_closed = np.array([c.shape.closed for c in arcs], dtype=bool)
        # per-component lookup into the segment/arc tables
        self.is_arc = np.zeros(n, dtype=bool)
        self.sub_idx = np.zeros(n, dtype=np.int32)
        for j, c in enumerate(segs):
            self.sub_idx[c.id] = j
        for j, c in enumerate(arcs):
            self.is_arc[c.id] = True
            self.sub_idx[c.id] = j


def locate_batch(pt, r):
    """Component index, local arc length, position, tangent and normal at r."""
    r = np.mod(r, pt.perimeter)
    comp = np.searchsorted(pt.comp_roff, r, side="right").astype(np.int32) - 1
    np.clip(comp, 0, len(pt.comp_len) - 1, out=comp)
    s = np.minimum(r - pt.comp_roff[comp], pt.comp_len[comp])
    px = np.empty_like(r)
    py = np.empty_like(r)
    tx = np.empty_like(r)
    ty = np.empty_like(r)
    arc_mask = pt.is_arc[comp]
    if arc_mask.any():
        j = pt.sub_idx[comp[arc_mask]]
        sa = s[arc_mask]
        th = pt.arc_th0[j] + pt.arc_sgn[j] * sa / pt.arc_rho[j]
        ct, st = np.cos(th), np.sin(th)
        px[arc_mask] = pt.arc_c[j, 0] + pt.arc_rho[j] * ct
        py[arc_mask] = pt.arc_c[j, 1] + pt.arc_rho[j] * st
        tx[arc_mask] = -pt.arc_sgn[j] * st
        ty[arc_mask] = pt.arc_sgn[j] * ct
    seg_mask = ~arc_mask
    if seg_mask.any():
        j = pt.sub_idx[comp[seg_mask]]
        ss = s[seg_mask]
        px[seg_mask] = pt.seg_p0[j, 0] + ss * pt.seg_dir[j, 0]
        py[seg_mask] = pt.seg_p0[j, 1] + ss * pt.seg_dir[j, 1]
        tx[seg_mask] = pt.seg_dir[j, 0]
        ty[seg_mask] = pt.seg_dir[j, 1]
    nx, ny = -ty, tx
    return comp, s, px, py, tx, ty, nx, ny


@dataclass
class StepResult:
    r: np.ndarray
    phi: np.ndarray
    tau: np.ndarray
    comp: np.ndarray
    corner: np.ndarray
    grazing: np.ndarray
    ok: np.ndarray


def step_batch(pt, r, phi, comp0=None):
    """One collision-map step for arrays of phase points."""
    n = len(r)
    if comp0 is None:
        comp0, _, px, py, tx, ty, nx, ny = locate_batch(pt, r)
    else:
        _, _, px, py, tx, ty, nx, ny = locate_batch(pt, r)
    c, s = np.cos(phi), np.sin(phi)
    vx = c * nx + s * tx
    vy = c * ny + s * ty

    best_t = np.full(n, np.inf)
    best_comp = np.full(n, -1, dtype=np.int32)
    best_s = np.zeros(n)

    def consider(t, comp_id, s_local, valid):
        nonlocal best_t, best_comp, best_s
        upd = valid & (t < best_t)
        if upd.any():
            best_t = np.where(upd, t, best_t)
            best_comp = np.where(upd, comp_id, best_comp)
            best_s = np.where(upd, s_local, best_s)

    # segments
    for j in range(len(pt.seg_comp)):
        dx, dy = pt.seg_dir[j]
        denom = vx * dy - vy * dx
        rx = pt.seg_p0[j, 0] - px
        ry = pt.seg_p0[j, 1] - py
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rx * dy - ry * dx) / denom
            sl = (rx * vy - ry * vx) / denom
        valid = ((denom != 0.0) & (t > EPS_MIN)
                 & (sl >= -EPS_CORNER) & (sl <= pt.seg_len[j] + EPS_CORNER)
                 & (comp0 != pt.seg_comp[j]))
        consider(t, pt.seg_comp[j], np.clip(sl, 0.0, pt.seg_len[j]), valid)

    # arcs
    for j in range(len(pt.arc_comp)):
        cx, cy = pt.arc_c[j]
        rho = pt.arc_rho[j]
        ex, ey = px - cx, py - cy
        b = ex * vx + ey * vy
        c0 = ex * ex + ey * ey - rho * rho
        departing = comp0 == pt.arc_comp[j]
        disc = b * b - c0
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(np.maximum(disc, 0.0))
            t_big = np.where(b >= 0.0, -b - root, -b + root)
            t_oth = np.where(t_big != 0.0, c0 / t_big, np.inf)
        tol = EPS_CORNER / rho
        for t in (np.where(departing, -2.0 * b, t_big),
                  np.where(departing, np.inf, t_oth)):
            usable = np.isfinite(t) & (t > EPS_MIN) & (departing | (disc > 0.0))
            hx = px + t * vx - cx
            hy = py + t * vy - cy
            with np.errstate(invalid="ignore"):
                theta = np.arctan2(hy, hx)
            u = np.mod(pt.arc_sgn[j] * (theta - pt.arc_th0[j]), 2.0 * math.pi)
            if pt.arc_closed[j]:
                in_span = usable
            else:
                in_span = usable & ((u <= pt.arc_span[j] + tol) | (u >= 2.0 * math.pi - tol))
            sl = rho * np.minimum(np.where(u >= 2.0 * math.pi - tol, 0.0, u),
                                  pt.arc_span[j])
            consider(t, pt.arc_comp[j], sl, in_span)

    ok = best_comp >= 0
    r1 = np.where(ok, pt.comp_roff[np.maximum(best_comp, 0)] + best_s, 0.0)
    comp1, s1, qx, qy, t1x, t1y, n1x, n1y = locate_batch(pt, r1)
    vn = vx * n1x + vy * n1y
    wx = vx - 2.0 * vn * n1x
    wy = vy - 2.0 * vn * n1y
    phi1 = np.arctan2(wx * t1x + wy * t1y, wx * n1x + wy * n1y)
    clen = pt.comp_len[comp1]
    closed = np.zeros(n, dtype=bool)
    am = pt.is_arc[comp1]
    if am.any():
        closed[am] = pt.arc_closed[pt.sub_idx[comp1[am]]]
    corner = ok & ~closed & ((s1 < EPS_CORNER) | (clen - s1 < EPS_CORNER))
    grazing = ok & (np.cos(phi1) < EPS_GRAZE)
    return StepResult(r1, phi1, best_t, comp1, corner, grazing, ok)


def sample_mu_batch(pt, rng, n):
    r = rng.random(n) * pt.perimeter
    phi = np.arcsin(2.0 * rng.random(n) - 1.0)
    return r, phi


# ---------------------------------------------------------------------------
# membership rules (vectorized)

RULE_SCATTERER = "scatterer-collisions"
RULE_FIRST_ARC = "first-arc-collision"
RULE_ARCS_ONLY = "first-arc-collision-arcs-only"


def in_m_batch(pt, rule, comp, prev_comp):
    cls = pt.comp_class[comp]
    if rule == RULE_SCATTERER:
        return cls == CLASS_DISPERSING
    first_arc = (cls == CLASS_FOCUSING) & (comp != prev_comp)
    if rule == RULE_ARCS_ONLY:
        return first_arc
    if rule == RULE_FIRST_ARC:
        return (cls == CLASS_DISPERSING) | first_arc
    raise ValueError(f"unknown rule {rule!r}")


def sample_m_batch(pt, rule, rng, n_target, max_draw_factor=2000):
    """Rejection-sample mu restricted to M.

    Returns (r, phi, prev_comp, n_member, n_drawn): n_member of the n_drawn
    mu-samples were in M, so n_member/n_drawn estimates mu(M).  prev_comp is
    the component of the previous collision, obtained by one reverse step.
    """
    out_r, out_phi, out_prev = [], [], []
    drawn = kept = 0
    chunk = min(max(4 * n_target, 10_000), 500_000)
    while kept < n_target and drawn < max_draw_factor * n_target + chunk:
        r, phi = sample_mu_batch(pt, rng, chunk)
        drawn += chunk
        comp, _, _, _, _, _, _, _ = locate_batch(pt, r)
        if rule == RULE_SCATTERER:
            prev = np.full(chunk, -1, dtype=np.int32)
            member = in_m_batch(pt, rule, comp, prev)
        else:
            # F^{-1} via time reversal to find the previous component
            back = step_batch(pt, r, -phi)
            prev = back.comp
            member = back.ok & ~back.corner & in_m_batch(pt, rule, comp, prev)
        out_r.append(r[member])
        out_phi.append(phi[member])
        out_prev.append(prev[member])
        kept += int(member.sum())
    r = np.concatenate(out_r)[:n_target]
    phi = np.concatenate(out_phi)[:n_target]
    prev = np.concatenate(out_prev)[:n_target]
    if len(r) < n_target:
        raise RuntimeError(f"mu|M rejection sampling starved: kept {len(r)} of {n_target}")
    return r, phi, prev, kept, drawn


# ---------------------------------------------------------------------------
# excursion ensembles


@dataclass
class ExcursionBatch:
    """Per-start-point excursion summaries of the induced first-return map."""

    start_r: np.ndarray
    start_phi: np.ndarray
    start_comp: np.ndarray
    R: np.ndarray               # F-steps until first return (R_max if censored)
    censored: np.ndarray
    truncated: np.ndarray       # corner hit mid-excursion
    end_r: np.ndarray
    end_phi: np.ndarray
    end_comp: np.ndarray
    flat_bounces: np.ndarray
    run_len: np.ndarray         # initial same-component run length (incl. start)
    run_absphi: np.ndarray      # sum of |phi| over that run
    first_flat: np.ndarray      # first step lands on a flat component
    first_dir_octant: np.ndarray
    log_lambda_p: np.ndarray | None = None   # log p-metric expansion (front-propagated)
    end_B: np.ndarray | None = None          # post-collision front curvature at the end
    start_B: np.ndarray | None = None


def run_excursions(pt, rule, r0, phi0, r_max, with_fronts=False, front_gamma=None,
                   front_B0=None):
    """Run the induced map's excursions for an ensemble of starting points.

    Starting points must lie in M.  The unstable front seeded at the start is
    the image of an incoming parallel beam, B = 2K/cos(phi) (the invariant
    cone edge); front_gamma scales the seed as B = (1 + gamma) K / cos(phi),
    and front_B0 overrides it with explicit per-point front curvatures.
    """
    n = len(r0)
    comp0, _, _, _, _, _, _, _ = locate_batch(pt, r0)

    R = np.zeros(n, dtype=np.int64)
    censored = np.zeros(n, dtype=bool)
    truncated = np.zeros(n, dtype=bool)
    end_r = np.array(r0, dtype=float, copy=True)
    end_phi = np.array(phi0, dtype=float, copy=True)
    end_comp = comp0.copy()
    flat = np.zeros(n, dtype=np.int64)
    run_len = np.ones(n, dtype=np.int64)
    run_absphi = np.abs(np.asarray(phi0), dtype=float)
    first_flat = np.zeros(n, dtype=bool)
    octant = np.zeros(n, dtype=np.int8)

    if with_fronts:
        if front_B0 is not None:
            B = np.array(front_B0, dtype=float, copy=True)
        else:
            cos0 = np.cos(phi0)
            K0 = pt.comp_K[comp0]
            gamma = 1.0 if front_gamma is None else front_gamma
            B = (1.0 + gamma) * K0 / cos0
        start_B = B.copy()
        logL = np.zeros(n)
        end_B = B.copy()
    else:
        start_B = end_B = logL = None

    idx = np.arange(n)
    r, phi, comp = np.array(r0, dtype=float), np.array(phi0, dtype=float), comp0.copy()
    run_open = np.ones(n, dtype=bool)
    step_no = 0
    while len(idx):
        step_no += 1
        res = step_batch(pt, r, phi, comp)
        bad = ~res.ok
        corner = res.corner | bad
        if with_fronts:
            fac = 1.0 + res.tau * B
            with np.errstate(divide="ignore", invalid="ignore"):
                logL[idx] += np.log(np.maximum(np.abs(fac), 1e-300))
                B_pre = B / np.where(fac != 0.0, fac, np.inf)
            B = B_pre + 2.0 * pt.comp_K[res.comp] / np.cos(res.phi)

        # bookkeeping for classification
        landed_flat = pt.comp_class[res.comp] == CLASS_FLAT
        if step_no == 1:
            first_flat[idx] = landed_flat
            # octant of the first flight direction (for IH anchor bookkeeping)
            _, _, px, py, tx, ty, nx, ny = locate_batch(pt, r)
            vx = np.cos(phi) * nx + np.sin(phi) * tx
            vy = np.cos(phi) * ny + np.sin(phi) * ty
            octant[idx] = (np.floor((np.arctan2(vy, vx) % (2 * math.pi))
                                    / (math.pi / 4))).astype(np.int8)
        flat[idx] += landed_flat
        same = res.comp == comp
        keep_open = run_open[idx] & same
        run_len[idx[keep_open]] += 1
        run_absphi[idx[keep_open]] += np.abs(res.phi[keep_open])
        run_open[idx] &= same

        member = in_m_batch(pt, rule, res.comp, comp)
        finish = member | corner
        censor = (~finish) & (step_no >= r_max)

        done = finish | censor
        if done.any():
            di = idx[done]
            R[di] = step_no
            truncated[di] = corner[done]
            censored[di] = censor[done]
            end_r[di] = res.r[done]
            end_phi[di] = res.phi[done]
            end_comp[di] = res.comp[done]
            if with_fronts:
                end_B[di] = B[done]
        cont = ~done
        idx = idx[cont]
        r, phi, comp = res.r[cont], res.phi[cont], res.comp[cont]
        if with_fronts:
            B = B[cont]
    return ExcursionBatch(np.asarray(r0), np.asarray(phi0), comp0, R, censored,
                          truncated, end_r, end_phi, end_comp, flat, run_len,
                          run_absphi, first_flat, octant,
                          logL, end_B, start_B)

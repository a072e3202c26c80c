"""Hyperbolicity diagnostics: homogeneity strips, one-step expansion sums
over sampled unstable curves, expansion-law trends, cell-range probes.

Expansion metrics.  Along excursions the p-metric (dp = cos(phi) dr)
expansion is the product of per-flight factors |1 + tau B| with B the running
wavefront curvature; it is the metric in which the arc trap laws (n^2 for
sliding, 4n/8n for the stadium flat runs) are stated.  The homogeneity-strip
law Lambda_k >= C k^2 concerns the norm equivalent to the Euclidean (r, phi)
norm, where the factor 1/cos(phi') of the landing collision is what grows
like k^2; the strip trend therefore reports Euclidean expansions.

Unstable seed direction.  Curves and fronts are seeded on the invariant-cone
edge that is the image of an incoming parallel beam: front curvature
B = 2K/cos(phi), i.e. slope dphi/dr = K.  On focusing arcs this front
refocuses a quarter of the way to the next same-arc collision, comfortably
inside the defocusing cone; it reproduces the trap-law constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel as ker
from .dynamics import PhasePoint, TangentVector
from .geometry import Arc, DISPERSING, FOCUSING
from .induced import (DIAMETRIC, FLAT_RUN_DIRECT, FLAT_RUN_INDIRECT, REGULAR,
                      SLIDING, SubsetSpec, classify_batch, kind_code, kind_name)
from .rng import substream
from .stats import fit_log_power, run_excursion_ensemble

DEFAULT_K0 = 10


# ---------------------------------------------------------------------------
# homogeneity strips


def strip_index(phi, k0=DEFAULT_K0):
    """Index k of the homogeneity strip containing phi (signed; 0 = central).

    H_k = {pi/2 - k^-2 < phi < pi/2 - (k+1)^-2} for k >= k0, mirrored for
    negative phi, with the central strip H_0 covering |phi| < pi/2 - k0^-2.
    """
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    scalar = np.isscalar(phi)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    delta = np.maximum(math.pi / 2 - np.abs(phi), 0.0)
    with np.errstate(divide="ignore"):
        k = np.where(delta > 0, np.ceil(np.sqrt(1.0 / np.maximum(delta, 1e-300))) - 1,
                     np.inf)
    k = np.where(k < k0, 0, k)
    k = np.where(np.isinf(k), 0, k)   # exactly grazing: no finite strip
    out = (np.sign(phi) * k).astype(np.int64)
    return int(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# unstable curves


@dataclass
class UnstableCurveSample:
    base: PhasePoint
    direction: TangentVector
    half_length: float
    r: np.ndarray
    phi: np.ndarray

    @property
    def n_points(self):
        return len(self.r)


def make_curve(table, base, half_length, n_points=10_000, slope=None):
    """Straight curve through base in (r, phi), along the unstable-cone edge
    slope dphi/dr = K by default."""
    if slope is None:
        slope = table.locate(base.r).curvature
    norm = math.hypot(1.0, slope)
    t = np.linspace(-half_length, half_length, n_points)
    r = base.r + t / norm
    phi = base.phi + t * slope / norm
    keep = np.abs(phi) < math.pi / 2 - 1e-12
    return UnstableCurveSample(base, TangentVector(1.0, slope), half_length,
                               r[keep], phi[keep])


@dataclass
class ExpansionComponent:
    kind: str
    n: int
    end_comp: int
    R: int
    lambda_min: float
    lambda_p5: float
    n_points: int


@dataclass
class ExpansionSumReport:
    components: list
    sum_inv: float
    truncation_index: int
    divergence: bool
    n_points: int
    n_valid: int
    under_resolved: bool = False
    refinement_sums: tuple = ()

    @staticmethod
    def from_lambdas(lambdas):
        """Synthetic report from given per-component minimal expansions."""
        comps = [ExpansionComponent(REGULAR, 0, -1, 1, lam, lam, 1) for lam in lambdas]
        s = float(sum(1.0 / lam for lam in lambdas))
        return ExpansionSumReport(comps, s, 0, False, len(lambdas), len(lambdas))


def _curve_excursions(pt, spec, r, phi, r_max):
    """Run front-seeded excursions for ordered curve points; invalid points
    (outside M, corner-truncated, censored) come back masked out."""
    comp, _, _, _, _, _, _, _ = ker.locate_batch(pt, r)
    if spec.rule == ker.RULE_SCATTERER:
        member = ker.in_m_batch(pt, spec.rule, comp, np.full(len(r), -1, np.int32))
    else:
        back = ker.step_batch(pt, r, -phi)
        member = back.ok & ~back.corner & ker.in_m_batch(pt, spec.rule, comp, back.comp)
    K = pt.comp_K[comp]
    B0 = 2.0 * K / np.cos(phi)
    exc = ker.run_excursions(pt, spec.rule, r, phi, r_max, with_fronts=True,
                             front_B0=B0)
    valid = member & ~exc.truncated & ~exc.censored
    return exc, valid


def _segment_components(table, spec, exc, valid):
    """Split ordered curve samples into continuity components of the induced
    map by detecting jumps in (R, end component, cell label)."""
    kinds, ns = classify_batch(table, spec, exc)
    n_pts = len(valid)
    comps = []
    i = 0
    while i < n_pts:
        if not valid[i]:
            i += 1
            continue
        j = i + 1
        while j < n_pts and valid[j] and exc.R[j] == exc.R[i] \
                and exc.end_comp[j] == exc.end_comp[i] \
                and kinds[j] == kinds[i] and ns[j] == ns[i]:
            j += 1
        lams = np.exp(exc.log_lambda_p[i:j][valid[i:j]])
        comps.append(ExpansionComponent(kind_name(kinds[i]), int(ns[i]),
                                        int(exc.end_comp[i]), int(exc.R[i]),
                                        float(lams.min()),
                                        float(np.percentile(lams, 5)), j - i))
        i = j
    return comps


def expansion_sum(table, spec, curve, resolution=10_000, r_max=100_000,
                  check_refinement=True):
    """One-step expansion sum over the continuity components the curve is cut
    into by the induced map's singularities: sum of 1/Lambda_i with Lambda_i
    the minimal sampled p-metric expansion on component i.

    The divergence flag is raised when refining the sampling keeps adding
    components whose contributions do not taper (partial sums still growing
    at the truncation index).
    """
    pt = ker.PackedTable(table)
    sums = []
    all_comps = None
    truncation = 0
    n_valid = n_pts = 0
    resolutions = [resolution // 4, resolution // 2, resolution] if check_refinement \
        else [resolution]
    for res in resolutions:
        cv = make_curve(table, curve.base, curve.half_length, res,
                        slope=curve.direction.dphi / curve.direction.dr)
        exc, valid = _curve_excursions(pt, spec, cv.r, cv.phi, r_max)
        comps = _segment_components(table, spec, exc, valid)
        if not comps:
            raise ValueError("curve entirely singular: no component survives")
        sums.append(sum(1.0 / c.lambda_min for c in comps))
        all_comps = comps
        truncation = max((c.n for c in comps), default=0)
        n_valid = int(valid.sum())
        n_pts = len(cv.r)
    divergence = False
    under_resolved = False
    if len(sums) == 3:
        g1 = sums[1] - sums[0]
        g2 = sums[2] - sums[1]
        divergence = g2 > 0.04 and g2 > 0.5 * max(g1, 1e-9)
        under_resolved = (not divergence) and abs(g2) > 0.05 * max(sums[2], 1e-9)
    return ExpansionSumReport(all_comps, sums[-1], truncation, divergence,
                              n_pts, n_valid, under_resolved, tuple(sums))


# ---------------------------------------------------------------------------
# accumulation anchors and curve seeding


def accumulation_anchors(table):
    """Phase points where the family's trap cells accumulate, with the signs
    of the (r, phi) offsets that lead into the cell stack.

    Stadium flat-run cells pile up just inside each arc end at phi -> 0
    (phi > 0 at the arc start junction, phi < 0 at the end).  Drive-belt and
    large-arc diametric cells pile up at the antipodes of the big-arc
    endpoints.  Flower sliding cells pile up at the arc ends near grazing.
    """
    anchors = []
    if table.family == "straight-stadium":
        for c in table.components:
            if c.curvature_class == FOCUSING:
                anchors.append({"point": PhasePoint(c.r_offset, 0.0),
                                "dr": 1.0, "dphi": 1.0})
                anchors.append({"point": PhasePoint(c.r_offset + c.length, 0.0),
                                "dr": -1.0, "dphi": -1.0})
    elif table.family in ("drive-belt", "flower"):
        for c in table.components:
            if c.curvature_class == FOCUSING and isinstance(c.shape, Arc) \
                    and abs(c.shape.dtheta) > math.pi:
                half_turn = math.pi * c.shape.radius
                anchors.append({"point": PhasePoint(c.r_offset + half_turn, 0.0),
                                "dr": 0.0, "dphi": -1.0})
                anchors.append({"point": PhasePoint(c.r_offset + c.length - half_turn,
                                                    0.0),
                                "dr": 0.0, "dphi": 1.0})
        if not anchors:
            for c in table.components:
                if c.curvature_class == FOCUSING:
                    anchors.append({"point": PhasePoint(c.r_offset, math.pi / 2),
                                    "dr": 1.0, "dphi": -1.0})
                    anchors.append({"point": PhasePoint(c.r_offset + c.length,
                                                        -math.pi / 2),
                                    "dr": -1.0, "dphi": 1.0})
    return anchors


def seeded_curves(table, n_curves, seed, half_length_range=(1e-4, 3e-2)):
    """Random short unstable curves near the accumulation anchors.

    Bases are offset into the cell stack by amounts comparable to the curve
    half-length, so curves at all depths cross several cells.
    """
    anchors = accumulation_anchors(table)
    if not anchors:
        raise ValueError(f"no accumulation anchors for family {table.family}")
    rng = substream(seed, 0)
    curves = []
    lo, hi = half_length_range
    for i in range(n_curves):
        a = anchors[rng.integers(len(anchors))]
        delta = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        if a["dr"] == 0.0:
            off_r = delta * rng.uniform(-3.0, 3.0)
        else:
            off_r = a["dr"] * delta * rng.uniform(0.3, 3.0)
        if i % 4 == 0:
            # straddle the accumulation point: such curves cross the deepest
            # resolvable cells, where a divergent stack shows itself
            off_phi = 0.0
            off_r *= rng.uniform(0.0, 0.5)
        else:
            off_phi = a["dphi"] * delta * rng.uniform(0.5, 3.0)
        base = PhasePoint(a["point"].r + off_r, a["point"].phi + off_phi)
        curves.append(make_curve(table, base, delta))
    return [c for c in curves if c.n_points > 10]


def max_expansion_sum(table, spec, n_curves=1000, seed=0, resolution=4000,
                      r_max=100_000, check_refinement=False):
    """Maximum sampled expansion sum over seeded curves (an estimate of the
    one-step supremum, not a certified bound)."""
    best = None
    reports = []
    for cv in seeded_curves(table, n_curves, seed):
        try:
            rep = expansion_sum(table, spec, cv, resolution, r_max,
                                check_refinement=check_refinement)
        except ValueError:
            continue
        reports.append(rep)
        if best is None or rep.sum_inv > best.sum_inv:
            best = rep
    if best is None:
        raise RuntimeError("no usable curves")
    return best, reports


# ---------------------------------------------------------------------------
# expansion trends


def strip_expansion_trend(table, spec=None, samples=1_000_000, seed=0, k0=4,
                          min_count=30, r_max=1_000_000):
    """Per-strip minimum induced-map expansion (Euclidean norm) binned by the
    homogeneity-strip index of the landing point; the trap law predicts
    log-log slope 2."""
    if table.family != "semi-dispersing":
        raise ValueError("strip trend applies to semi-dispersing tables")
    spec = spec or SubsetSpec.for_table(table)
    data = run_excursion_ensemble(table, spec, samples, r_max, seed,
                                  with_fronts=True,
                                  collect=("end_phi", "start_phi", "log_lambda_p",
                                           "end_B", "start_B", "start_comp",
                                           "end_comp"))
    pt = ker.PackedTable(table)
    k = np.abs(strip_index(data["end_phi"], k0))
    cos_s, cos_e = np.cos(data["start_phi"]), np.cos(data["end_phi"])
    m_start = data["start_B"] * cos_s - pt.comp_K[data["start_comp"]]
    m_end = data["end_B"] * cos_e - pt.comp_K[data["end_comp"]]
    # Euclidean expansion = p-expansion * (cos_s/cos_e) * slope-norm ratio
    lam_eu = np.exp(data["log_lambda_p"]) * (cos_s / cos_e) \
        * np.sqrt((1.0 + m_end ** 2) / (1.0 + m_start ** 2))
    ks, mins, p5s, counts = [], [], [], []
    for kk in range(k0, int(k.max()) + 1 if len(k) else k0):
        sel = k == kk
        c = int(sel.sum())
        if c < min_count:
            continue
        ks.append(kk)
        mins.append(float(lam_eu[sel].min()))
        p5s.append(float(np.percentile(lam_eu[sel], 5)))
        counts.append(c)
    if len(ks) < 3:
        raise ValueError(f"insufficient deep-strip samples (bins: {len(ks)})")
    slope, amp, r2 = fit_log_power(np.array(ks, float), np.array(mins))
    return {"k": ks, "lambda_min": mins, "lambda_p5": p5s, "counts": counts,
            "slope": slope, "r2": r2, "k0": k0}


def cell_expansion_trend(table, spec=None, kind=SLIDING, samples=1_000_000,
                         seed=0, min_count=30, n_min=2, r_max=1_000_000):
    """Per-cell-index minimum p-metric expansion of the induced map, binned
    by the cell index n of mu|M-sampled excursions."""
    spec = spec or SubsetSpec.for_table(table)
    data = run_excursion_ensemble(table, spec, samples, r_max, seed,
                                  with_fronts=True, collect=("kind", "n",
                                                             "log_lambda_p"))
    code = kind_code(kind)
    sel0 = data["kind"] == code
    ns_all = data["n"][sel0]
    lam_all = np.exp(np.minimum(data["log_lambda_p"][sel0], 700.0))
    ns, mins, p5s, counts = [], [], [], []
    for n in range(n_min, int(ns_all.max()) + 1 if len(ns_all) else n_min):
        sel = ns_all == n
        c = int(sel.sum())
        if c < min_count:
            continue
        ns.append(n)
        mins.append(float(lam_all[sel].min()))
        p5s.append(float(np.percentile(lam_all[sel], 5)))
        counts.append(c)
    if len(ns) < 3:
        raise ValueError(f"insufficient cell samples for kind {kind!r}")
    slope, amp, r2 = fit_log_power(np.array(ns, float), np.array(mins))
    ratio = [m / n for m, n in zip(mins, ns)]
    return {"n": ns, "lambda_min": mins, "lambda_p5": p5s, "counts": counts,
            "slope": slope, "r2": r2, "min_ratio": ratio, "kind": kind}


# ---------------------------------------------------------------------------
# cell range probe


def cell_range_probe(table, spec=None, n_curves=1000, seed=0, n1_min=20,
                     resolution=4000, r_max=200_000):
    """Distribution of n2/n1 over the trap cells crossed by sampled short
    unstable curves (n1 = smallest index crossed, n2 = largest)."""
    if table.family == "straight-stadium":
        kinds = {kind_code(FLAT_RUN_DIRECT), kind_code(FLAT_RUN_INDIRECT)}
    elif table.family in ("drive-belt", "flower"):
        kinds = {kind_code(DIAMETRIC)}
    else:
        raise ValueError("cell range probe applies to stadium/drive-belt tables")
    spec = spec or SubsetSpec.for_table(table)
    pt = ker.PackedTable(table)
    ratios, pairs = [], []
    for cv in seeded_curves(table, n_curves, seed):
        cvr = make_curve(table, cv.base, cv.half_length, resolution,
                         slope=cv.direction.dphi / cv.direction.dr)
        exc, valid = _curve_excursions(pt, spec, cvr.r, cvr.phi, r_max)
        kind_arr, n_arr = classify_batch(table, spec, exc)
        sel = valid & np.isin(kind_arr, list(kinds)) & (n_arr >= 1)
        if not sel.any():
            continue
        n1, n2 = int(n_arr[sel].min()), int(n_arr[sel].max())
        if n1 >= n1_min:
            ratios.append(n2 / n1)
            pairs.append((n1, n2))
    if not ratios:
        raise RuntimeError("no curves crossed cells with n1 >= n1_min")
    return {"ratios": ratios, "pairs": pairs, "sup": max(ratios),
            "n_curves": len(ratios)}

"""Monte Carlo estimators: correlations, return-time tails, cell measures,
mean free path, and power-law fitting.

Two survival curves are produced by the tail estimator:

  * survival_m     P(R > n) for starting points sampled from mu restricted
                   to M (the paper-quoted tail; exponents 2/3/2 for the
                   semi-dispersing / flower / stadium families);
  * survival_space P(R > n) for points of the full collision space, obtained
                   from the same excursions by length weighting
                   (P = mu(M) * E[max(R - n, 0)]); one power smaller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel as ker
from .dynamics import CornerHitError, PhasePoint, collision_map, sample_mu
from .induced import KINDS, SubsetSpec, classify_batch
from .rng import chunked, substream

DEFAULT_CHUNK = 100_000


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    id: str
    func: object            # CollisionEvent -> float
    bounded: bool = True


def make_observable(obs_id):
    if obs_id == "free-path":
        return Observable(obs_id, lambda ev: ev.free_path, bounded=True)
    if obs_id == "cos-phi":
        return Observable(obs_id, lambda ev: math.cos(ev.point.phi))
    if obs_id == "sin-phi":
        return Observable(obs_id, lambda ev: math.sin(ev.point.phi))
    if obs_id == "position-x":
        return Observable(obs_id, lambda ev: ev.position[0])
    if obs_id.startswith("component:"):
        k = int(obs_id.split(":", 1)[1])
        return Observable(obs_id, lambda ev: 1.0 if ev.component_id == k else 0.0)
    raise ValueError(f"unknown observable {obs_id!r}")


# ---------------------------------------------------------------------------
# correlations


@dataclass
class CorrelationSeries:
    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_samples: int
    map_kind: str            # "full" or "induced"
    f_id: str = ""
    g_id: str = ""
    restarts: int = 0
    winsor_cutoff: float | None = None


def _cross_covariance(a, b, n_max):
    """(1/(N-n)) sum_i a_{i+n} b_i - mean(a) mean(b) for n = 0..n_max, via FFT."""
    n = len(a)
    a0 = a - a.mean()
    b0 = b - b.mean()
    m = 1 << int(np.ceil(np.log2(2 * n)))
    fa = np.fft.rfft(a0, m)
    fb = np.fft.rfft(b0, m)
    corr = np.fft.irfft(fa * np.conj(fb), m)[: n_max + 1]
    counts = n - np.arange(n_max + 1)
    return corr / counts


def estimate_correlation(table, f, g, map_kind="full", n_max=100, budget=1_000_000,
                         seed=0, spec=None, burn_in=1000, n_batches=50,
                         winsorize=None):
    """Time-average correlation estimator over a single long orbit.

    For map_kind="induced" the series is read off at the returns to M of the
    same orbit and lags count induced steps.  Standard errors come from batch
    means over n_batches contiguous batches.
    """
    if isinstance(f, str):
        f = make_observable(f)
    if isinstance(g, str):
        g = make_observable(g)
    if budget < 10_000:
        raise ValueError("budget must be at least 1e4 collisions")
    if map_kind not in ("full", "induced"):
        raise ValueError("map_kind must be 'full' or 'induced'")
    if map_kind == "induced":
        spec = spec or SubsetSpec.for_table(table)

    rng = substream(seed, 0)
    fv = np.empty(budget)
    gv = np.empty(budget)
    member = np.zeros(budget, dtype=bool) if map_kind == "induced" else None
    restarts = 0

    def fresh_start():
        nonlocal restarts
        x = sample_mu(table, rng)
        for _ in range(burn_in):
            try:
                x = collision_map(table, x).point
            except CornerHitError:
                x = sample_mu(table, rng)
        return x

    x = fresh_start()
    prev_comp = table.locate(x.r).component_id
    i = 0
    ffunc, gfunc = f.func, g.func
    while i < budget:
        try:
            ev = collision_map(table, x)
        except CornerHitError:
            restarts += 1
            x = fresh_start()
            prev_comp = table.locate(x.r).component_id
            continue
        fv[i] = ffunc(ev)
        gv[i] = gfunc(ev)
        if member is not None:
            from .induced import _member_step
            cls1 = table.components[ev.component_id].curvature_class
            member[i] = _member_step(spec, cls1, ev.component_id, prev_comp)
        prev_comp = ev.component_id
        x = ev.point
        i += 1

    cutoff = None
    if winsorize or (winsorize is None and not f.bounded):
        cutoff = float(np.quantile(fv, 1 - 1e-6))
        np.clip(fv, None, cutoff, out=fv)
        np.clip(gv, None, cutoff, out=gv)
    if member is not None:
        fv = fv[member]
        gv = gv[member]
    n = len(fv)
    if n <= 4 * n_max:
        raise ValueError(f"series of length {n} too short for n_max={n_max}")
    values = _cross_covariance(fv, gv, n_max)

    batch_len = n // n_batches
    usable = [k for k in range(n_batches) if batch_len > 2 * n_max]
    bvals = np.array([
        _cross_covariance(fv[k * batch_len:(k + 1) * batch_len],
                          gv[k * batch_len:(k + 1) * batch_len], n_max)
        for k in usable
    ])
    stderr = bvals.std(axis=0, ddof=1) / math.sqrt(len(usable))
    return CorrelationSeries(np.arange(n_max + 1), values, stderr, n,
                             map_kind, f.id, g.id, restarts, cutoff)


# ---------------------------------------------------------------------------
# survival curves and tails


@dataclass
class SurvivalCurve:
    n: np.ndarray            # lag grid (integers, increasing)
    survival: np.ndarray     # P(R > n), non-increasing
    at_risk: np.ndarray      # number of samples with R > n
    n_samples: int
    censored: int = 0
    r_max: int | None = None

    @staticmethod
    def from_function(fn, n, nominal_samples=10 ** 9):
        n = np.asarray(n, dtype=np.int64)
        s = np.array([fn(int(v)) for v in n], dtype=float)
        at_risk = np.maximum((s * nominal_samples).astype(np.int64), 0)
        return SurvivalCurve(n, s, at_risk, nominal_samples)


@dataclass
class TailEstimate:
    survival_m: SurvivalCurve
    survival_space: SurvivalCurve
    mu_M: float
    mean_R: float
    mean_R_se: float
    n_samples: int
    truncated: int
    censored: int


def run_excursion_ensemble(table, spec, samples, r_max=1_000_000, seed=0,
                           chunk_size=DEFAULT_CHUNK, with_fronts=False,
                           collect=("R",)):
    """Chunk-deterministic excursion ensemble.

    Returns a dict with the R-histogram plus any requested per-sample arrays
    ("kind", "n", "end_phi", "log_lambda_p", ...) concatenated in chunk order.
    """
    pt = ker.PackedTable(table)
    hist = np.zeros(r_max + 1, dtype=np.int64)
    kept = drawn = n_run = 0
    truncated = censored = 0
    arrays = {k: [] for k in collect if k != "R"}
    for ci, csize in enumerate(chunked(samples, chunk_size)):
        rng = substream(seed, ci)
        r, phi, prev, n_member, n_drawn = ker.sample_m_batch(pt, spec.rule, rng, csize)
        drawn += n_drawn
        kept += n_member
        n_run += csize
        exc = ker.run_excursions(pt, spec.rule, r, phi, r_max,
                                 with_fronts=with_fronts)
        ok = ~exc.truncated
        truncated += int(exc.truncated.sum())
        censored += int((exc.censored & ok).sum())
        hist += np.bincount(np.minimum(exc.R[ok], r_max), minlength=r_max + 1)
        if arrays:
            kinds, ns = classify_batch(table, spec, exc)
            pool = {
                "kind": kinds[ok], "n": ns[ok], "end_phi": exc.end_phi[ok],
                "start_phi": exc.start_phi[ok], "start_comp": exc.start_comp[ok],
                "end_comp": exc.end_comp[ok],
                "R_arr": exc.R[ok], "censored_arr": exc.censored[ok],
            }
            if with_fronts:
                pool["log_lambda_p"] = exc.log_lambda_p[ok]
                pool["end_B"] = exc.end_B[ok]
                pool["start_B"] = exc.start_B[ok]
            for k in arrays:
                arrays[k].append(pool[k])
    out = {k: np.concatenate(v) for k, v in arrays.items()}
    out["hist"] = hist
    out["mu_M"] = kept / drawn
    out["n_samples"] = n_run
    out["truncated"] = truncated
    out["censored"] = censored
    return out


def estimate_tail(table, spec, samples=1_000_000, r_max=1_000_000, seed=0,
                  chunk_size=DEFAULT_CHUNK):
    """Survival curves of the return time R(x; F, M) with right-censoring."""
    if isinstance(spec, str):
        spec = SubsetSpec.for_table(table, rule=spec)
    data = run_excursion_ensemble(table, spec, samples, r_max, seed, chunk_size)
    hist = data["hist"]
    n_ok = int(hist.sum())
    # survival over mu|M starts: at_risk(n) = #{R > n}
    at_risk = n_ok - np.cumsum(hist)
    n_hi = int(np.nonzero(hist)[0].max()) if n_ok else 1
    grid = np.arange(0, n_hi)
    curve_m = SurvivalCurve(grid, at_risk[grid] / n_ok, at_risk[grid], n_ok,
                            data["censored"], r_max)
    # space version: P_mu(R > n) = mu(M) * E[max(R - n, 0)]
    tail_integral = np.concatenate([np.cumsum(at_risk[::-1])[::-1], [0]])
    surv_space = data["mu_M"] * tail_integral[grid] / n_ok
    curve_space = SurvivalCurve(grid, surv_space, at_risk[grid], n_ok,
                                data["censored"], r_max)
    R_mean_grid = np.arange(len(hist), dtype=float)
    mean_R = float((hist * R_mean_grid).sum() / n_ok)
    var_R = float((hist * (R_mean_grid - mean_R) ** 2).sum() / max(n_ok - 1, 1))
    return TailEstimate(curve_m, curve_space, data["mu_M"], mean_R,
                        math.sqrt(var_R / n_ok), n_ok,
                        data["truncated"], data["censored"])


# ---------------------------------------------------------------------------
# power-law fitting


@dataclass(frozen=True)
class WindowPolicy:
    n_min: int = 10
    n_max: int | None = None
    min_count: int = 100
    max_points: int = 100
    min_bins: int = 5


@dataclass
class PowerLawFit:
    exponent: float
    amplitude: float
    n_lo: int
    n_hi: int
    r2: float
    stderr: float
    n_bins: int


class WindowTooSmallError(ValueError):
    pass


def fit_power_law(curve, policy=WindowPolicy()):
    """Least squares of log S on log n over the auto-selected window (largest
    window with per-bin counts >= min_count and n >= n_min); censored bins are
    excluded.  Bins are log-spaced and weighted equally, so the goodness r2
    reflects curvature across the whole window rather than just the
    best-sampled early bins."""
    n = curve.n
    s = curve.survival
    at_risk = curve.at_risk
    mask = (n >= policy.n_min) & (at_risk >= policy.min_count) & (s > 0)
    if policy.n_max is not None:
        mask &= n <= policy.n_max
    if curve.r_max is not None:
        mask &= n < curve.r_max
    idx = np.nonzero(mask)[0]
    if len(idx) < policy.min_bins:
        raise WindowTooSmallError(
            f"only {len(idx)} usable bins (need {policy.min_bins})")
    if len(idx) > policy.max_points:
        # deterministic log-spaced subsample
        pick = np.unique(np.geomspace(1, len(idx), policy.max_points).astype(int)) - 1
        idx = idx[pick]
    x = np.log(n[idx].astype(float))
    y = np.log(s[idx])
    w = np.ones_like(x)
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    sxy = (w * (x - xm) * (y - ym)).sum()
    slope = sxy / sxx
    inter = ym - slope * xm
    resid = y - (inter + slope * x)
    sst = (w * (y - ym) ** 2).sum()
    ssr = (w * resid ** 2).sum()
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    dof = max(len(idx) - 2, 1)
    se = math.sqrt(max(ssr / dof, 0.0) / sxx)
    return PowerLawFit(-slope, math.exp(inter), int(n[idx[0]]), int(n[idx[-1]]),
                       r2, se, len(idx))


def fit_exponential(curve_or_lags, values=None, weights=None):
    """Least squares of log|y| on n; returns (rate, amplitude, r2)."""
    if values is None:
        n = curve_or_lags.n.astype(float)
        y = curve_or_lags.survival
        w = np.ones_like(y)
    else:
        n = np.asarray(curve_or_lags, dtype=float)
        y = np.abs(np.asarray(values))
        w = np.ones_like(y) if weights is None else np.asarray(weights)
    keep = y > 0
    n, y, w = n[keep], np.log(y[keep]), w[keep]
    W = w.sum()
    xm = (w * n).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (n - xm) ** 2).sum()
    slope = (w * (n - xm) * (y - ym)).sum() / sxx
    inter = ym - slope * xm
    resid = y - (inter + slope * n)
    sst = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - (w * resid ** 2).sum() / sst if sst > 0 else 1.0
    return -slope, math.exp(inter), r2


def fit_log_power(lags, values, weights=None):
    """Least squares of log|y| on log n; returns (exponent, amplitude, r2)."""
    n = np.asarray(lags, dtype=float)
    y = np.abs(np.asarray(values))
    keep = (y > 0) & (n > 0)
    n, y = n[keep], y[keep]
    w = np.ones_like(y) if weights is None else np.asarray(weights)[keep]
    x = np.log(n)
    ly = np.log(y)
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * ly).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (ly - ym)).sum() / sxx
    inter = ym - slope * xm
    resid = ly - (inter + slope * x)
    sst = (w * (ly - ym) ** 2).sum()
    r2 = 1.0 - (w * resid ** 2).sum() / sst if sst > 0 else 1.0
    return slope, math.exp(inter), r2


def resolved_window(series, lag_min=1, sigma=2.0):
    """Contiguous range of lags starting at lag_min where |C_n| exceeds
    sigma * stderr."""
    lags = []
    for i, n in enumerate(series.lags):
        if n < lag_min:
            continue
        if abs(series.values[i]) > sigma * series.stderr[i]:
            lags.append(i)
        elif lags:
            break
    return lags


def compare_decay_fits(series, lag_min=1, sigma=2.0):
    """Goodness comparison of power-law vs exponential fits to |C_n| over the
    resolved lag window."""
    idx = resolved_window(series, lag_min, sigma)
    if len(idx) < 4:
        return None
    lags = series.lags[idx].astype(float)
    vals = np.abs(series.values[idx])
    p_slope, _, p_r2 = fit_log_power(lags, vals)
    e_rate, _, e_r2 = fit_exponential(lags, vals)
    return {"lags": (int(lags[0]), int(lags[-1])), "n_lags": len(idx),
            "power_slope": p_slope, "power_r2": p_r2,
            "exp_rate": e_rate, "exp_r2": e_r2}


# ---------------------------------------------------------------------------
# cell measures


@dataclass
class CellMeasures:
    kinds: np.ndarray        # kind code per record
    ns: np.ndarray
    mu_M: float
    n_samples: int

    def mass_by_index(self, kind_name_str):
        from .induced import kind_code
        code = kind_code(kind_name_str)
        sel = self.kinds == code
        if not sel.any():
            return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0)
        counts = np.bincount(self.ns[sel])
        n = np.nonzero(counts)[0]
        c = counts[n]
        p = c / self.n_samples
        se = np.sqrt(p * (1 - p) / self.n_samples)
        return n, p, se


def estimate_cell_measures(table, spec, samples=1_000_000, r_max=1_000_000,
                           seed=0, chunk_size=DEFAULT_CHUNK):
    """Histogram mu|M mass over dynamically classified cells by index n."""
    if isinstance(spec, str):
        spec = SubsetSpec.for_table(table, rule=spec)
    data = run_excursion_ensemble(table, spec, samples, r_max, seed, chunk_size,
                                  collect=("kind", "n"))
    return CellMeasures(data["kind"], data["n"], data["mu_M"], data["n_samples"])


def fit_cell_slope(cells, kind_name_str, n_min=3, min_count=100):
    """Log-log slope of cell mass vs index n (expected negative)."""
    n, p, se = cells.mass_by_index(kind_name_str)
    counts = p * cells.n_samples
    keep = (n >= n_min) & (counts >= min_count)
    if keep.sum() < 4:
        raise WindowTooSmallError(f"only {int(keep.sum())} usable cell bins")
    slope, amp, r2 = fit_log_power(n[keep], p[keep], weights=counts[keep])
    return {"slope": slope, "amplitude": amp, "r2": r2,
            "n_lo": int(n[keep][0]), "n_hi": int(n[keep][-1]),
            "bins": int(keep.sum())}


# ---------------------------------------------------------------------------
# mean free path


def mean_free_path(table, samples=1_000_000, seed=0, orbit_len=8,
                   chunk_size=DEFAULT_CHUNK):
    """Time average of the free path over an ensemble of short orbits,
    compared against pi * area / perimeter."""
    pt = ker.PackedTable(table)
    n_orbits = max(samples // orbit_len, 1)
    total = 0.0
    total_sq = 0.0
    count = 0
    for ci, csize in enumerate(chunked(n_orbits, max(chunk_size // orbit_len, 1))):
        rng = substream(seed, ci)
        r, phi = ker.sample_mu_batch(pt, rng, csize)
        orbit_sum = np.zeros(csize)
        orbit_cnt = np.zeros(csize, dtype=np.int64)
        alive = np.ones(csize, dtype=bool)
        for _ in range(orbit_len):
            res = ker.step_batch(pt, r, phi)
            good = alive & res.ok & ~res.corner
            orbit_sum[good] += res.tau[good]
            orbit_cnt[good] += 1
            alive &= good
            r, phi = res.r, res.phi
        means = orbit_sum[orbit_cnt > 0] / orbit_cnt[orbit_cnt > 0]
        total += means.sum()
        total_sq += (means ** 2).sum()
        count += len(means)
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    se = math.sqrt(var / count)
    return {"estimate": mean, "stderr": se, "analytic": table.mean_free_path_exact(),
            "n_orbits": count, "orbit_len": orbit_len}

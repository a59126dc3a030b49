"""Per-segment monopsony index, bootstrap uncertainty, aggregation and decomposition."""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from .core import EstimationError, MonopsonyResult, SegmentKey, mu_index, normal_ci
from .parametric import MleSettings, fit_mle
from .semiparametric import fit_linear, fit_linear_robust, whisker_floor

__all__ = [
    "ESTIMATORS",
    "DesignError",
    "DecompositionResult",
    "PanelResult",
    "estimate_k",
    "segment_mu",
    "weighted_aggregate",
    "run_panel",
    "decompose",
    "format_row",
    "render_table",
    "results_frame",
    "plot_frame",
    "results_json",
]

DIMENSIONS = ("sector", "education", "age_band", "region", "gender")


def _fit_parametric(obs, censor_level=None):
    return fit_mle(obs, MleSettings(censor_level=censor_level))


ESTIMATORS = {
    "semiparametric": lambda obs, **kw: fit_linear(obs),
    "semiparametric_robust": lambda obs, **kw: fit_linear_robust(obs),
    "parametric": lambda obs, censor_level=None, **kw: _fit_parametric(obs, censor_level),
}


class DesignError(ValueError):
    """Decomposition design that cannot be estimated (collinear or degenerate)."""


def estimate_k(observations, estimator="semiparametric", **kw):
    """Friction estimate of ``observations`` with a named estimator."""
    try:
        fit = ESTIMATORS[estimator]
    except KeyError:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {sorted(ESTIMATORS)}")
    return fit(observations, **kw)


def _mean_floor(wage, weight):
    return float(np.average(wage, weights=weight)), float(whisker_floor(wage))


def _mu_from(wage, weight, k):
    if np.ptp(wage) == 0:
        return 0.0
    mean, floor = _mean_floor(wage, weight)
    if floor > mean:
        return None
    return mu_index(mean, floor, k)


def segment_seed(seed, key):
    """Seed for one segment; depends only on the run seed and the segment label."""
    return np.random.SeedSequence([int(seed), zlib.crc32(key.label().encode("utf-8"))])


def segment_mu(observations, friction=None, *, estimator="semiparametric", n_boot=500, seed=0,
               ci_level=0.95, segment_key=None, fallback=None, estimator_kw=None):
    """Monopsony index of one segment with a percentile bootstrap interval.

    Parameters
    ----------
    observations : Observations
        Workers of the segment.
    friction : FrictionEstimate, optional
        Segment-level fit; estimated with ``estimator`` when omitted.
    estimator : str
        Key of :data:`ESTIMATORS`, re-run on every bootstrap resample.
    n_boot : int
        Bootstrap replicates; 0 skips the interval.
    seed : int or numpy.random.SeedSequence
        Fixes the resampling; the result does not depend on replicate order.
    fallback : FrictionEstimate, optional
        Used when the segment fit fails. The result then carries the
        ``fallback`` flag and k is held fixed across replicates.

    Returns
    -------
    MonopsonyResult

    Raises
    ------
    EstimationError
        If the wage floor exceeds the mean wage, or the fit fails and no
        fallback is given.
    """
    kw = dict(estimator_kw or {})
    key = segment_key if segment_key is not None else (
        observations.keys[0] if len(observations) else SegmentKey())
    wage = observations.wage
    weight = observations.weight
    flags = []
    fixed_k = False
    total_w = float(np.sum(weight))
    if np.ptp(wage) == 0:
        # no dispersion: the index is zero whatever k is, and k is not estimable
        w0 = float(wage[0])
        k0 = float(friction.k) if friction is not None else float("nan")
        return MonopsonyResult(key, 0.0, w0, w0, k0, 0.0, len(observations), (0.0, 0.0),
                               estimator, total_w, ("zero_dispersion",))
    if friction is None:
        try:
            friction = estimate_k(observations, estimator, **kw)
        except EstimationError:
            if fallback is None:
                raise
            friction, fixed_k = fallback, True
            flags.append("fallback")
    k = float(friction.k)
    if not np.isfinite(k):
        raise EstimationError(f"segment {key.label()}: k is not finite")
    mean, floor = _mean_floor(wage, weight)
    if floor > mean:
        raise EstimationError(f"segment {key.label()}: wage floor {floor:g} exceeds mean wage "
                              f"{mean:g}", {"segment": key.as_dict()})
    mu = mu_index(mean, floor, k)
    se = ci = None
    if n_boot > 0:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        draws = _bootstrap(observations, ss, n_boot, estimator, kw, None if not fixed_k else k)
        ok = draws[np.isfinite(draws)]
        if ok.size < n_boot:
            flags.append(f"bootstrap_failures={n_boot - ok.size}")
        if ok.size >= max(2, n_boot // 2):
            se = float(np.std(ok, ddof=1))
            a = (1 - ci_level) / 2
            ci = (float(np.quantile(ok, a)), float(np.quantile(ok, 1 - a)))
        else:
            flags.append("bootstrap_unreliable")
    return MonopsonyResult(key, mu, mean, floor, k, se, len(observations), ci, estimator,
                           total_w, tuple(flags))


def _bootstrap(obs, ss, n_boot, estimator, kw, fixed_k):
    n = len(obs)
    out = np.full(n_boot, np.nan)
    # one child stream per replicate keeps replicates independent of evaluation order
    for b, child in enumerate(ss.spawn(n_boot)):
        idx = np.random.default_rng(child).integers(0, n, n)
        sub = obs.take(idx)
        try:
            k = fixed_k if fixed_k is not None else estimate_k(sub, estimator, **kw).k
            m = _mu_from(sub.wage, sub.weight, k)
        except (EstimationError, ValueError):
            continue
        if m is not None:
            out[b] = m
    return out


def weighted_aggregate(results, *, ci_level=0.95, key=None):
    """Employment-weighted average of segment indices.

    Segments are treated as independent when combining standard errors.
    """
    results = list(results)
    if not results:
        raise ValueError("no segment results to aggregate")
    w = np.array([r.total_weight for r in results], float)
    w = w / w.sum()
    mu = float(np.dot(w, [r.mu for r in results]))
    ses = [r.se_mu for r in results]
    se = None if any(s is None for s in ses) else float(np.sqrt(np.dot(w ** 2, np.square(ses))))
    ci = normal_ci(mu, se, ci_level)
    if ci is not None:
        ci = (max(0.0, ci[0]), min(1.0, ci[1]))
    return MonopsonyResult(
        key if key is not None else SegmentKey(year=results[0].segment_key.year),
        min(max(mu, 0.0), 1.0),
        float(np.dot(w, [r.mean_wage for r in results])),
        float(np.dot(w, [r.floor_wage for r in results])),
        float(np.dot(w, [r.k for r in results])),
        se, int(sum(r.n_obs for r in results)), ci, "weighted",
        float(sum(r.total_weight for r in results)), ("weighted_average",))


@dataclass
class PanelResult:
    segments: list
    aggregate: list
    skipped: list
    year_frictions: dict
    aggregate_mode: str
    failures: list = field(default_factory=list)


def run_panel(observations, *, estimator="semiparametric", min_size=30, n_boot=500, seed=0,
              ci_level=0.95, aggregate="pooled", estimator_kw=None):
    """Segment, estimate and aggregate μ for every year in ``observations``.

    Each year is also fitted on its pooled observations; that fit is the
    fallback k for segments whose own fit fails, and in ``"pooled"`` mode it
    supplies the yearly aggregate μ. ``"weighted"`` mode averages segment
    indices by total survey weight instead.
    """
    from .ingestion import segmentize

    if aggregate not in ("pooled", "weighted"):
        raise ValueError("aggregate must be 'pooled' or 'weighted'")
    segments, skipped = segmentize(observations, min_size=min_size)
    years = sorted({k.year for k in observations.keys})
    year_fric = {}
    year_obs = {}
    for y in years:
        idx = np.flatnonzero([k.year == y for k in observations.keys])
        year_obs[y] = observations.take(idx)
        try:
            year_fric[y] = estimate_k(year_obs[y], estimator, **(estimator_kw or {}))
        except EstimationError:
            year_fric[y] = None
    results, failures = [], []
    for key, obs in segments.items():
        try:
            results.append(segment_mu(obs, estimator=estimator, n_boot=n_boot,
                                      seed=segment_seed(seed, key), ci_level=ci_level,
                                      segment_key=key, fallback=year_fric.get(key.year),
                                      estimator_kw=estimator_kw))
        except EstimationError as exc:
            failures.append({"segment": key.as_dict(), "error": str(exc)})
    agg = []
    for y in years:
        ykey = SegmentKey(year=y)
        if aggregate == "pooled":
            if year_fric[y] is None:
                continue
            r = segment_mu(year_obs[y], year_fric[y], estimator=estimator, n_boot=n_boot,
                           seed=segment_seed(seed, ykey), ci_level=ci_level, segment_key=ykey,
                           estimator_kw=estimator_kw)
            agg.append(MonopsonyResult(**{**r.__dict__, "method": "pooled",
                                          "flags": r.flags + ("pooled",)}))
        else:
            rs = [r for r in results if r.segment_key.year == y]
            if rs:
                agg.append(weighted_aggregate(rs, ci_level=ci_level, key=ykey))
    return PanelResult(results, agg, skipped, year_fric, aggregate, failures)


@dataclass
class DecompositionResult:
    """OLS decomposition of μ across segments.

    ``coefficients`` maps each predictor label to ``{estimate, se, t, p}``;
    ``groups`` lists the labels belonging to each dimension, in design order.
    """

    coefficients: dict
    reference_categories: dict
    n_segments: int
    r_squared: float
    groups: dict = field(default_factory=dict)
    fitted: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    response: Optional[np.ndarray] = None
    flags: tuple = ()

    def to_frame(self):
        rows = [{"predictor": name, **vals} for name, vals in self.coefficients.items()]
        return pd.DataFrame(rows, columns=["predictor", "estimate", "se", "t", "p"])

    def to_dict(self):
        return {"coefficients": {k: dict(v) for k, v in self.coefficients.items()},
                "reference_categories": dict(self.reference_categories),
                "n_segments": self.n_segments, "r_squared": self.r_squared,
                "groups": {k: list(v) for k, v in self.groups.items()},
                "flags": list(self.flags)}


def _dim_title(dim):
    return dim.replace("_", " ").capitalize()


def _aliased(X, names, tol=1e-10):
    """Columns that are linear combinations of the columns before them."""
    bad = []
    kept = []
    for j in range(X.shape[1]):
        cols = X[:, kept + [j]]
        if np.linalg.matrix_rank(cols, tol=tol * max(1.0, np.abs(cols).max())) <= len(kept):
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


def decompose(results, dimensions, *, time="year_dummies", reference=None):
    """Regress μ on segment dummies and a time effect.

    Parameters
    ----------
    results : iterable of MonopsonyResult
        Segment-year panel.
    dimensions : sequence of str
        Segment attributes entered as dummy sets (``sector``, ``education``,
        ``age_band``, ``region``, ``gender``).
    time : {"year_dummies", "trend", None}
        Year dummies labelled ``Dummy(year=...)`` or a linear ``Trend``
        counted from the first year.
    reference : dict, optional
        Omitted category per dimension; the alphabetically first otherwise.
        The first year is always the omitted year.

    Raises
    ------
    DesignError
        If a dimension has fewer than two categories or the design is
        collinear; the message names the aliased dummies.
    """
    results = list(results)
    if not results:
        raise DesignError("empty panel")
    reference = dict(reference or {})
    y = np.array([r.mu for r in results], float)
    n = y.size
    cols = [np.ones(n)]
    names = ["Intercept"]
    groups = {}
    refs = {}
    if time == "year_dummies":
        years = np.array([r.segment_key.year for r in results])
        levels = sorted(set(years.tolist()))
        if len(levels) < 2:
            raise DesignError("year dummies need at least 2 years")
        refs["year"] = levels[0]
        groups["year"] = []
        for lv in levels[1:]:
            cols.append((years == lv).astype(float))
            names.append(f"Dummy(year={lv})")
            groups["year"].append(names[-1])
    elif time == "trend":
        years = np.array([r.segment_key.year for r in results], float)
        cols.append(years - years.min())
        names.append("Trend")
        groups["trend"] = ["Trend"]
    elif time is not None:
        raise ValueError("time must be 'year_dummies', 'trend' or None")
    for dim in dimensions:
        if dim not in DIMENSIONS:
            raise ValueError(f"unknown dimension {dim!r}")
        vals = np.array([str(getattr(r.segment_key, dim)) for r in results], dtype=object)
        levels = sorted(set(vals.tolist()))
        if len(levels) < 2:
            raise DesignError(f"dimension {dim!r} has fewer than 2 categories: {levels}")
        ref = str(reference.get(dim, levels[0]))
        if ref not in levels:
            raise DesignError(f"reference {ref!r} not among {dim} categories {levels}")
        refs[dim] = ref
        groups[dim] = []
        for lv in levels:
            if lv == ref:
                continue
            cols.append((vals == lv).astype(float))
            names.append(f"{_dim_title(dim)} ({lv})")
            groups[dim].append(names[-1])
    X = np.column_stack(cols)
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        raise DesignError(f"collinear design; aliased dummies: {_aliased(X, names)}")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ beta
    resid = y - fitted
    dof = n - p
    flags = []
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        r2 = 1.0
        flags.append("zero_variance_response")
    else:
        r2 = 1.0 - float(resid @ resid) / tss
    if dof > 0:
        s2 = float(resid @ resid) / dof
        se = np.sqrt(s2 * np.diag(np.linalg.inv(X.T @ X)))
    else:
        se = np.full(p, np.nan)
        flags.append("no_residual_dof")
    coefs = {}
    for j, name in enumerate(names):
        t = beta[j] / se[j] if se[j] > 0 else np.nan
        pv = 2 * stats.t.sf(abs(t), dof) if np.isfinite(t) else np.nan
        coefs[name] = {"estimate": float(beta[j]), "se": float(se[j]), "t": float(t),
                       "p": float(pv)}
    return DecompositionResult(coefs, refs, n, r2, groups, fitted, resid, y, tuple(flags))


def format_row(name, estimate, se, t, p, width=40):
    """One table row: coefficient and SE to 3 decimals, t to 2, p-value to 3."""
    def f(x, d):
        return "" if x is None or not np.isfinite(x) else f"{x:.{d}f}"
    return (f"{name:<{width}}{f(estimate, 3):>12}{f(se, 3):>16}{f(t, 2):>10}"
            f"{f(p, 3):>10}")


def render_table(result, width=40):
    """Plain-text decomposition table grouped by dimension."""
    lines = [f"{'Predictor':<{width}}{'Coefficient':>12}{'Standard error':>16}{'t':>10}"
             f"{'p-value':>10}"]
    c = result.coefficients

    def row(name):
        v = c[name]
        lines.append(format_row(name, v["estimate"], v["se"], v["t"], v["p"], width))

    row("Intercept")
    for name in result.groups.get("year", []) + result.groups.get("trend", []):
        row(name)
    for dim, labels in result.groups.items():
        if dim in ("year", "trend"):
            continue
        lines.append("")
        lines.append(f"{_dim_title(dim)} (reference: {result.reference_categories[dim]})")
        for name in labels:
            row(name)
    lines.append("")
    lines.append(f"N segments: {result.n_segments}   R-squared: {result.r_squared:.3f}")
    return "\n".join(lines)


def results_frame(results):
    """One row per result, in the order given."""
    rows = [r.to_dict() for r in results]
    return pd.DataFrame(rows)


def plot_frame(results):
    """Long-format table (segment, year, mu, ci_low, ci_high) for charting."""
    rows = []
    for r in results:
        lo, hi = r.ci_mu if r.ci_mu is not None else (None, None)
        rows.append({"segment": r.segment_key.label(), "year": r.segment_key.year, "mu": r.mu,
                     "ci_low": lo, "ci_high": hi})
    return pd.DataFrame(rows, columns=["segment", "year", "mu", "ci_low", "ci_high"])


def results_json(results):
    return json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True)

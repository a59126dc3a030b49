"""Synthetic steady-state survey data with known frictions.

Accepted wages follow ``G(w) = F(w) / (1 + k (1 - F(w)))`` for an offered
wage distribution ``F``; the elapsed spell of a worker at wage ``w`` is
exponential with rate ``delta + lambda (1 - F(w))``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate, stats

from ._special import exp1
from .core import GroupedDurations, Observations, SegmentKey

__all__ = [
    "WageDistribution",
    "UnemploymentBlock",
    "SegmentSpec",
    "Scenario",
    "accepted_cdf",
    "offered_from_accepted",
    "sample_employed",
    "sample_unemployed",
    "estock_density",
    "analytic_mu",
    "write_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("wage", "tenure", "censored", "weight", "sector", "education", "age_band",
               "region", "gender", "year")


@dataclass(frozen=True)
class WageDistribution:
    """Offered-wage distribution.

    ``family="lognormal"`` uses ``log_mean``/``log_sd``; ``family="scipy"``
    names any continuous ``scipy.stats`` distribution with keyword ``params``.
    """

    family: str = "lognormal"
    log_mean: float = 7.0
    log_sd: float = 0.6
    name: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family == "lognormal":
            if not self.log_sd > 0:
                raise ValueError("log_sd must be positive")
        elif self.family == "scipy":
            if not self.name or not hasattr(stats, self.name):
                raise ValueError(f"unknown scipy.stats distribution {self.name!r}")
            if self.frozen().support()[0] < 0:
                raise ValueError("offered wages must have non-negative support")
        else:
            raise ValueError(f"unknown wage family {self.family!r}")

    def frozen(self):
        if self.family == "lognormal":
            return stats.lognorm(s=self.log_sd, scale=np.exp(self.log_mean))
        return getattr(stats, self.name)(**self.params)

    def ppf(self, q):
        return self.frozen().ppf(q)

    def cdf(self, w):
        return self.frozen().cdf(w)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class UnemploymentBlock:
    pi: float
    lambda0: float
    n_unemployed: int
    boundaries: tuple = (0.0, 2.0, 5.0, 15.0)

    def __post_init__(self):
        if not 0 <= self.pi <= 1:
            raise ValueError("pi must lie in [0, 1]")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if self.n_unemployed < 1:
            raise ValueError("n_unemployed must be at least 1")
        object.__setattr__(self, "boundaries", tuple(float(b) for b in self.boundaries))


@dataclass(frozen=True)
class SegmentSpec:
    """A planted segment: its key, size and optional parameter overrides."""

    key: SegmentKey
    n_workers: int
    lambda_: Optional[float] = None
    delta: Optional[float] = None
    offered_wage: Optional[WageDistribution] = None


@dataclass(frozen=True)
class Scenario:
    lambda_: float
    delta: float
    offered_wage: WageDistribution = field(default_factory=WageDistribution)
    n_workers: int = 1000
    censor_level: Optional[float] = None
    seed: int = 0
    unemployment: Optional[UnemploymentBlock] = None
    segment: SegmentKey = field(default_factory=lambda: SegmentKey(year=2018))
    segments: tuple = ()

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.lambda_ >= 0:
            raise ValueError("lambda must be non-negative")
        if self.n_workers < 1:
            raise ValueError("n_workers must be at least 1")
        if self.censor_level is not None and not self.censor_level > 0:
            raise ValueError("censor_level must be positive")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def k(self):
        return self.lambda_ / self.delta

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        lam = d.pop("lambda", d.pop("lambda_", None))
        if lam is None and "k" in d:
            lam = float(d["k"]) * float(d["delta"])
        d.pop("k", None)
        if lam is None:
            raise ValueError("scenario needs 'lambda' (or 'k')")
        if "offered_wage" in d:
            d["offered_wage"] = WageDistribution.from_dict(d["offered_wage"])
        if d.get("unemployment"):
            d["unemployment"] = UnemploymentBlock(**d["unemployment"])
        if "segment" in d:
            d["segment"] = SegmentKey.from_dict({"year": 2018, **d["segment"]})
        segs = []
        base_year = d.get("segment", SegmentKey(year=2018)).year
        for s in d.pop("segments", ()) or ():
            s = dict(s)
            key = SegmentKey.from_dict({"year": base_year, **s.pop("key")})
            ow = s.pop("offered_wage", None)
            slam = s.pop("lambda", s.pop("lambda_", None))
            if slam is None and "k" in s:
                slam = float(s.pop("k")) * float(s.get("delta", d["delta"]))
            segs.append(SegmentSpec(key, int(s.pop("n_workers")), slam, s.pop("delta", None),
                                    WageDistribution.from_dict(ow) if ow else None))
        return cls(lambda_=float(lam), segments=tuple(segs), **d)

    def to_dict(self):
        d = {"lambda": self.lambda_, "delta": self.delta, "k": self.k,
             "offered_wage": asdict(self.offered_wage), "n_workers": self.n_workers,
             "censor_level": self.censor_level, "seed": self.seed,
             "segment": self.segment.as_dict(),
             "unemployment": asdict(self.unemployment) if self.unemployment else None}
        if self.segments:
            d["segments"] = [
                {"key": s.key.as_dict(), "n_workers": s.n_workers,
                 "lambda": s.lambda_ if s.lambda_ is not None else self.lambda_,
                 "delta": s.delta if s.delta is not None else self.delta,
                 "offered_wage": asdict(s.offered_wage or self.offered_wage)}
                for s in self.segments]
        return d

    def segment_scenarios(self):
        """One single-segment scenario per planted segment (or ``[self]``)."""
        if not self.segments:
            return [self]
        out = []
        for s in self.segments:
            out.append(replace(self, lambda_=self.lambda_ if s.lambda_ is None else s.lambda_,
                               delta=self.delta if s.delta is None else s.delta,
                               offered_wage=s.offered_wage or self.offered_wage,
                               n_workers=s.n_workers, segment=s.key, segments=()))
        return out

    # closed-form truths

    def accepted_cdf(self, w):
        return accepted_cdf(self.offered_wage.cdf(w), self.k)

    def accepted_ppf(self, p):
        return self.offered_wage.ppf(offered_from_accepted(p, self.k))

    def exit_rate(self, w):
        """``delta + lambda (1 - F(w))``."""
        return self.delta + self.lambda_ * (1.0 - self.offered_wage.cdf(w))

    def mean_accepted_wage(self):
        val, _ = integrate.quad(self.accepted_ppf, 0.0, 1.0, limit=400, epsabs=0, epsrel=1e-11)
        return val

    def whisker_floor(self):
        """Population lower log-whisker of accepted wages, in levels."""
        q1, q3 = np.log(self.accepted_ppf(np.array([0.25, 0.75])))
        fence = q1 - 1.5 * (q3 - q1)
        lower = self.offered_wage.frozen().support()[0]
        return float(max(np.exp(fence), lower))


def accepted_cdf(offered_cdf, k):
    """Steady-state CDF of accepted wages given the offered-wage CDF."""
    F = np.asarray(offered_cdf, float)
    return F / (1.0 + k * (1.0 - F))


def offered_from_accepted(g, k):
    """Invert :func:`accepted_cdf`: ``F = G (1 + k) / (1 + k G)``."""
    g = np.asarray(g, float)
    return g * (1.0 + k) / (1.0 + k * g)


def analytic_mu(scenario):
    """Monopsony index implied by scenario truth (mean and whisker of G)."""
    from .core import mu_index
    return mu_index(scenario.mean_accepted_wage(), scenario.whisker_floor(), scenario.k)


def _rng_streams(scenario, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(scenario.seed).spawn(n)]


def _sample_one(sc, rng, return_truth):
    n = sc.n_workers
    u = rng.uniform(size=n)
    F = offered_from_accepted(u, sc.k)
    w = sc.offered_wage.ppf(F)
    rate = sc.delta + sc.lambda_ * (1.0 - F)
    t = rng.exponential(1.0 / rate)
    cens = np.zeros(n, bool)
    if sc.censor_level is not None:
        cens = t > sc.censor_level
        t = np.minimum(t, sc.censor_level)
    return w, t, cens, u, rate


def sample_employed(scenario, *, return_truth=False):
    """Draw the employed cross-section of a scenario.

    Each planted segment gets its own random substream derived from
    ``scenario.seed``. With ``return_truth=True`` also returns a dict with
    the latent accepted-wage rank ``G`` and exit rate of every worker.
    """
    parts = scenario.segment_scenarios()
    rngs = _rng_streams(scenario, len(parts))
    cols = {"w": [], "t": [], "c": [], "u": [], "rate": []}
    keys = []
    for sc, rng in zip(parts, rngs):
        w, t, c, u, rate = _sample_one(sc, rng, return_truth)
        for name, v in zip(("w", "t", "c", "u", "rate"), (w, t, c, u, rate)):
            cols[name].append(v)
        keys += [sc.segment] * sc.n_workers
    obs = Observations(np.concatenate(cols["w"]), np.concatenate(cols["t"]),
                       np.concatenate(cols["c"]), None, keys)
    if return_truth:
        return obs, {"G": np.concatenate(cols["u"]), "exit_rate": np.concatenate(cols["rate"])}
    return obs


def sample_unemployed(scenario, boundaries=None):
    """Elapsed unemployment durations from the structural/frictional mixture.

    A share ``pi`` never exits (duration ``inf``, always in the open last
    class); the rest are exponential with rate ``lambda0``.

    Returns
    -------
    grouped : GroupedDurations
    durations : ndarray
    """
    ub = scenario.unemployment
    if ub is None:
        raise ValueError("scenario has no unemployment block")
    b = ub.boundaries if boundaries is None else tuple(boundaries)
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed).spawn(
        len(scenario.segment_scenarios()) + 1)[-1])
    n = ub.n_unemployed
    structural = rng.uniform(size=n) < ub.pi
    d = rng.exponential(1.0 / ub.lambda0, size=n)
    d[structural] = np.inf
    return GroupedDurations.from_durations(d, b), d


def _estock_quadrature(t, k, delta, n_nodes=40):
    # integral over the accepted-wage rank u of theta(u) exp(-theta(u) t)
    x, wq = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.5 * (x + 1.0)
    theta = delta * (1.0 + k) / (1.0 + k * u)
    tt = np.asarray(t, float)[..., None]
    return 0.5 * np.sum(wq * theta * np.exp(-theta * tt), axis=-1)


SMALL_K = 1e-3


def estock_density(t, k, delta):
    """Density of elapsed employment spells in the employed stock.

    ``delta (1 + k) / k * (E1(delta t) - E1(delta (1 + k) t))``; at ``k = 0``
    the exponential limit ``delta exp(-delta t)`` is returned, and for small
    ``k`` a Gauss-Legendre rule over wage ranks avoids cancellation.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not k >= 0:
        raise ValueError("k must be non-negative")
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if k == 0:
        out = delta * np.exp(-delta * t)
    elif k < SMALL_K:
        out = _estock_quadrature(t, k, delta)
    else:
        out = np.empty_like(t)
        zero = t == 0
        out[zero] = delta * (1.0 + k) / k * np.log1p(k)
        tp = t[~zero]
        out[~zero] = delta * (1.0 + k) / k * (exp1(delta * tp) - exp1(delta * (1.0 + k) * tp))
    return float(out[0]) if scalar else out


def write_csv(observations, path=None):
    """Serialise observations in the ingestion CSV schema; returns the text."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for i in range(len(observations)):
        key = observations.keys[i]
        wr.writerow([repr(float(observations.wage[i])), repr(float(observations.elapsed_spell[i])),
                     int(observations.censored[i]), repr(float(observations.weight[i])),
                     key.sector, key.education, key.age_band, key.region or "",
                     key.gender or "", key.year])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def write_grouped_csv(grouped, path=None):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("lower_bound", "frequency"))
    for b, f in zip(grouped.boundaries, grouped.frequencies):
        wr.writerow((repr(b), repr(f)))
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def truth_record(scenario):
    d = scenario.to_dict()
    return json.loads(json.dumps(d))

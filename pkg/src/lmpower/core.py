"""Domain types shared by every estimator, and the monopsony index."""
from __future__ import annotations

import enum
import math
from statistics import NormalDist
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "EstimationError",
    "ConvergenceError",
    "Method",
    "SegmentKey",
    "Observation",
    "Observations",
    "FrictionEstimate",
    "EmpiricalWageDistribution",
    "MonopsonyResult",
    "GroupedDurations",
    "UnemploymentMixtureEstimate",
    "DEFAULT_AGE_BANDS",
    "mu_index",
    "normal_ci",
]

#: Default potential-experience bands (inclusive bounds, years of age).
DEFAULT_AGE_BANDS = ((15, 20), (21, 30), (31, 45), (46, 65))


class EstimationError(RuntimeError):
    """An estimator could not produce an admissible point estimate."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(EstimationError):
    """Iterative fit stopped without meeting its convergence criterion."""


class Method(str, enum.Enum):
    SEMIPARAMETRIC = "semiparametric"
    SEMIPARAMETRIC_ROBUST = "semiparametric_robust"
    PARAMETRIC = "parametric"
    GROUPED_ESTOCK = "grouped_estock"
    GROUPED_INTERVAL = "grouped_interval"

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=False)
class SegmentKey:
    """Labour-market cell a worker belongs to."""

    sector: str = "all"
    education: str = "all"
    age_band: str = "all"
    region: Optional[str] = None
    gender: Optional[str] = None
    year: int = 0

    def sort_key(self):
        return (self.year, self.sector, self.education, self.age_band,
                self.region or "", self.gender or "")

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def as_dict(self):
        return asdict(self)

    def label(self):
        parts = [self.sector, self.education, self.age_band]
        parts += [p for p in (self.region, self.gender) if p is not None]
        return "|".join(parts) + f"|{self.year}"

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        if "year" in kw:
            kw["year"] = int(kw["year"])
        for k in ("region", "gender"):
            if kw.get(k) in ("", None) or (isinstance(kw.get(k), float) and math.isnan(kw[k])):
                kw[k] = None
        return cls(**kw)


@dataclass(frozen=True)
class Observation:
    wage: float
    elapsed_spell: float
    censored: bool = False
    weight: float = 1.0
    segment_key: SegmentKey = field(default_factory=SegmentKey)

    def __post_init__(self):
        if not self.wage > 0:
            raise ValueError(f"wage must be positive, got {self.wage}")
        if not self.elapsed_spell >= 0:
            raise ValueError(f"elapsed_spell must be non-negative, got {self.elapsed_spell}")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")


class Observations(Sequence):
    """Column-oriented, read-only collection of :class:`Observation` records.

    Estimators work on the numpy columns; iterating yields record objects.
    """

    def __init__(self, wage, elapsed_spell, censored=None, weight=None, keys=None):
        wage = np.array(wage, dtype=float)
        spell = np.array(elapsed_spell, dtype=float)
        n = wage.shape[0]
        if wage.ndim != 1 or spell.shape != (n,):
            raise ValueError("wage and elapsed_spell must be 1-d arrays of equal length")
        censored = np.zeros(n, bool) if censored is None else np.array(censored, dtype=bool)
        weight = np.ones(n) if weight is None else np.array(weight, dtype=float)
        if censored.shape != (n,) or weight.shape != (n,):
            raise ValueError("censored and weight must match wage in length")
        if not np.all(wage > 0):
            raise ValueError("all wages must be positive")
        if not np.all(spell >= 0):
            raise ValueError("all elapsed spells must be non-negative")
        if not np.all(weight > 0):
            raise ValueError("all weights must be positive")
        if keys is None:
            keys = [SegmentKey()] * n
        elif isinstance(keys, SegmentKey):
            keys = [keys] * n
        else:
            keys = list(keys)
            if len(keys) != n:
                raise ValueError("keys must match wage in length")
        for a in (wage, spell, censored, weight):
            a.setflags(write=False)
        self.wage = wage
        self.elapsed_spell = spell
        self.censored = censored
        self.weight = weight
        self.keys = tuple(keys)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        return cls([r.wage for r in records], [r.elapsed_spell for r in records],
                   [r.censored for r in records], [r.weight for r in records],
                   [r.segment_key for r in records])

    def __len__(self):
        return self.wage.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.take(np.arange(len(self))[i])
        return Observation(float(self.wage[i]), float(self.elapsed_spell[i]),
                           bool(self.censored[i]), float(self.weight[i]), self.keys[i])

    def __iter__(self) -> Iterator[Observation]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, Observations):
            return NotImplemented
        return (np.array_equal(self.wage, other.wage)
                and np.array_equal(self.elapsed_spell, other.elapsed_spell)
                and np.array_equal(self.censored, other.censored)
                and np.array_equal(self.weight, other.weight)
                and self.keys == other.keys)

    def __repr__(self):
        return f"Observations(n={len(self)})"

    def take(self, idx):
        idx = np.asarray(idx)
        return Observations(self.wage[idx], self.elapsed_spell[idx], self.censored[idx],
                            self.weight[idx], [self.keys[i] for i in idx])

    def with_wages(self, wage):
        return Observations(wage, self.elapsed_spell, self.censored, self.weight, self.keys)

    def with_spells(self, spell, censored=None):
        censored = self.censored if censored is None else censored
        return Observations(self.wage, spell, censored, self.weight, self.keys)

    @property
    def has_unit_weights(self):
        return bool(np.all(self.weight == 1.0))


def normal_ci(est, se, level=0.95):
    if se is None or not np.isfinite(se):
        return None
    z = NormalDist().inv_cdf(0.5 + level / 2)
    return (est - z * se, est + z * se)


@dataclass(frozen=True)
class FrictionEstimate:
    """Point estimates of (k, delta, lambda) with standard errors and normal CIs.

    ``se_*`` and ``ci_*`` are ``None`` when the information matrix is singular.
    """

    k: float
    delta: float
    lambda_: float
    se_k: Optional[float]
    se_delta: Optional[float]
    se_lambda: Optional[float]
    ci_k: Optional[tuple]
    ci_delta: Optional[tuple]
    ci_lambda: Optional[tuple]
    method: Method
    censor_level: Optional[float] = None
    ci_level: float = 0.95
    n: int = 0
    loglik: Optional[float] = None
    converged: bool = True
    flags: tuple = ()
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.k >= 0 and self.delta > 0 and self.lambda_ >= 0):
            raise ValueError(f"inadmissible rates k={self.k}, delta={self.delta}, lambda={self.lambda_}")
        if not math.isclose(self.k, self.lambda_ / self.delta, rel_tol=1e-8, abs_tol=1e-300):
            raise ValueError("k must equal lambda/delta")
        for name in ("k", "delta", "lambda_"):
            ci = getattr(self, "ci_" + name.rstrip("_"))
            est = getattr(self, name)
            if ci is not None and not (ci[0] <= est <= ci[1]):
                raise ValueError(f"confidence interval for {name} does not cover its estimate")
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def lambda_rate(self):
        return self.lambda_

    @classmethod
    def from_rates(cls, k, delta, lambda_, cov=None, *, method, ci_level=0.95, **kw):
        """Build from point estimates and an optional 3x3 covariance of (k, delta, lambda)."""
        ses = [None, None, None]
        if cov is not None:
            diag = np.diag(np.asarray(cov, float))
            if np.all(np.isfinite(diag)) and np.all(diag >= -1e-12 * np.maximum(1, np.abs(diag).max())):
                ses = [float(np.sqrt(max(v, 0.0))) for v in diag]
        cis = [normal_ci(e, s, ci_level) for e, s in zip((k, delta, lambda_), ses)]
        return cls(float(k), float(delta), float(lambda_), *ses, *cis, method=method,
                   ci_level=ci_level, **kw)

    def to_dict(self):
        d = {
            "k": self.k, "delta": self.delta, "lambda": self.lambda_,
            "se_k": self.se_k, "se_delta": self.se_delta, "se_lambda": self.se_lambda,
            "ci_k": list(self.ci_k) if self.ci_k else None,
            "ci_delta": list(self.ci_delta) if self.ci_delta else None,
            "ci_lambda": list(self.ci_lambda) if self.ci_lambda else None,
            "ci_level": self.ci_level, "method": self.method.value,
            "censor_level": self.censor_level, "n": self.n, "loglik": self.loglik,
            "converged": self.converged, "flags": list(self.flags),
            "diagnostics": self.diagnostics,
        }
        return d


@dataclass(frozen=True)
class EmpiricalWageDistribution:
    sorted_wages: np.ndarray
    cdf_values: np.ndarray
    floor_log_wage: float
    n: int

    @property
    def floor_wage(self):
        return float(np.exp(self.floor_log_wage))

    def __eq__(self, other):
        if not isinstance(other, EmpiricalWageDistribution):
            return NotImplemented
        return (np.array_equal(self.sorted_wages, other.sorted_wages)
                and np.array_equal(self.cdf_values, other.cdf_values)
                and self.floor_log_wage == other.floor_log_wage and self.n == other.n)


@dataclass(frozen=True)
class MonopsonyResult:
    segment_key: SegmentKey
    mu: float
    mean_wage: float
    floor_wage: float
    k: float
    se_mu: Optional[float]
    n_obs: int
    ci_mu: Optional[tuple] = None
    method: Optional[str] = None
    total_weight: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        object.__setattr__(self, "flags", tuple(self.flags))

    def to_dict(self):
        d = self.segment_key.as_dict()
        d.update(mu=self.mu, se_mu=self.se_mu,
                 ci_low=None if self.ci_mu is None else self.ci_mu[0],
                 ci_high=None if self.ci_mu is None else self.ci_mu[1],
                 mean_wage=self.mean_wage, floor_wage=self.floor_wage, k=self.k,
                 n_obs=self.n_obs, total_weight=self.total_weight, method=self.method,
                 flags=";".join(self.flags))
        return d


@dataclass(frozen=True)
class GroupedDurations:
    """Class lower bounds (last class open-ended) with a frequency per class."""

    boundaries: tuple
    frequencies: tuple

    def __post_init__(self):
        b = np.asarray(self.boundaries, float)
        f = np.asarray(self.frequencies, float)
        if b.ndim != 1 or b.shape != f.shape:
            raise ValueError("boundaries and frequencies must be 1-d and of equal length")
        if b.size < 2:
            raise ValueError("grouped data needs at least 2 classes")
        if b[0] < 0 or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be non-negative and strictly increasing")
        if np.any(f < 0) or f.sum() <= 0:
            raise ValueError("frequencies must be non-negative with positive total")
        object.__setattr__(self, "boundaries", tuple(float(x) for x in b))
        object.__setattr__(self, "frequencies", tuple(float(x) for x in f))

    @property
    def n_classes(self):
        return len(self.boundaries)

    @property
    def total(self):
        return float(sum(self.frequencies))

    def as_arrays(self):
        return np.asarray(self.boundaries), np.asarray(self.frequencies)

    @classmethod
    def from_durations(cls, durations, boundaries):
        """Group raw durations into ``(lower, upper]`` classes; ``inf`` falls in the open class."""
        b = np.asarray(boundaries, float)
        idx = assign_classes(durations, b)
        freq = np.bincount(idx, minlength=b.size).astype(float)
        return cls(tuple(b), tuple(freq))

    def labels(self):
        b = self.boundaries
        out = [f"({_fmt(b[i])},{_fmt(b[i + 1])}]" for i in range(len(b) - 1)]
        return out + [f"({_fmt(b[-1])},Inf]"]


def _fmt(x):
    return f"{x:g}"


def assign_classes(durations, boundaries):
    """Index of the ``(b[j], b[j+1]]`` class holding each duration (0 stays in class 0)."""
    b = np.asarray(boundaries, float)
    t = np.asarray(durations, float)
    idx = np.searchsorted(b, t, side="left") - 1
    return np.clip(idx, 0, b.size - 1)


@dataclass(frozen=True)
class UnemploymentMixtureEstimate:
    pi: float
    lambda0: float
    se_pi: Optional[float]
    se_lambda0: Optional[float]
    implied_delta: Optional[float] = None
    structural_rate: Optional[float] = None
    loglik: Optional[float] = None
    n: float = 0.0
    flags: tuple = ()
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.pi <= 1.0):
            raise ValueError("pi must lie in [0, 1]")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        object.__setattr__(self, "flags", tuple(self.flags))

    def to_dict(self):
        return {"pi": self.pi, "lambda0": self.lambda0, "se_pi": self.se_pi,
                "se_lambda0": self.se_lambda0, "implied_delta": self.implied_delta,
                "structural_rate": self.structural_rate, "loglik": self.loglik,
                "n": self.n, "flags": list(self.flags), "diagnostics": self.diagnostics}


def mu_index(mean_wage, floor_wage, k):
    """Monopsony index ``(E(w) - E(w_min)) / ((1 + k) E(w) - E(w_min))``.

    Zero under no wage dispersion, one when workers receive no outside
    offers (``k = 0``), and strictly decreasing in ``k`` otherwise.
    """
    if not (mean_wage > 0 and floor_wage > 0):
        raise ValueError("mean and floor wages must be positive")
    if mean_wage < floor_wage:
        raise ValueError(f"mean wage {mean_wage} is below the wage floor {floor_wage}")
    if not k >= 0:
        raise ValueError(f"k must be non-negative, got {k}")
    gap = mean_wage - floor_wage
    if gap == 0:
        return 0.0
    return gap / (gap + k * mean_wage)

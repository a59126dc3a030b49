"""Maximum likelihood for exponential elapsed durations with a wage-dependent hazard.

A worker at accepted-wage rank ``G`` leaves at rate

    theta(G) = (delta + lambda) / (1 + k G),   k = lambda / delta,

so ``theta`` runs from ``delta + lambda`` at the bottom of the wage
distribution down to ``delta`` at the top. Parameters are optimised on
``(log delta, log lambda)``; the wage CDF is held fixed at its mid-rank
estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _optim
from .core import (ConvergenceError, EstimationError, FrictionEstimate, Method,
                   assign_classes)
from .semiparametric import fit_linear, mid_rank_cdf
from .validation import as_observations, check_wages, check_wages_spells

__all__ = [
    "MleSettings",
    "hazard",
    "apply_censoring",
    "censored_loglik",
    "censored_score",
    "interval_loglik",
    "interval_score",
    "fit_mle",
    "fit_mle_censor_sweep",
    "fit_mle_grouped",
    "ExponentialDurationMLE",
    "GroupedDurationMLE",
]

MIN_OBS = 30


@dataclass(frozen=True)
class MleSettings:
    """Options shared by the duration likelihood fits.

    censor_level : spells above this many years are censored at it.
    censoring : ``"threshold"`` ignores recorded censoring flags and treats
        every spell at or below ``censor_level`` as complete; ``"flagged"``
        uses the observations' own flags (then applies ``censor_level`` on top).
    tol : bound on the score norm at the optimum, scaled by
        ``sqrt(max(1, |loglik|))``.
    """

    censor_level: Optional[float] = None
    censoring: str = "threshold"
    max_iter: int = 200
    tol: float = 1e-6
    ci_level: float = 0.95
    weighted: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.censor_level is not None and not self.censor_level > 0:
            raise ValueError("censor_level must be positive")
        if self.censoring not in ("threshold", "flagged"):
            raise ValueError("censoring must be 'threshold' or 'flagged'")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")


def hazard(w_cdf, k, delta, lambda_):
    """Job-exit rate ``(delta + lambda) / (1 + k G)`` at accepted-wage rank ``w_cdf``."""
    if not (delta > 0 and lambda_ >= 0 and k >= 0):
        raise ValueError("rates must be positive")
    if not math.isclose(k, lambda_ / delta, rel_tol=1e-8, abs_tol=1e-300):
        raise ValueError(f"inconsistent parameters: k={k} but lambda/delta={lambda_ / delta}")
    g = np.asarray(w_cdf, float)
    if np.any((g < 0) | (g > 1)):
        raise ValueError("w_cdf must lie in [0, 1]")
    out = (delta + lambda_) / (1.0 + k * g)
    return float(out) if out.ndim == 0 else out


def _theta_parts(params, g):
    d, lam = np.exp(params[0]), np.exp(params[1])
    denom = d + lam * g
    theta = d * (d + lam) / denom
    # d log(theta) / d log(delta), d log(theta) / d log(lambda)
    da = 1.0 + d / (d + lam) - d / denom
    db = lam / (d + lam) - lam * g / denom
    return theta, da, db


def censored_loglik(params, g, t, event, weights=None):
    """``sum_uncensored log(theta) - sum_all theta t`` at ``params = (log delta, log lambda)``."""
    theta, _, _ = _theta_parts(params, g)
    w = 1.0 if weights is None else weights
    return float(np.sum(w * (event * np.log(theta) - theta * t)))


def censored_score(params, g, t, event, weights=None):
    theta, da, db = _theta_parts(params, g)
    r = event - theta * t
    if weights is not None:
        r = r * weights
    return np.array([np.sum(r * da), np.sum(r * db)])


def _interval_terms(theta, lo, up):
    width = up - lo
    open_ = ~np.isfinite(up)
    x = theta * np.where(open_, 1.0, width)
    ll = -theta * lo + np.where(open_, 0.0, np.log(-np.expm1(-x)))
    dth = -lo + np.where(open_, 0.0, np.where(open_, 0.0, width) / np.expm1(x))
    return ll, dth


def interval_loglik(params, g, lo, up, weights=None):
    """Interval-censored log-likelihood ``sum log(exp(-theta lo) - exp(-theta up))``."""
    theta, _, _ = _theta_parts(params, g)
    ll, _ = _interval_terms(theta, lo, up)
    w = 1.0 if weights is None else weights
    return float(np.sum(w * ll))


def interval_score(params, g, lo, up, weights=None):
    theta, da, db = _theta_parts(params, g)
    _, dth = _interval_terms(theta, lo, up)
    r = dth * theta
    if weights is not None:
        r = r * weights
    return np.array([np.sum(r * da), np.sum(r * db)])


def apply_censoring(observations, settings):
    """Return ``(spells, event)`` after applying the censoring protocol."""
    t = np.array(observations.elapsed_spell, float)
    if settings.censoring == "flagged":
        event = ~observations.censored
    else:
        event = np.ones(t.size, bool)
    if settings.censor_level is not None:
        over = t > settings.censor_level
        t = np.where(over, settings.censor_level, t)
        event = event & ~over
    return t, event.astype(float)


def _weights(obs, settings):
    if settings.weighted and not obs.has_unit_weights:
        return obs.weight * (len(obs) / obs.weight.sum())
    return None


def _to_estimate(res, hessian_fn, method, settings, n, extra):
    d, lam = float(np.exp(res.x[0])), float(np.exp(res.x[1]))
    k = lam / d
    H = hessian_fn(res.x)
    cov_p = _optim.inverse_information(H)
    flags = list(extra.pop("flags", []))
    if cov_p is None:
        flags.append("singular_information")
    J = np.array([[-k, k], [d, 0.0], [0.0, lam]])
    cov = _optim.delta_cov(J, cov_p)
    diag = {"optimizer": res.optimizer, "iterations": res.n_iter, "grad_norm": res.grad_norm,
            "log_params": res.x.tolist(), "hessian": H.tolist()}
    if cov_p is None:
        diag["information_note"] = ("observed information is singular or indefinite; "
                                    "standard errors omitted")
    diag.update(extra)
    return FrictionEstimate.from_rates(k, d, lam, cov, method=method,
                                       ci_level=settings.ci_level,
                                       censor_level=settings.censor_level, n=n,
                                       loglik=res.loglik, converged=res.converged,
                                       flags=tuple(flags), diagnostics=diag)


def _initial(obs, t_mean):
    d0 = 1.0 / t_mean
    try:
        k0 = fit_linear(obs).k
    except (EstimationError, ValueError):
        k0 = 1.0
    if not (np.isfinite(k0) and k0 > 0):
        k0 = 1.0
    return np.log([d0, d0 * k0])


def fit_mle(observations, settings=None, *, init=None):
    """Maximum-likelihood estimate of ``(k, delta, lambda)`` from elapsed spells.

    Raises
    ------
    EstimationError
        If every spell is censored (the model is then not identified).
    ConvergenceError
        If the score norm is still above ``settings.tol`` after ``max_iter``.
    """
    settings = settings or MleSettings()
    obs = as_observations(observations)
    if len(obs) < MIN_OBS:
        raise ValueError(f"need at least {MIN_OBS} observations, got {len(obs)}")
    g = mid_rank_cdf(obs.wage)
    t, event = apply_censoring(obs, settings)
    if event.sum() == 0:
        raise EstimationError("all spells are censored; the duration model is not identified "
                              "without non-censored observations", {"n": len(obs)})
    w = _weights(obs, settings)
    x0 = _initial(obs, max(t.mean(), 1e-12)) if init is None else np.log(init)

    def f(p):
        return censored_loglik(p, g, t, event, w)

    def grad(p):
        return censored_score(p, g, t, event, w)

    res = _optim.maximize(f, x0, grad, max_iter=settings.max_iter, tol=settings.tol)
    if not res.converged:
        raise ConvergenceError(f"likelihood maximisation did not converge (score norm "
                               f"{res.grad_norm:.3g})", {"log_params": res.x.tolist(),
                                                        "loglik": res.loglik,
                                                        "optimizer": res.optimizer})
    extra = {"n_censored": int(len(obs) - event.sum()), "censoring": settings.censoring,
             "trace": res.trace}
    return _to_estimate(res, lambda p: _optim.numerical_hessian(f, p, grad), Method.PARAMETRIC,
                        settings, len(obs), extra)


def fit_mle_censor_sweep(observations, levels, settings=None):
    """One :func:`fit_mle` per censoring level; ``None`` or 0 means no censoring."""
    settings = settings or MleSettings()
    out = []
    for level in levels:
        level = None if (level is None or level == 0 or not np.isfinite(level)) else float(level)
        out.append(fit_mle(observations, replace(settings, censor_level=level)))
    return out


def fit_mle_grouped(observations, boundaries, settings=None, *, class_index=None):
    """Interval-censored MLE when tenure is only known by class.

    ``boundaries`` are class lower bounds, the last class open-ended. Spells
    are assigned to ``(b[j], b[j+1]]`` unless ``class_index`` is supplied.
    """
    settings = settings or MleSettings()
    obs = as_observations(observations)
    b = np.asarray(boundaries, float)
    if b.ndim != 1 or b.size < 2:
        raise ValueError("grouped tenure needs at least two classes; a single class carries no "
                         "duration information")
    if b[0] < 0 or np.any(np.diff(b) <= 0):
        raise ValueError("boundaries must be non-negative and strictly increasing")
    if len(obs) < MIN_OBS:
        raise ValueError(f"need at least {MIN_OBS} observations, got {len(obs)}")
    idx = assign_classes(obs.elapsed_spell, b) if class_index is None else np.asarray(class_index)
    if np.unique(idx).size < 2:
        raise EstimationError("all spells fall in one tenure class; not identified")
    upper = np.append(b[1:], np.inf)
    lo, up = b[idx], upper[idx]
    g = mid_rank_cdf(obs.wage)
    w = _weights(obs, settings)
    flags = ["identification_warning"] if b.size < 3 else []

    widths = np.diff(b)
    mid = np.where(np.isfinite(up), 0.5 * (lo + up), lo + widths[-1])
    d0 = 1.0 / max(np.mean(mid), 1e-12)
    x0 = np.log([d0, d0])

    def f(p):
        return interval_loglik(p, g, lo, up, w)

    def grad(p):
        return interval_score(p, g, lo, up, w)

    res = _optim.maximize(f, x0, grad, max_iter=settings.max_iter, tol=settings.tol)
    if not res.converged:
        raise ConvergenceError(f"grouped likelihood did not converge (score norm "
                               f"{res.grad_norm:.3g})", {"log_params": res.x.tolist()})
    extra = {"n_classes": int(b.size), "boundaries": b.tolist(),
             "class_counts": np.bincount(idx, minlength=b.size).tolist(), "flags": flags}
    return _to_estimate(res, lambda p: _optim.numerical_hessian(f, p, grad),
                        Method.GROUPED_INTERVAL, settings, len(obs), extra)


class _DurationBase(BaseEstimator):
    def _store(self, est, wages):
        self.estimate_ = est
        self.k_, self.delta_, self.lambda_ = est.k, est.delta, est.lambda_
        self.train_wages_ = np.sort(wages)

    def _cdf(self, X):
        check_is_fitted(self, "train_wages_")
        w = check_wages(X)
        lo = np.searchsorted(self.train_wages_, w, side="left")
        hi = np.searchsorted(self.train_wages_, w, side="right")
        return (lo + 0.5 * (hi - lo)) / self.train_wages_.size

    def hazard(self, X):
        """Job-exit rate at each wage."""
        return (self.delta_ + self.lambda_) / (1.0 + self.k_ * self._cdf(X))

    def predict(self, X):
        """Expected elapsed spell ``1 / theta`` at each wage."""
        return 1.0 / self.hazard(X)


class ExponentialDurationMLE(_DurationBase):
    """Exponential duration model with a wage-rank dependent hazard.

    Parameters
    ----------
    censor_level : float or None
    censoring : {"threshold", "flagged"}
    max_iter, tol, ci_level, weighted
        See :class:`MleSettings`.
    """

    def __init__(self, censor_level=None, censoring="threshold", max_iter=200, tol=1e-6,
                 ci_level=0.95, weighted=True):
        self.censor_level = censor_level
        self.censoring = censoring
        self.max_iter = max_iter
        self.tol = tol
        self.ci_level = ci_level
        self.weighted = weighted

    def _settings(self):
        return MleSettings(self.censor_level, self.censoring, self.max_iter, self.tol,
                           self.ci_level, self.weighted)

    def fit(self, X, y, censored=None, sample_weight=None):
        obs = check_wages_spells(X, y, censored, sample_weight)
        self._store(fit_mle(obs, self._settings()), obs.wage)
        return self


class GroupedDurationMLE(ExponentialDurationMLE):
    """Interval-censored variant for tenure reported in classes.

    Parameters
    ----------
    boundaries : sequence of float
        Class lower bounds; the last class is open-ended.
    """

    def __init__(self, boundaries=(0.0, 1.0, 5.0, 10.0), max_iter=200, tol=1e-6,
                 ci_level=0.95, weighted=True):
        self.boundaries = boundaries
        super().__init__(None, "threshold", max_iter, tol, ci_level, weighted)

    def _settings(self):
        return MleSettings(None, "threshold", self.max_iter, self.tol, self.ci_level,
                           self.weighted)

    def fit(self, X, y, sample_weight=None):
        obs = check_wages_spells(X, y, sample_weight=sample_weight)
        self._store(fit_mle_grouped(obs, self.boundaries, self._settings()), obs.wage)
        return self

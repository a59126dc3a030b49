"""Distribution-free identification of (k, delta, lambda).

Under steady state the mean elapsed employment spell of workers at wage
``w`` is linear in the accepted-wage CDF,

    E[t | w] = 1 / (delta (1 + k)) + k / (delta (1 + k)) * G(w),

so regressing spells on the empirical CDF gives ``k = b1 / b0`` and
``delta = 1 / (b0 + b1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .core import (ConvergenceError, EmpiricalWageDistribution, EstimationError,
                   FrictionEstimate, Method, Observations)
from .validation import as_observations, check_wages, check_wages_spells

__all__ = [
    "RegressionFit",
    "mid_rank_cdf",
    "whisker_floor",
    "empirical_cdf",
    "identify",
    "coefficients_from_rates",
    "identification_jacobian",
    "ols_fit",
    "huber_irls",
    "fit_linear",
    "fit_linear_robust",
    "SemiparametricFrictions",
]

MIN_OBS = 30
HUBER_T = 1.345


@dataclass(frozen=True)
class RegressionFit:
    beta0: float
    beta1: float
    covariance: np.ndarray
    n: int
    robust: bool
    weights_summary: Optional[dict] = None
    n_iter: int = 0
    scale: Optional[float] = None
    final_weights: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cov = np.asarray(self.covariance, float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-300):
            raise ValueError("covariance must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance must be positive semi-definite")
        object.__setattr__(self, "covariance", cov)


def mid_rank_cdf(wages):
    """``(rank - 0.5) / n`` per observation, tied wages sharing their average rank."""
    w = np.asarray(wages, float)
    return (rankdata(w, method="average") - 0.5) / w.size


def whisker_floor(wages):
    """Lower boxplot whisker of log wages, returned in wage levels.

    The whisker is the smallest observation at or above ``Q1 - 1.5 IQR`` on
    the log scale, so the returned value is always an observed wage.
    """
    w = np.asarray(wages, float)
    if w.size == 0:
        raise ValueError("whisker_floor needs at least one wage")
    lw = np.log(w)
    q1, q3 = np.percentile(lw, [25, 75])
    fence = q1 - 1.5 * (q3 - q1)
    return float(w[lw >= fence].min())


def empirical_cdf(observations):
    """Mid-rank empirical distribution of wages plus its whisker floor."""
    if isinstance(observations, Observations):
        w = observations.wage
    else:
        try:
            w = np.asarray([o.wage for o in observations], float)
        except AttributeError:
            w = check_wages(observations)
    if w.size < 2:
        raise ValueError("empirical_cdf needs at least 2 wages")
    g = mid_rank_cdf(w)
    order = np.argsort(w, kind="stable")
    return EmpiricalWageDistribution(sorted_wages=w[order], cdf_values=g[order],
                                     floor_log_wage=float(np.log(whisker_floor(w))),
                                     n=int(w.size))


def identify(beta0, beta1):
    """Map regression coefficients to ``(k, delta, lambda)``."""
    if not beta0 > 0:
        raise EstimationError(f"intercept b0 = {beta0:.6g} <= 0 implies a negative offer-arrival "
                              "rate", {"violated": "b0 > 0", "beta0": beta0, "beta1": beta1})
    if not beta0 + beta1 > 0:
        raise EstimationError(f"b0 + b1 = {beta0 + beta1:.6g} <= 0 implies a negative layoff rate",
                              {"violated": "b0 + b1 > 0", "beta0": beta0, "beta1": beta1})
    k = beta1 / beta0
    delta = 1.0 / (beta0 + beta1)
    return k, delta, k * delta


def coefficients_from_rates(k, delta):
    """Inverse of :func:`identify`: ``b0 = 1/(delta(1+k))``, ``b1 = k b0``."""
    b0 = 1.0 / (delta * (1.0 + k))
    return b0, k * b0


def identification_jacobian(beta0, beta1):
    """Rows d(k, delta, lambda) / d(b0, b1)."""
    s = beta0 + beta1
    return np.array([
        [-beta1 / beta0 ** 2, 1.0 / beta0],
        [-1.0 / s ** 2, -1.0 / s ** 2],
        [-beta1 / (beta0 ** 2 * s) - beta1 / (beta0 * s ** 2), 1.0 / s ** 2],
    ])


def _design(x):
    return np.column_stack([np.ones_like(x), x])


def _normalise(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, float)
    return w * (n / w.sum())


def ols_fit(x, y, weights=None, cov_type="HC1"):
    """(Weighted) least squares of ``y`` on ``[1, x]``.

    ``cov_type`` is ``"HC1"`` (heteroskedasticity-robust, default) or
    ``"classical"``.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    sw = _normalise(weights, n)
    X = _design(x)
    XtWX = X.T @ (X * sw[:, None])
    if np.linalg.matrix_rank(XtWX) < 2:
        raise EstimationError("degenerate wage dispersion: the CDF regressor has no variation")
    bread = np.linalg.inv(XtWX)
    beta = bread @ (X.T @ (sw * y))
    resid = y - X @ beta
    if cov_type == "HC1":
        meat = X.T @ (X * ((sw * resid) ** 2)[:, None])
        cov = bread @ meat @ bread * n / (n - 2)
    elif cov_type == "classical":
        sigma2 = np.sum(sw * resid ** 2) / (n - 2)
        cov = sigma2 * bread
    else:
        raise ValueError(f"unknown cov_type {cov_type!r}")
    cov = 0.5 * (cov + cov.T)
    return RegressionFit(float(beta[0]), float(beta[1]), cov, n, robust=False)


def _huber_weight(z, t):
    az = np.abs(z)
    return np.where(az <= t, 1.0, t / np.maximum(az, np.finfo(float).tiny))


def huber_irls(x, y, weights=None, *, t=HUBER_T, scale="relative", max_iter=50, tol=1e-8):
    """Huber M-regression of ``y`` on ``[1, x]`` by iteratively reweighted least squares.

    With ``scale="relative"`` residuals are standardised by the fitted mean
    before the Huber weights are applied, which suits spells whose spread
    grows with their mean. ``scale="global"`` uses one MAD scale for all
    residuals. Covariance is the M-estimator sandwich with the scale held fixed.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    sw = _normalise(weights, n)
    X = _design(x)
    start = ols_fit(x, y, sw)
    beta = np.array([start.beta0, start.beta1])
    step = np.inf
    hw = np.ones(n)
    s = 0.0
    converged = False
    it = 0
    s_floor = 1e-12 * (1.0 if scale == "relative" else max(float(np.median(np.abs(y))), 1e-300))
    for it in range(1, max_iter + 1):
        m = X @ beta
        resid = y - m
        if scale == "relative":
            if np.any(m <= 0):
                raise EstimationError("fitted mean spell is non-positive; relative scale undefined",
                                      {"beta": beta.tolist()})
            e = resid / m
        elif scale == "global":
            e = resid
        else:
            raise ValueError(f"unknown scale {scale!r}")
        # MAD about zero, as is usual for regression residuals
        s = float(np.median(np.abs(e)) / 0.6745)
        if s <= s_floor:
            hw = np.ones(n)
            converged = True
            break
        hw = _huber_weight(e / s, t)
        ww = sw * hw
        new = np.linalg.solve(X.T @ (X * ww[:, None]), X.T @ (ww * y))
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations",
                               {"beta": beta.tolist(), "scale": s, "n_iter": it,
                                "last_step": float(step)})

    m = X @ beta
    resid = y - m
    if s <= s_floor:
        s = 0.0
        cov = ols_fit(x, y, sw).covariance
    else:
        sigma = s * (m if scale == "relative" else np.ones(n))
        z = resid / sigma
        psi = np.clip(z, -t, t)
        dpsi = (np.abs(z) <= t).astype(float)
        A = X.T @ (X * (sw * dpsi / sigma)[:, None])
        B = X.T @ (X * ((sw * psi) ** 2)[:, None])
        Ainv = np.linalg.inv(A)
        cov = Ainv @ B @ Ainv * n / (n - 2)
        cov = 0.5 * (cov + cov.T)
    summary = {
        "min": float(hw.min()), "q05": float(np.quantile(hw, 0.05)),
        "median": float(np.median(hw)), "mean": float(hw.mean()), "max": float(hw.max()),
        "n_downweighted": int(np.sum(hw < 1.0)),
    }
    return RegressionFit(float(beta[0]), float(beta[1]), cov, n, robust=True,
                         weights_summary=summary, n_iter=it, scale=s, final_weights=hw)


def _binned(x, y, sw, n_bins):
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    cnt = np.bincount(idx, weights=sw, minlength=n_bins)
    keep = cnt > 0
    xb = np.bincount(idx, weights=sw * x, minlength=n_bins)[keep] / cnt[keep]
    yb = np.bincount(idx, weights=sw * y, minlength=n_bins)[keep] / cnt[keep]
    return xb, yb, cnt[keep]


def _to_estimate(fit, method, ci_level, n, extra=None):
    k, delta, lam = identify(fit.beta0, fit.beta1)
    if k < 0:
        raise EstimationError(f"negative slope b1 = {fit.beta1:.6g} implies a negative offer "
                              "arrival rate", {"violated": "b1 >= 0", "beta0": fit.beta0,
                                               "beta1": fit.beta1})
    J = identification_jacobian(fit.beta0, fit.beta1)
    cov = J @ fit.covariance @ J.T
    diag = {"beta0": fit.beta0, "beta1": fit.beta1,
            "beta_covariance": fit.covariance.tolist()}
    if fit.robust:
        diag.update(weights_summary=fit.weights_summary, irls_iterations=fit.n_iter,
                    scale=fit.scale)
    diag.update(extra or {})
    return FrictionEstimate.from_rates(k, delta, lam, cov, method=method, ci_level=ci_level,
                                       n=n, diagnostics=diag)


def _prepare(observations, weighted):
    obs = as_observations(observations)
    if len(obs) < MIN_OBS:
        raise ValueError(f"need at least {MIN_OBS} observations, got {len(obs)}")
    g = mid_rank_cdf(obs.wage)
    sw = obs.weight if (weighted and not obs.has_unit_weights) else None
    return obs, g, sw


def fit_linear(observations, *, weighted=True, cov_type="HC1", ci_level=0.95, n_bins=None):
    """Least-squares semi-parametric estimate of the friction parameters.

    Censored spells enter as observed. ``n_bins`` switches to a diagnostic
    regression on wage-bin means.
    """
    obs, g, sw = _prepare(observations, weighted)
    y = obs.elapsed_spell
    extra = {}
    if n_bins:
        g, y, cnt = _binned(g, y, _normalise(sw, g.size), n_bins)
        sw = cnt
        extra["n_bins"] = int(g.size)
    fit = ols_fit(g, y, sw, cov_type=cov_type)
    extra["cov_type"] = cov_type
    return _to_estimate(fit, Method.SEMIPARAMETRIC, ci_level, len(obs), extra)


def fit_linear_robust(observations, *, weighted=True, t=HUBER_T, scale="relative",
                      max_iter=50, tol=1e-8, ci_level=0.95):
    """Huber-IRLS counterpart of :func:`fit_linear`."""
    obs, g, sw = _prepare(observations, weighted)
    fit = huber_irls(g, obs.elapsed_spell, sw, t=t, scale=scale, max_iter=max_iter, tol=tol)
    return _to_estimate(fit, Method.SEMIPARAMETRIC_ROBUST, ci_level, len(obs),
                        {"huber_t": t, "scale_model": scale})


class SemiparametricFrictions(RegressorMixin, BaseEstimator):
    """Estimate labour-market frictions by regressing spells on the wage ECDF.

    Parameters
    ----------
    robust : bool, default=False
        Use Huber IRLS instead of least squares.
    cov_type : {"HC1", "classical"}, default="HC1"
        Covariance of the least-squares coefficients (ignored when robust).
    huber_t : float, default=1.345
        Huber tuning constant.
    scale : {"relative", "global"}, default="relative"
        Residual scale model for the robust fit.
    weighted : bool, default=True
        Use ``sample_weight`` when supplied.
    ci_level : float, default=0.95

    Attributes
    ----------
    estimate_ : FrictionEstimate
    k_, delta_, lambda_ : float
    coef_ : ndarray of shape (2,)
        Intercept and slope of the spell-on-CDF regression.
    """

    def __init__(self, robust=False, cov_type="HC1", huber_t=HUBER_T, scale="relative",
                 weighted=True, ci_level=0.95):
        self.robust = robust
        self.cov_type = cov_type
        self.huber_t = huber_t
        self.scale = scale
        self.weighted = weighted
        self.ci_level = ci_level

    def fit(self, X, y, sample_weight=None):
        obs = check_wages_spells(X, y, sample_weight=sample_weight)
        if self.robust:
            est = fit_linear_robust(obs, weighted=self.weighted, t=self.huber_t,
                                    scale=self.scale, ci_level=self.ci_level)
        else:
            est = fit_linear(obs, weighted=self.weighted, cov_type=self.cov_type,
                             ci_level=self.ci_level)
        self.estimate_ = est
        self.k_, self.delta_, self.lambda_ = est.k, est.delta, est.lambda_
        self.coef_ = np.array([est.diagnostics["beta0"], est.diagnostics["beta1"]])
        self.train_wages_ = np.sort(obs.wage)
        return self

    def cdf(self, X):
        """Mid-rank ECDF of the training wages evaluated at ``X``."""
        check_is_fitted(self, "train_wages_")
        w = check_wages(X)
        lo = np.searchsorted(self.train_wages_, w, side="left")
        hi = np.searchsorted(self.train_wages_, w, side="right")
        return (lo + 0.5 * (hi - lo)) / self.train_wages_.size

    def predict(self, X):
        """Expected elapsed spell at each wage."""
        return self.coef_[0] + self.coef_[1] * self.cdf(X)

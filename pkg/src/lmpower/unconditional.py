"""Grouped-data estimators that need no wage information.

* the structural/frictional mixture for elapsed unemployment durations,
  which pins down the unemployment exit rate ``lambda0``;
* the E-stock likelihood, which identifies ``(k, delta)`` from the class
  frequencies of elapsed employment spells alone.

Both are fitted by multi-start maximum likelihood on grouped counts.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import _optim
from ._special import exp1
from .core import (ConvergenceError, EstimationError, FrictionEstimate, GroupedDurations,
                   Method, UnemploymentMixtureEstimate)
from .simulator import SMALL_K, estock_density

__all__ = [
    "estock_survival",
    "estock_cdf",
    "estock_class_probabilities",
    "mixture_class_probabilities",
    "fit_estock_grouped",
    "fit_unemployment_mixture",
    "unemployment_rate",
    "structural_rate",
    "implied_layoff_rate",
    "EStockGroupedEstimator",
    "UnemploymentMixtureEstimator",
]

K_CAP = 1e4
N_STARTS = 5
_LOGK_MAX = np.log(1e12)


def _survival_quadrature(t, k, delta, n_nodes=40):
    x, wq = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.5 * (x + 1.0)
    theta = delta * (1.0 + k) / (1.0 + k * u)
    return 0.5 * np.sum(wq * np.exp(-theta * t[..., None]), axis=-1)


def estock_survival(t, k, delta):
    """``1 - Psi(t)`` for the E-stock elapsed-duration distribution.

    Term-wise integration of the density gives
    ``S(t) = [(1 + k) e^{-delta t} - e^{-delta (1+k) t}] / k - t psi(t)``.
    """
    if not delta > 0 or not k >= 0:
        raise ValueError("need delta > 0 and k >= 0")
    t = np.asarray(t, float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    if k == 0:
        out = np.exp(-delta * t)
    elif k < SMALL_K:
        out = _survival_quadrature(t, k, delta)
    else:
        out = np.ones_like(t)
        pos = (t > 0) & np.isfinite(t)
        tp = t[pos]
        a = delta * tp
        b = delta * (1.0 + k) * tp
        e1_diff = exp1(a) - exp1(b)
        out[pos] = ((1.0 + k) * np.exp(-a) - np.exp(-b)) / k - b / k * e1_diff
        out[np.isinf(t)] = 0.0
        np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def estock_cdf(t, k, delta):
    """CDF of elapsed employment spells in the employed stock."""
    s = estock_survival(t, k, delta)
    return 1.0 - s


def estock_class_probabilities(boundaries, k, delta):
    """Probability of each ``(b[j], b[j+1]]`` class, last class open."""
    b = np.asarray(boundaries, float)
    s = estock_survival(np.append(b, np.inf), k, delta)
    return s[:-1] - s[1:]


def mixture_class_probabilities(boundaries, pi, lambda0):
    b = np.asarray(boundaries, float)
    surv = np.exp(-lambda0 * b)
    p = (1.0 - pi) * (surv[:-1] - surv[1:])
    return np.append(p, pi + (1.0 - pi) * surv[-1])


def _grouped_loglik(freq, probs):
    mask = freq > 0
    p = probs[mask]
    if np.any(p <= 0):
        return -np.inf
    return float(np.sum(freq[mask] * np.log(p)))


def _multistart(f, starts, max_iter, tol, interior=None):
    """Run every start; flag multimodality when converged interior optima disagree."""
    results = [_optim.maximize(f, x0, None, max_iter=max_iter, tol=tol) for x0 in starts]
    finite = [r for r in results if np.isfinite(r.loglik)]
    if not finite:
        raise EstimationError("likelihood is not finite at any start point")
    best = max(finite, key=lambda r: r.loglik)
    conv = [r for r in finite if r.converged and (interior is None or interior(r.x))]
    spread = max(r.loglik for r in conv) - min(r.loglik for r in conv) if conv else 0.0
    multimodal = spread > max(tol, 1e-6 * abs(best.loglik))
    return best, results, multimodal, spread


def fit_estock_grouped(grouped, *, k_cap=K_CAP, n_starts=N_STARTS, seed=0, max_iter=500,
                       tol=1e-5, ci_level=0.95):
    """Grouped E-stock maximum likelihood over ``(log k, log delta)``.

    The result always carries the ``high_variance`` flag; an estimate of
    ``k`` above ``k_cap`` is returned with the ``implausible`` flag.
    """
    if not isinstance(grouped, GroupedDurations):
        grouped = GroupedDurations(*grouped)
    b, freq = grouped.as_arrays()
    flags = ["high_variance"]
    if b.size < 3:
        flags.append("identification_warning")

    def f(p):
        lk = min(p[0], _LOGK_MAX)
        return _grouped_loglik(freq, estock_class_probabilities(b, np.exp(lk), np.exp(p[1])))

    mids = np.append(0.5 * (b[:-1] + b[1:]), b[-1] + (b[-1] - b[-2]))
    d0 = freq.sum() / np.sum(freq * mids)
    rng = np.random.default_rng(seed)
    starts = [np.array([np.log(1.0), np.log(d0)])]
    for _ in range(n_starts - 1):
        starts.append(np.array([rng.uniform(np.log(0.1), np.log(20.0)),
                                np.log(d0) + rng.uniform(-1.0, 1.0)]))
    lo_k, hi_k = np.log(1e-4), np.log(k_cap)
    best, results, multimodal, spread = _multistart(f, starts, max_iter, tol,
                                                    lambda x: lo_k < x[0] < hi_k)
    k = float(np.exp(min(best.x[0], _LOGK_MAX)))
    delta = float(np.exp(best.x[1]))
    if multimodal:
        flags.append("multimodal")
    if k > k_cap:
        flags.append("implausible")
    elif not best.converged:
        raise ConvergenceError("E-stock likelihood did not converge",
                               {"log_params": best.x.tolist(), "grad_norm": best.grad_norm})
    H = _optim.numerical_hessian(f, best.x)
    cov_p = _optim.inverse_information(H)
    if cov_p is None:
        flags.append("singular_information")
    lam = k * delta
    J = np.array([[k, 0.0], [0.0, delta], [lam, lam]])
    diag = {"log_params": best.x.tolist(), "optimizer": best.optimizer,
            "grad_norm": best.grad_norm, "starts": [r.x.tolist() for r in results],
            "start_logliks": [r.loglik for r in results], "loglik_spread": spread,
            "boundaries": b.tolist(), "frequencies": freq.tolist(), "k_cap": k_cap}
    return FrictionEstimate.from_rates(k, delta, lam, _optim.delta_cov(J, cov_p),
                                       method=Method.GROUPED_ESTOCK, ci_level=ci_level,
                                       n=int(freq.sum()), loglik=best.loglik,
                                       converged=best.converged, flags=tuple(flags),
                                       diagnostics=diag)


def fit_unemployment_mixture(grouped, *, unemployment_rate=None, n_starts=N_STARTS, seed=0,
                             max_iter=500, tol=1e-6):
    """Fit the structural share ``pi`` and exit rate ``lambda0`` to grouped durations.

    Closed class ``j`` has probability ``(1 - pi)(e^{-lambda0 b_j} - e^{-lambda0 b_{j+1}})``
    and the open last class ``pi + (1 - pi) e^{-lambda0 b_J}``. When the
    observed ``unemployment_rate`` is given, the structural rate and the
    implied layoff rate are reported too.
    """
    if not isinstance(grouped, GroupedDurations):
        grouped = GroupedDurations(*grouped)
    b, freq = grouped.as_arrays()
    if b.size < 3:
        raise ValueError("the mixture needs at least 3 duration classes")
    n = freq.sum()
    if freq[0] == n:
        raise EstimationError("all durations fall in the first class; the exit rate is not "
                              "identified (it diverges upward)", {"frequencies": freq.tolist()})
    mids = np.append(0.5 * (b[:-1] + b[1:]), b[-1] + (b[-1] - b[-2]))
    lam_start = float(freq.sum() / np.sum(freq * mids))
    if freq[-1] == n:
        # all spells still open: structural share 1, exit rate unidentified
        return UnemploymentMixtureEstimate(
            1.0, lam_start, None, None, loglik=0.0, n=float(n),
            flags=("degenerate_all_open", "lambda0_unidentified"),
            diagnostics={"frequencies": freq.tolist()})

    def f(p):
        pi = 1.0 / (1.0 + np.exp(-p[0]))
        return _grouped_loglik(freq, mixture_class_probabilities(b, pi, np.exp(p[1])))

    rng = np.random.default_rng(seed)
    share_open = freq[-1] / n
    starts = [np.array([np.log((share_open + 0.01) / (1 - share_open + 0.01)), np.log(lam_start)])]
    for _ in range(n_starts - 1):
        starts.append(np.array([rng.uniform(-3, 3), np.log(lam_start) + rng.uniform(-1.5, 1.5)]))
    best, results, multimodal, spread = _multistart(f, starts, max_iter, tol)
    flags = ["multimodal"] if multimodal else []
    if not best.converged:
        raise ConvergenceError("mixture likelihood did not converge",
                               {"params": best.x.tolist(), "grad_norm": best.grad_norm})
    pi = float(1.0 / (1.0 + np.exp(-best.x[0])))
    lam0 = float(np.exp(best.x[1]))
    H = _optim.numerical_hessian(f, best.x)
    cov_p = _optim.inverse_information(H)
    se_pi = se_lam = None
    if cov_p is None:
        flags.append("singular_information")
    else:
        se_pi = float(pi * (1 - pi) * np.sqrt(cov_p[0, 0]))
        se_lam = float(lam0 * np.sqrt(cov_p[1, 1]))
    q = implied = None
    if unemployment_rate is not None:
        q = structural_rate(pi, unemployment_rate)
        implied = implied_layoff_rate(pi, lam0, unemployment_rate)
    return UnemploymentMixtureEstimate(
        pi, lam0, se_pi, se_lam, implied_delta=implied, structural_rate=q,
        loglik=best.loglik, n=float(n), flags=tuple(flags),
        diagnostics={"params": best.x.tolist(), "optimizer": best.optimizer,
                     "start_logliks": [r.loglik for r in results], "loglik_spread": spread,
                     "boundaries": b.tolist(), "frequencies": freq.tolist()})


def unemployment_rate(q, delta, lambda0):
    """``U = q + (1 - q) delta / (delta + lambda0)``."""
    return q + (1.0 - q) * delta / (delta + lambda0)


def structural_rate(pi, U):
    """Structural unemployment rate ``q = pi U``."""
    if not 0 < U < 1:
        raise ValueError("unemployment rate must lie in (0, 1)")
    return pi * U


def implied_layoff_rate(pi, lambda0, U):
    """Solve ``U = q + (1 - q) delta / (delta + lambda0)`` for ``delta`` given ``q = pi U``."""
    q = structural_rate(pi, U)
    if q >= U or q >= 1:
        return None
    s = (U - q) / (1.0 - q)
    return float(lambda0 * s / (1.0 - s))


class EStockGroupedEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_estock_grouped`.

    ``fit`` takes class lower bounds and frequencies.
    """

    def __init__(self, k_cap=K_CAP, n_starts=N_STARTS, random_state=0, ci_level=0.95):
        self.k_cap = k_cap
        self.n_starts = n_starts
        self.random_state = random_state
        self.ci_level = ci_level

    def fit(self, boundaries, frequencies):
        est = fit_estock_grouped(GroupedDurations(tuple(boundaries), tuple(frequencies)),
                                 k_cap=self.k_cap, n_starts=self.n_starts,
                                 seed=self.random_state, ci_level=self.ci_level)
        self.estimate_ = est
        self.k_, self.delta_, self.lambda_ = est.k, est.delta, est.lambda_
        return self

    def predict_proba(self, boundaries):
        """Class probabilities under the fitted parameters."""
        return estock_class_probabilities(boundaries, self.k_, self.delta_)

    def density(self, t):
        return estock_density(t, self.k_, self.delta_)


class UnemploymentMixtureEstimator(BaseEstimator):
    def __init__(self, unemployment_rate=None, n_starts=N_STARTS, random_state=0):
        self.unemployment_rate = unemployment_rate
        self.n_starts = n_starts
        self.random_state = random_state

    def fit(self, boundaries, frequencies):
        est = fit_unemployment_mixture(GroupedDurations(tuple(boundaries), tuple(frequencies)),
                                       unemployment_rate=self.unemployment_rate,
                                       n_starts=self.n_starts, seed=self.random_state)
        self.estimate_ = est
        self.pi_, self.lambda0_ = est.pi, est.lambda0
        return self

    def predict_proba(self, boundaries):
        return mixture_class_probabilities(boundaries, self.pi_, self.lambda0_)

"""Shared likelihood maximisation and observed-information machinery."""
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize


@dataclass
class MaxResult:
    x: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    grad_norm: float
    optimizer: str
    trace: list = field(default_factory=list)
    message: str = ""


def maximize(loglik, x0, grad=None, *, max_iter=200, tol=1e-6):
    """Maximise ``loglik`` from ``x0``: BFGS first, Nelder-Mead if BFGS fails.

    ``tol`` bounds the gradient norm at the reported optimum. The recorded
    ``trace`` holds the log-likelihood at every accepted iterate.
    """
    x0 = np.asarray(x0, float)

    def negf(x):
        v = loglik(x)
        return -v if np.isfinite(v) else np.inf

    negg = None
    if grad is not None:
        def negg(x):
            return -np.asarray(grad(x), float)

    trace = [loglik(x0)]

    def cb(xk, *args):
        trace.append(loglik(xk))

    with np.errstate(all="ignore"):
        res = optimize.minimize(negf, x0, jac=negg, method="BFGS", callback=cb,
                                options={"maxiter": max_iter, "gtol": tol})
    g = _gradient(loglik, grad, res.x)
    gnorm = float(np.linalg.norm(g))
    name = "bfgs"
    ok = np.isfinite(res.fun) and gnorm <= tol * max(1.0, abs(res.fun)) ** 0.5
    if not ok:
        # simplex fallback, polished by a second quasi-Newton pass
        start = res.x if np.isfinite(res.fun) else x0
        with np.errstate(all="ignore"):
            nm = optimize.minimize(negf, start, method="Nelder-Mead", callback=cb,
                                   options={"maxiter": max_iter * 20, "xatol": 1e-10,
                                            "fatol": 1e-12})
            res2 = optimize.minimize(negf, nm.x, jac=negg, method="BFGS", callback=cb,
                                     options={"maxiter": max_iter, "gtol": tol})
        best = res2 if res2.fun <= nm.fun else nm
        if best.fun <= res.fun or not np.isfinite(res.fun):
            res = best
        g = _gradient(loglik, grad, res.x)
        gnorm = float(np.linalg.norm(g))
        name = "nelder-mead"
        ok = np.isfinite(res.fun) and gnorm <= tol * max(1.0, abs(res.fun)) ** 0.5
    return MaxResult(np.asarray(res.x, float), float(-res.fun), bool(ok), int(res.nit),
                     gnorm, name, trace, str(res.message))


def _gradient(f, grad, x):
    if grad is not None:
        return np.asarray(grad(x), float)
    return numerical_gradient(f, x)


def numerical_gradient(f, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def numerical_hessian(f, x, grad=None, h=1e-4):
    """Central-difference Hessian; differences the analytic gradient when given."""
    x = np.asarray(x, float)
    p = x.size
    H = np.empty((p, p))
    steps = h * np.maximum(1.0, np.abs(x))
    if grad is not None:
        for i in range(p):
            e = np.zeros(p)
            e[i] = steps[i]
            H[:, i] = (np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2 * steps[i])
    else:
        f0 = f(x)
        for i in range(p):
            ei = np.zeros(p)
            ei[i] = steps[i]
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / steps[i] ** 2
            for j in range(i + 1, p):
                ej = np.zeros(p)
                ej[j] = steps[j]
                H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                           + f(x - ei - ej)) / (4 * steps[i] * steps[j])
                H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def inverse_information(H):
    """Covariance ``(-H)^{-1}``; ``None`` if the observed information is not positive definite."""
    info = -np.asarray(H, float)
    if not np.all(np.isfinite(info)):
        return None
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return None
    cov = np.linalg.inv(info)
    if np.linalg.cond(info) > 1e14:
        return None
    return 0.5 * (cov + cov.T)


def delta_cov(jac, cov):
    if cov is None:
        return None
    J = np.asarray(jac, float)
    return J @ cov @ J.T

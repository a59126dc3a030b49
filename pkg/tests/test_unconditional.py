import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from sklearn.base import clone

from conftest import make_scenario
from lmpower.core import EstimationError, GroupedDurations
from lmpower.simulator import UnemploymentBlock, estock_density, sample_employed
from lmpower.unconditional import (EStockGroupedEstimator, UnemploymentMixtureEstimator,
                                   estock_cdf, estock_class_probabilities, estock_survival,
                                   fit_estock_grouped, fit_unemployment_mixture,
                                   implied_layoff_rate, mixture_class_probabilities,
                                   structural_rate, unemployment_rate)

PERU_U = GroupedDurations((0, 2, 5, 15), (856, 876, 199, 56))
PERU_E = GroupedDurations((0, 1, 3, 5, 10, 20, 30, 40, 50),
                          (3040, 2155, 1306, 1762, 1759, 1283, 692, 73, 0))

bounds = st.lists(st.floats(0.01, 60.0), min_size=1, max_size=12, unique=True).map(
    lambda v: np.concatenate([[0.0], np.sort(v)]))


@given(bounds, st.floats(0.0, 200.0), st.floats(0.005, 2.0))
@settings(max_examples=150, deadline=None)
def test_estock_probabilities_on_simplex(b, k, delta):
    p = estock_class_probabilities(b, k, delta)
    assert np.all(p >= -1e-15)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@given(bounds, st.floats(0.0, 1.0), st.floats(0.01, 5.0))
@settings(max_examples=150, deadline=None)
def test_mixture_probabilities_on_simplex(b, pi, lam):
    p = mixture_class_probabilities(b, pi, lam)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("k", [1e-8, 1e-4, 9.9e-4, 1e-3, 0.5, 2.4, 50.0])
def test_survival_agrees_with_quadrature_across_the_small_k_switch(k):
    delta = 0.07
    for t in (0.5, 5.0, 30.0):
        ref, _ = integrate.quad(lambda s: estock_density(s, k, delta), t, np.inf,
                                epsabs=1e-14, epsrel=1e-12, limit=400)
        assert estock_survival(t, k, delta) == pytest.approx(ref, abs=1e-10)


def test_survival_edges():
    assert estock_survival(0.0, 2.4, 0.07) == 1.0
    assert estock_survival(np.inf, 2.4, 0.07) == 0.0
    assert estock_cdf(10.0, 0.0, 0.1) == pytest.approx(1 - np.exp(-1.0))
    t = np.linspace(0, 200, 400)
    assert np.all(np.diff(estock_survival(t, 2.4, 0.07)) <= 0)
    with pytest.raises(ValueError):
        estock_survival(-1.0, 1.0, 0.1)


def _mixture_loglik(pi, lam, b, n):
    e = np.exp(-lam * b)
    p = np.append((1 - pi) * (e[:-1] - e[1:]), pi + (1 - pi) * e[-1])
    return np.sum(n * np.log(p))


def test_peru_unemployment_golden():
    # values confirmed by a brute-force grid search refined with Nelder-Mead
    m = fit_unemployment_mixture(PERU_U)
    assert m.pi == pytest.approx(0.0246249, rel=1e-5)
    assert m.lambda0 == pytest.approx(0.3742361, rel=1e-6)
    assert m.se_pi == pytest.approx(0.0037632, rel=1e-3)
    assert m.se_lambda0 == pytest.approx(0.0098201, rel=1e-3)
    assert m.flags == ()


def test_mixture_se_matches_independent_hessian():
    m = fit_unemployment_mixture(PERU_U)
    b, n = (np.asarray(a, float) for a in PERU_U.as_arrays())
    x = np.array([m.pi, m.lambda0])
    h = x * 1e-4
    H = np.empty((2, 2))
    f = lambda v: _mixture_loglik(v[0], v[1], b, n)
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h[i], np.eye(2)[j] * h[j]
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (
                4 * h[i] * h[j])
    se = np.sqrt(np.diag(np.linalg.inv(-H)))
    np.testing.assert_allclose([m.se_pi, m.se_lambda0], se, rtol=1e-3)


def test_mixture_degenerate_cases():
    with pytest.raises(ValueError):
        fit_unemployment_mixture(GroupedDurations((0, 2), (5, 5)))
    with pytest.raises(EstimationError, match="first class"):
        fit_unemployment_mixture(GroupedDurations((0, 2, 5), (10, 0, 0)))
    m = fit_unemployment_mixture(GroupedDurations((0, 2, 5), (0, 0, 10)))
    assert m.pi == 1.0 and "lambda0_unidentified" in m.flags and m.se_lambda0 is None


def test_mixture_accounting_round_trip():
    q, delta, lam0 = 0.02, 0.07, 0.8
    U = unemployment_rate(q, delta, lam0)
    pi = q / U
    assert structural_rate(pi, U) == pytest.approx(q)
    assert implied_layoff_rate(pi, lam0, U) == pytest.approx(delta)
    m = fit_unemployment_mixture(PERU_U, unemployment_rate=0.04)
    assert m.structural_rate == pytest.approx(m.pi * 0.04)
    assert m.implied_delta > 0


def test_mixture_recovery_from_simulation():
    from lmpower.simulator import sample_unemployed
    sc = make_scenario(n=10, seed=31, unemployment=UnemploymentBlock(0.2, 0.5, 5000,
                                                                     (0, 1, 2, 4, 8)))
    m = fit_unemployment_mixture(sample_unemployed(sc)[0])
    assert abs(m.pi - 0.2) < 3 * m.se_pi and abs(m.lambda0 - 0.5) < 3 * m.se_lambda0


def test_peru_estock_reproduces_implausible_finding():
    est = fit_estock_grouped(PERU_E)
    # the published layoff rate is 0.0575756; k runs off to an implausible size there too
    assert est.delta == pytest.approx(0.0575756, rel=1e-3)
    assert {"high_variance", "implausible"} <= set(est.flags)


def test_estock_two_classes_warns():
    obs = sample_employed(make_scenario(n=5000, seed=32))
    est = fit_estock_grouped(GroupedDurations.from_durations(obs.elapsed_spell, (0, 10)))
    assert "identification_warning" in est.flags


def test_estock_multistart_is_seeded():
    obs = sample_employed(make_scenario(n=5000, seed=33))
    g = GroupedDurations.from_durations(obs.elapsed_spell, (0, 1, 2, 4, 8, 16, 32))
    a, b = fit_estock_grouped(g, seed=5), fit_estock_grouped(g, seed=5)
    assert a == b


def test_estimator_wrappers():
    e = EStockGroupedEstimator().fit(PERU_U.boundaries, PERU_U.frequencies)
    assert e.predict_proba(PERU_U.boundaries).sum() == pytest.approx(1.0)
    assert clone(e).get_params() == e.get_params()
    m = UnemploymentMixtureEstimator().fit(PERU_U.boundaries, PERU_U.frequencies)
    p = m.predict_proba(PERU_U.boundaries)
    assert p.sum() == pytest.approx(1.0)
    # with two parameters the open-ended share is matched exactly at the optimum
    assert p[-1] == pytest.approx(PERU_U.frequencies[-1] / PERU_U.total, rel=1e-4)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize
from sklearn.base import clone

from conftest import make_scenario
from lmpower.core import EstimationError, Observations
from lmpower.parametric import (ExponentialDurationMLE, GroupedDurationMLE, MleSettings,
                                apply_censoring, censored_loglik, fit_mle, fit_mle_censor_sweep,
                                fit_mle_grouped, hazard, interval_loglik, interval_score)
from lmpower.semiparametric import mid_rank_cdf
from lmpower.simulator import sample_employed


def direct_loglik(delta, lam, g, t, event):
    # hazard written through the offered-wage CDF, independently of the package
    F = g * (1 + lam / delta) / (1 + lam / delta * g)
    theta = delta + lam * (1 - F)
    return np.sum(event * np.log(theta) - theta * t)


@pytest.fixture(scope="module")
def sample():
    return sample_employed(make_scenario(n=8000, seed=21))


def test_matches_independent_optimum(sample):
    est = fit_mle(sample, MleSettings(censor_level=20.0))
    t, ev = apply_censoring(sample, MleSettings(censor_level=20.0))
    g = mid_rank_cdf(sample.wage)
    ref = optimize.minimize(lambda p: -direct_loglik(p[0], p[1], g, t, ev), [0.1, 0.1],
                            method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-10,
                                                           "maxiter": 5000})
    assert est.delta == pytest.approx(ref.x[0], rel=1e-5)
    assert est.lambda_ == pytest.approx(ref.x[1], rel=1e-5)
    assert est.loglik == pytest.approx(-ref.fun, rel=1e-10)


def test_standard_errors_match_independent_hessian(sample):
    est = fit_mle(sample)
    g = mid_rank_cdf(sample.wage)
    t, ev = sample.elapsed_spell, np.ones(len(sample))
    x = np.array([est.delta, est.lambda_])
    h = x * 1e-4
    H = np.empty((2, 2))
    f = lambda v: direct_loglik(v[0], v[1], g, t, ev)
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h[i], np.eye(2)[j] * h[j]
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (
                4 * h[i] * h[j])
    cov = np.linalg.inv(-H)
    J = np.array([-est.lambda_ / est.delta ** 2, 1 / est.delta])
    assert est.se_delta == pytest.approx(np.sqrt(cov[0, 0]), rel=1e-3)
    assert est.se_lambda == pytest.approx(np.sqrt(cov[1, 1]), rel=1e-3)
    assert est.se_k == pytest.approx(np.sqrt(J @ cov @ J), rel=1e-3)


def test_recovers_truth_with_censoring():
    obs = sample_employed(make_scenario(n=20000, seed=22))
    est = fit_mle(obs, MleSettings(censor_level=10.0))
    assert abs(est.k - 2.4) < 3 * est.se_k
    assert abs(est.delta - 0.07) < 3 * est.se_delta
    assert est.censor_level == 10.0 and est.diagnostics["n_censored"] > 0


def test_likelihood_ascends_and_start_invariant(sample):
    a = fit_mle(sample)
    trace = a.diagnostics["trace"]
    assert trace[-1] >= trace[0]
    b = fit_mle(sample, init=(0.5, 0.01))
    c = fit_mle(sample, init=(0.01, 2.0))
    for other in (b, c):
        assert other.k == pytest.approx(a.k, rel=1e-5)
        assert other.loglik == pytest.approx(a.loglik, rel=1e-12)


def test_censoring_protocols():
    obs = Observations([1.0, 2.0, 3.0], [1.0, 5.0, 30.0], censored=[False, True, False])
    t, ev = apply_censoring(obs, MleSettings(censor_level=20.0))
    np.testing.assert_array_equal(t, [1, 5, 20])
    np.testing.assert_array_equal(ev, [1, 1, 0])
    t, ev = apply_censoring(obs, MleSettings(censor_level=20.0, censoring="flagged"))
    np.testing.assert_array_equal(ev, [1, 0, 0])


def test_all_censored_is_an_error():
    obs = Observations(np.linspace(1, 2, 40), np.full(40, 50.0))
    with pytest.raises(EstimationError, match="censored"):
        fit_mle(obs, MleSettings(censor_level=10.0))


def test_censor_sweep(sample):
    ests = fit_mle_censor_sweep(sample, [10, 20, 0, None])
    assert [e.censor_level for e in ests] == [10.0, 20.0, None, None]
    assert ests[2].k == ests[3].k


@pytest.mark.parametrize("bad", [{"tol": 0}, {"censor_level": -1}, {"censoring": "x"},
                                 {"ci_level": 1.0}])
def test_settings_validation(bad):
    with pytest.raises(ValueError):
        MleSettings(**bad)


def test_hazard_values_and_consistency():
    assert hazard(0.0, 2.0, 0.1, 0.2) == pytest.approx(0.3)
    assert hazard(1.0, 2.0, 0.1, 0.2) == pytest.approx(0.1)
    with pytest.raises(ValueError, match="inconsistent"):
        hazard(0.5, 3.0, 0.1, 0.2)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_interval_score_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    b = np.array([0.0, 1.0, 5.0, 10.0])
    idx = rng.integers(0, 4, 300)
    up = np.append(b[1:], np.inf)
    lo, hi = b[idx], up[idx]
    g = rng.uniform(size=300)
    p = np.log([rng.uniform(0.01, 0.5), rng.uniform(0.01, 2.0)])
    a = interval_score(p, g, lo, hi)
    fd = [(interval_loglik(p + e, g, lo, hi) - interval_loglik(p - e, g, lo, hi)) / 2e-6
          for e in np.eye(2) * 1e-6]
    np.testing.assert_allclose(a, fd, rtol=1e-5, atol=1e-5)


def test_interval_likelihood_tends_to_density():
    # narrow classes: log P(class) - log(width) -> log density
    g = np.array([0.3])
    p = np.log([0.07, 0.168])
    t, w = 4.0, 1e-6
    ll = interval_loglik(p, g, np.array([t]), np.array([t + w])) - np.log(w)
    assert ll == pytest.approx(censored_loglik(p, g, np.array([t]), np.array([1.0])), abs=1e-5)


def test_grouped_fit(sample):
    est = fit_mle_grouped(sample, (0, 1, 5, 10))
    assert est.method.value == "grouped_interval"
    assert abs(est.k - 2.4) < 3 * est.se_k
    two = fit_mle_grouped(sample, (0, 10))
    assert "identification_warning" in two.flags
    with pytest.raises(ValueError, match="two classes"):
        fit_mle_grouped(sample, (0,))
    short = sample.with_spells(np.full(len(sample), 0.5))
    with pytest.raises(EstimationError, match="one tenure class"):
        fit_mle_grouped(short, (0, 1, 5))


class TestEstimators:
    def test_exponential_api(self, sample):
        m = ExponentialDurationMLE(censor_level=20.0)
        assert m.fit(sample.wage, sample.elapsed_spell) is m
        assert m.k_ == pytest.approx(fit_mle(sample, MleSettings(censor_level=20.0)).k)
        th = m.hazard(sample.wage)
        np.testing.assert_allclose(th, (m.delta_ + m.lambda_) / (1 + m.k_ * mid_rank_cdf(
            sample.wage)))
        np.testing.assert_allclose(m.predict(sample.wage), 1 / th)
        assert clone(m).get_params()["censor_level"] == 20.0

    def test_grouped_api(self, sample):
        m = GroupedDurationMLE(boundaries=(0, 1, 5, 10)).fit(sample.wage, sample.elapsed_spell)
        assert m.estimate_.method.value == "grouped_interval"
        assert set(clone(m).get_params()) == {"boundaries", "max_iter", "tol", "ci_level",
                                              "weighted"}

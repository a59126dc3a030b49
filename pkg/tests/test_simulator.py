import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from conftest import make_scenario
from lmpower.core import SegmentKey
from lmpower.simulator import (Scenario, UnemploymentBlock, WageDistribution, accepted_cdf,
                               analytic_mu, estock_density, offered_from_accepted,
                               sample_employed, sample_unemployed, truth_record, write_csv)


@given(st.floats(0, 1), st.floats(0, 50))
def test_accepted_offered_round_trip(g, k):
    assert accepted_cdf(offered_from_accepted(g, k), k) == pytest.approx(g, abs=1e-12)


@given(st.floats(0.001, 0.999), st.floats(0, 50))
def test_accepted_dominated_by_offered(f, k):
    # the accepted distribution stochastically dominates the offered one
    assert accepted_cdf(f, k) <= f + 1e-15


def test_same_seed_same_sample():
    a = sample_employed(make_scenario(n=500, seed=9))
    b = sample_employed(make_scenario(n=500, seed=9))
    c = sample_employed(make_scenario(n=500, seed=10))
    assert a == b and a != c
    assert write_csv(a) == write_csv(b)


def test_truth_fields_match_closed_forms():
    sc = make_scenario(n=2000, seed=1)
    obs, truth = sample_employed(sc, return_truth=True)
    np.testing.assert_allclose(sc.accepted_cdf(obs.wage), truth["G"], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(sc.exit_rate(obs.wage), truth["exit_rate"], rtol=1e-9)


def test_censoring_caps_spells():
    obs = sample_employed(make_scenario(n=3000, seed=2, censor_level=10.0))
    assert obs.elapsed_spell.max() <= 10.0
    np.testing.assert_array_equal(obs.censored, obs.elapsed_spell == 10.0)


def test_scipy_wage_family():
    sc = Scenario(lambda_=0.1, delta=0.05, n_workers=5000, seed=3,
                  offered_wage=WageDistribution(family="scipy", name="gamma",
                                                params={"a": 3.0, "scale": 500.0}))
    obs = sample_employed(sc)
    assert stats.kstest(obs.wage, sc.accepted_cdf).pvalue > 0.001


def test_planted_segments_are_independent_streams():
    d = {"lambda": 0.168, "delta": 0.07, "seed": 4,
         "segments": [{"key": {"sector": "a", "year": 2016}, "n_workers": 300, "k": 1.0},
                      {"key": {"sector": "b", "year": 2016}, "n_workers": 200}]}
    sc = Scenario.from_dict(d)
    obs = sample_employed(sc)
    assert len(obs) == 500
    assert obs.keys[0] == SegmentKey("a", year=2016) and obs.keys[-1].sector == "b"
    assert sc.segment_scenarios()[0].k == pytest.approx(1.0)
    assert Scenario.from_dict(sc.to_dict()).segment_scenarios() == sc.segment_scenarios()


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario.from_dict({"delta": 0.1})
    with pytest.raises(ValueError):
        Scenario(lambda_=0.1, delta=0.0)
    with pytest.raises(ValueError):
        UnemploymentBlock(pi=1.5, lambda0=1.0, n_unemployed=10)


def test_unemployment_mixture_shares():
    sc = make_scenario(n=10, seed=5, unemployment=UnemploymentBlock(0.3, 0.8, 20000))
    g, d = sample_unemployed(sc)
    assert np.mean(np.isinf(d)) == pytest.approx(0.3, abs=0.015)
    p_open = 0.3 + 0.7 * np.exp(-0.8 * 15)
    assert g.frequencies[-1] / g.total == pytest.approx(p_open, abs=0.015)


@pytest.mark.parametrize("k,delta", [(2.4, 0.07), (0.5, 0.2), (1e-4, 0.1), (30.0, 0.01)])
def test_estock_density_integrates_to_one(k, delta):
    mass, _ = integrate.quad(lambda t: estock_density(t, k, delta), 0, np.inf, limit=400)
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_estock_density_matches_simulated_stock():
    sc = make_scenario(n=40000, seed=6)
    t = sample_employed(sc).elapsed_spell
    cdf = lambda x: integrate.quad(lambda s: estock_density(s, sc.k, sc.delta), 0, x)[0]
    grid = np.quantile(t, [0.1, 0.25, 0.5, 0.75, 0.9])
    for x, q in zip(grid, [0.1, 0.25, 0.5, 0.75, 0.9]):
        assert cdf(x) == pytest.approx(q, abs=0.01)


def test_analytic_mu_in_expected_band():
    # lognormal(7, 0.6) offers at k=2.4 give an index between 0.2 and 0.4
    sc = make_scenario(k=2.42, delta=0.069)
    assert 0.2 <= analytic_mu(sc) <= 0.4


def test_truth_record_is_json():
    sc = make_scenario(unemployment=UnemploymentBlock(0.3, 0.8, 100))
    rec = truth_record(sc)
    assert json.loads(json.dumps(rec)) == rec
    assert rec["k"] == pytest.approx(2.4)

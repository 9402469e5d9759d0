import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from nvpd.core import ChargeState, DomainError
from nvpd.kinetics import (ChargeDistribution, FourLevelParams, NoSteadyStateError, PowerLawRate,
                           TwoStateRates, evolve, flip_probability, four_level_steady_state,
                           power_scaled_rates, rates_from_flip_fit, saturation_curve,
                           steady_state)

rate = st.floats(1e-4, 10.0)


def eig_oracle(r, p0, t):
    """exp(A t) p0 by diagonalising the 2x2 generator."""
    A = np.array([[-r.lambda_ion, r.lambda_rec], [r.lambda_ion, -r.lambda_rec]])
    w, V = np.linalg.eig(A)
    return (V @ np.diag(np.exp(w * t)) @ np.linalg.solve(V, p0)).real


# --- steady state

def test_fig1b_steady_state():
    r = TwoStateRates.from_lifetimes(56.6, 465.0)
    assert steady_state(r).p_minus == pytest.approx(56.6 / 521.6, rel=1e-12)
    assert round(steady_state(r).p_minus, 5) == 0.10851


def test_symmetric_and_absorbing():
    assert steady_state(TwoStateRates(0.3, 0.3)).p_minus == 0.5
    assert steady_state(TwoStateRates(0.0, 0.2)).p_minus == 1.0


def test_no_steady_state():
    with pytest.raises(NoSteadyStateError):
        steady_state(TwoStateRates(0.0, 0.0))


def test_negative_rate_rejected():
    with pytest.raises(DomainError):
        TwoStateRates(-1e-3, 0.1)


# --- evolve

def test_evolve_identity_at_zero():
    r = TwoStateRates(0.2, 0.05)
    p0 = ChargeDistribution(0.3, 0.7)
    assert evolve(r, p0, 0.0) == p0


def test_evolve_long_time_limit():
    r = TwoStateRates(0.2, 0.05)
    p = evolve(r, ChargeDistribution.pure(ChargeState.NEGATIVE), 1e6 / r.total)
    assert p.p_minus == pytest.approx(steady_state(r).p_minus, abs=1e-12)


def test_evolve_matches_eigen_oracle_example():
    r = TwoStateRates(0.01, 0.02)
    p = evolve(r, ChargeDistribution(1.0, 0.0), 50.0)
    # frozen from eig_oracle
    assert p.p_minus == pytest.approx(0.74104339, abs=1e-8)
    assert p.as_array() == pytest.approx(eig_oracle(r, [1.0, 0.0], 50.0), abs=1e-12)


def test_evolve_rejects_negative_time():
    with pytest.raises(DomainError):
        evolve(TwoStateRates(1, 1), ChargeDistribution(1, 0), -1.0)


def test_evolve_branch_signs():
    # NV- start carries lambda_ion/lambda_tot with sign -(-1, 1)
    r = TwoStateRates(0.3, 0.1)
    t = 2.0
    e = math.exp(-r.total * t)
    pm = evolve(r, ChargeDistribution(1, 0), t)
    assert pm.p_minus == pytest.approx(0.1 / 0.4 + 0.3 / 0.4 * e, abs=1e-15)
    pz = evolve(r, ChargeDistribution(0, 1), t)
    assert pz.p_minus == pytest.approx(0.1 / 0.4 - 0.1 / 0.4 * e, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(rate, rate, st.floats(0.0, 1.0), st.floats(0.0, 50.0))
def test_evolve_property_matches_oracle(li, lr, pm, t):
    r = TwoStateRates(li, lr)
    p = evolve(r, ChargeDistribution(pm, 1.0 - pm), t)
    assert np.allclose(p.as_array(), eig_oracle(r, [pm, 1 - pm], t), atol=1e-12, rtol=0)
    assert abs(p.p_minus + p.p_zero - 1.0) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(rate, rate, st.floats(0.0, 1.0))
def test_steady_state_is_limit(li, lr, pm):
    r = TwoStateRates(li, lr)
    p = evolve(r, ChargeDistribution(pm, 1 - pm), 200.0 / r.total)
    assert p.p_minus == pytest.approx(steady_state(r).p_minus, abs=1e-12)


# --- flip probability

def test_flip_probability_examples():
    r = TwoStateRates(0.01, 0.01)
    assert flip_probability(r, ChargeState.NEGATIVE, 0.0) == 0.0
    t = math.log(2) / 0.02
    assert flip_probability(r, ChargeState.NEGATIVE, t) == pytest.approx(0.25, abs=1e-15)
    assert 1 - evolve(r, ChargeDistribution(1, 0), t).p_minus == pytest.approx(0.25, abs=1e-15)
    r2 = TwoStateRates(0.3, 0.1)
    assert flip_probability(r2, ChargeState.NEGATIVE, 1e6) == pytest.approx(0.75)
    assert flip_probability(r2, ChargeState.NEUTRAL, 1e6) == pytest.approx(0.25)


@given(rate, rate, st.floats(0, 100), st.floats(0, 100))
def test_flip_monotone(li, lr, t1, t2):
    r = TwoStateRates(li, lr)
    lo, hi = sorted((t1, t2))
    for s in ChargeState:
        assert flip_probability(r, s, lo) <= flip_probability(r, s, hi) + 1e-15


# --- rates from flip fit

def test_rates_from_flip_fit_examples():
    assert rates_from_flip_fit(0.5, 0.02) == TwoStateRates(0.01, 0.01)
    r = rates_from_flip_fit(0.62, 0.5)
    assert (r.lambda_ion, r.lambda_rec) == pytest.approx((0.31, 0.19), abs=1e-15)
    assert flip_probability(r, ChargeState.NEGATIVE, 1e9) == pytest.approx(0.62)


@given(rate, rate)
def test_rates_from_flip_round_trip(li, lr):
    r = TwoStateRates(li, lr)
    back = rates_from_flip_fit(li / r.total, r.total)
    assert back.lambda_ion == pytest.approx(li, rel=1e-12)
    assert back.lambda_rec == pytest.approx(lr, rel=1e-12)


@pytest.mark.parametrize("p, lam", [(-0.1, 1.0), (1.1, 1.0), (0.5, 0.0)])
def test_rates_from_flip_fit_domain(p, lam):
    with pytest.raises(DomainError):
        rates_from_flip_fit(p, lam)


# --- power laws

def test_power_scaled_rates():
    law = PowerLawRate(0.001, 0.0005)
    r = power_scaled_rates(law, law, 2.0)
    assert r.lambda_ion == pytest.approx(0.004)
    assert power_scaled_rates(law, law, 0.0) == TwoStateRates(0.0, 0.0)
    quad = PowerLawRate(0.0, 0.3)
    r1 = power_scaled_rates(quad, quad, 1.5)
    r2 = power_scaled_rates(quad, quad, 3.0)
    assert r2.lambda_ion == pytest.approx(4 * r1.lambda_ion, rel=1e-14)


@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
def test_pure_quadratic_population_is_power_independent(b_ion, b_rec):
    ion, rec = PowerLawRate(0.0, b_ion), PowerLawRate(0.0, b_rec)
    ps = [steady_state(power_scaled_rates(ion, rec, p)).p_minus for p in np.linspace(0.5, 6, 12)]
    assert np.ptp(ps) < 1e-12


# --- four-level model

def random_four_level(rng, sigma_ion=None):
    return FourLevelParams(
        sigma=rng.uniform(0.01, 1.0),
        sigma_ion=rng.uniform(1e-4, 0.05) if sigma_ion is None else sigma_ion,
        sigma_re=rng.uniform(1e-4, 0.05),
        lambda_EG=rng.uniform(50, 100),
        lambda_EM=rng.uniform(1, 20),
        lambda_MG=rng.uniform(1, 10),
        I0=rng.uniform(10, 1000),
    )


def null_space_oracle(fp, intensity):
    ns = scipy.linalg.null_space(fp.generator(intensity))
    assert ns.shape[1] == 1
    v = ns[:, 0]
    return v / v.sum()


def test_four_level_dark_is_ground_state():
    fp = FourLevelParams(0.1, 0.01, 0.01, 80, 10, 3, 100)
    s = four_level_steady_state(fp, 0.0)
    assert s.as_array().tolist() == [1.0, 0.0, 0.0, 0.0]
    assert s.degenerate


def test_four_level_matches_null_space(rng):
    for _ in range(50):
        fp = random_four_level(rng)
        i = rng.uniform(1, 2000)
        s = four_level_steady_state(fp, i)
        assert not s.degenerate
        assert s.as_array() == pytest.approx(null_space_oracle(fp, i), rel=1e-10)
        assert abs(s.as_array().sum() - 1) <= 1e-12


def test_four_level_three_level_limit(rng):
    fp = random_four_level(rng, sigma_ion=0.0)
    p_s = 1 / (1 + fp.lambda_EM / fp.lambda_MG)
    i_s = (fp.lambda_EG + fp.lambda_EM) / (fp.sigma * (1 + fp.lambda_EM / fp.lambda_MG))
    for i in (1.0, 30.0, 500.0):
        assert four_level_steady_state(fp, i).p_E == pytest.approx(p_s * i / (i + i_s), rel=1e-10)


def test_saturation_curve_half_point(rng):
    fp = random_four_level(rng)
    i_s = fp.saturation_power()
    _, fl = saturation_curve(fp, [0.0, i_s, 1e9])
    assert fl[0] == 0.0
    f_sat = fp.lambda_EG * fp.saturation_population()
    assert fl[1] == pytest.approx(0.5 * f_sat, rel=1e-10)


def test_saturation_curve_efficiency(rng):
    fp = random_four_level(rng)
    _, a = saturation_curve(fp, [10.0, 100.0])
    _, b = saturation_curve(fp, [10.0, 100.0], efficiency=0.02)
    assert b == pytest.approx(0.02 * a, rel=1e-14)

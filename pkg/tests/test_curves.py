import warnings

import numpy as np
import pytest

from nvpd.core import ChargeState
from nvpd.kinetics import (FourLevelParams, TwoStateRates, flip_probability,
                           four_level_steady_state, saturation_curve)
from nvpd.inference.curves import (fit_flip_curve, fit_rate_vs_power, fit_saturation,
                                   flip_probabilities_from_shots, wilson_sigma)
from nvpd.inference.nls import ModelMismatchError

FLIP_T = np.array([0.5, 1, 2, 3, 5, 8, 12, 20.0])


def flip_points(r, t=FLIP_T):
    pm = np.array([flip_probability(r, ChargeState.NEGATIVE, x) for x in t])
    pz = np.array([flip_probability(r, ChargeState.NEUTRAL, x) for x in t])
    return pm, pz


# --- saturation

def test_saturation_exact_points():
    i = np.array([10, 30, 100, 300, 1000, 3000.0])
    f = fit_saturation(i, 80 * i / (i + 250))
    assert (f.F_S, f.I_S) == pytest.approx((80.0, 250.0), rel=1e-10)


def test_saturation_fits_four_level_curve():
    fp = FourLevelParams(0.2, 0.01, 0.02, 77.0, 8.0, 3.0, 150.0)
    grid, fl = saturation_curve(fp, np.geomspace(5, 5000, 25))
    f = fit_saturation(grid, fl)
    assert np.max(np.abs(f(grid) - fl) / fl) < 1e-9
    assert f.I_S == pytest.approx(fp.saturation_power(), rel=1e-9)


def test_saturation_noisy_recovery():
    # 30 powers with 5% noise: both parameters within 5% in ~90% of datasets
    rng = np.random.default_rng(8)
    i = np.geomspace(20, 8000, 30)
    f0 = 100 * i / (i + 600)
    ok = covered = 0
    for _ in range(200):
        fit = fit_saturation(i, f0 * (1 + 0.05 * rng.standard_normal(i.size)), sigma=0.05 * f0)
        ok += abs(fit.F_S / 100 - 1) < 0.05 and abs(fit.I_S / 600 - 1) < 0.05
        covered += np.all(np.abs(np.array([fit.F_S - 100, fit.I_S - 600])) < 3 * fit.result.stderr)
    assert ok >= 0.85 * 200
    assert covered >= 0.95 * 200


def test_saturation_warns_far_below_plateau():
    i = np.array([1, 2, 3, 4, 5.0])
    with pytest.warns(RuntimeWarning):
        f = fit_saturation(i, 100 * i / (i + 1000) * (1 + 1e-3 * np.array([1, -1, 1, -1, 1])))
    assert not f.saturating


# --- rate vs power

def test_pure_quadratic_gives_zero_linear_part():
    p = np.array([0.5, 1, 2, 4, 6.0])
    f = fit_rate_vs_power(p, 0.02 * p ** 2)
    assert abs(f.a) < 1e-8
    assert f.b == pytest.approx(0.02, rel=1e-8)


def test_pure_linear_gives_zero_quadratic_part():
    p = np.array([0.5, 1, 2, 4, 6.0])
    f = fit_rate_vs_power(p, 0.3 * p)
    assert abs(f.b) < 1e-8
    assert f.a == pytest.approx(0.3, rel=1e-8)


def test_quadratic_only_option():
    p = np.array([0.5, 1, 2, 4, 6.0])
    f = fit_rate_vs_power(p, 0.02 * p ** 2, quadratic_only=True)
    assert f.a == 0.0 and f.b == pytest.approx(0.02)


def test_rate_power_noisy_coverage():
    rng = np.random.default_rng(12)
    p = np.array([1, 2, 4, 6, 8, 10.0])
    truth = 0.02 * p + 0.01 * p ** 2
    inside = 0
    for _ in range(200):
        sig = 0.05 * truth
        f = fit_rate_vs_power(p, truth + sig * rng.standard_normal(p.size), sigma=sig)
        inside += abs(f.a - 0.02) < 3 * f.a_err and abs(f.b - 0.01) < 3 * f.b_err
    assert inside >= 0.95 * 200


def test_clamping_is_report_only():
    p = np.array([1, 2, 3.0])
    f = fit_rate_vs_power(p, 0.01 * p ** 2 - 1e-4 * p)
    assert f.a < 0
    assert f.law.clamped().a == 0.0


# --- flip curves

def test_flip_exact_recovery():
    r = TwoStateRates(0.31, 0.19)
    fit = fit_flip_curve(FLIP_T, *flip_points(r))
    assert fit.rates.lambda_ion == pytest.approx(0.31, abs=1e-8)
    assert fit.rates.lambda_rec == pytest.approx(0.19, abs=1e-8)
    assert fit.p_infinity == pytest.approx(0.62, abs=1e-10)


def test_flip_single_branch_identifiable_but_wider():
    r = TwoStateRates(0.31, 0.19)
    pm, pz = flip_points(r)
    n = 10000
    both = fit_flip_curve(FLIP_T, pm, pz, shots_minus=n, shots_zero=n)
    single = fit_flip_curve(FLIP_T, pm, shots_minus=n)
    assert single.rates.lambda_ion == pytest.approx(0.31, abs=1e-8)
    assert np.trace(single.covariance) > np.trace(both.covariance)


def test_flip_noisy_coverage():
    r = TwoStateRates(0.31, 0.19)
    pm, pz = flip_points(r)
    rng = np.random.default_rng(5)
    n = 10000
    inside = 0
    for _ in range(200):
        fit = fit_flip_curve(FLIP_T, rng.binomial(n, pm) / n, rng.binomial(n, pz) / n,
                             shots_minus=n, shots_zero=n)
        d = np.abs([fit.rates.lambda_ion - 0.31, fit.rates.lambda_rec - 0.19])
        inside += np.all(d < 3 * fit.rate_errors)
    assert inside >= 0.9 * 200


def test_flip_accelerating_data_is_mismatch():
    t = FLIP_T
    y = 0.02 * np.expm1(0.1 * t)  # grows without bound instead of saturating
    with pytest.raises(ModelMismatchError):
        fit_flip_curve(t, y)


def test_wilson_sigma_positive_at_edges():
    s = wilson_sigma(np.array([0, 50, 100]), 100)
    assert np.all(s > 0)
    assert s[1] == pytest.approx(np.sqrt(0.25 / 100), rel=0.02)


def test_flip_fractions_from_shots():
    pre = np.array([0, 0, 0, 1, 1])
    post = np.array([0, 1, 1, 1, 0])
    fm, nm, fz, nz = flip_probabilities_from_shots(pre, post)
    assert (fm, nm, fz, nz) == (pytest.approx(2 / 3), 3, 0.5, 2)

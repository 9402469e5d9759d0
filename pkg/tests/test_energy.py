import math
import warnings

import numpy as np
import pytest

from nvpd.core import wavelength_to_energy
from nvpd.inference.energy import (DIAMOND_BAND_GAP_EV, ION_FIT_MAX_ENERGY, EnergyFitParams,
                                   ExtrapolationWarning, band_gap_check, energy_model_rate,
                                   fit_ionization_energy)
from nvpd.inference.nls import FitError

ION = EnergyFitParams(1.0, 2.60, 0.069)
REC = EnergyFitParams(1.0, 2.94, 0.069)


def trapezoid_oracle(p, hw, n=1_000_000):
    """Direct trapezoid rule on the unsubstituted integrand over [E0, hw + 10 sigma]."""
    e = np.linspace(p.E0, hw + 10 * p.sigma_width, n)
    f = np.sqrt(e - p.E0) * np.exp(-0.5 * ((e - hw) / p.sigma_width) ** 2)
    return p.A * np.trapezoid(f, e)


def test_narrow_gaussian_limit():
    p = EnergyFitParams(1.0, 2.6, 1e-5)
    assert energy_model_rate(p, 2.5) == pytest.approx(0.0, abs=1e-300)
    for hw in (2.7, 3.0):
        expected = math.sqrt(hw - 2.6) * 1e-5 * math.sqrt(2 * math.pi)
        assert energy_model_rate(p, hw) == pytest.approx(expected, rel=1e-3)


def test_positive_at_band_edge():
    assert energy_model_rate(ION, 2.60) > 0


def test_increasing_over_blue_grid():
    hw = wavelength_to_energy(np.linspace(520, 435, 40))
    r = energy_model_rate(ION, hw)
    assert np.all(np.diff(r) > 0)
    oracle = np.array([trapezoid_oracle(ION, h, 200_000) for h in hw])
    assert np.all(np.diff(oracle) > 0)


@pytest.mark.parametrize("hw", np.linspace(2.3, 2.9, 7))
def test_quadrature_matches_trapezoid(hw):
    assert energy_model_rate(ION, hw) == pytest.approx(trapezoid_oracle(ION, hw), rel=1e-6)


def test_array_input_shape():
    out = energy_model_rate(ION, np.array([[2.5, 2.6], [2.7, 2.8]]))
    assert out.shape == (2, 2)


def _noisy(p, energies, rng, level=0.05):
    y0 = energy_model_rate(p, energies)
    return y0 * (1 + level * rng.standard_normal(energies.size)), level * y0


def test_ionization_energy_recovery():
    e = wavelength_to_energy(np.linspace(435, 520, 10))
    rng = np.random.default_rng(260)
    y, s = _noisy(ION, e, rng)
    fit = fit_ionization_energy(e, y, sigma=s)
    assert fit.params.E0 == pytest.approx(2.60, abs=0.02)
    assert fit.params.sigma_width == pytest.approx(0.069, rel=0.3)
    assert not fit.sigma_fixed and fit.n_used == 10


def test_recombination_energy_with_fixed_width():
    e = wavelength_to_energy(np.array([435.0, 440.0, 445.0, 450.0]))
    rng = np.random.default_rng(294)
    y, s = _noisy(REC, e, rng)
    with pytest.warns(ExtrapolationWarning):
        fit = fit_ionization_energy(e, y, sigma=s, fix_sigma=0.069)
    assert fit.params.E0 == pytest.approx(2.94, abs=0.05)
    assert fit.sigma_fixed and fit.params.sigma_width == 0.069


def test_exact_data_recovered_exactly():
    e = wavelength_to_energy(np.linspace(435, 520, 10))
    fit = fit_ionization_energy(e, energy_model_rate(ION, e))
    assert (fit.params.A, fit.params.E0, fit.params.sigma_width) == pytest.approx((1.0, 2.60, 0.069), rel=1e-6)


def test_energy_cutoff_drops_high_energy_points():
    e = wavelength_to_energy(np.linspace(435, 520, 10))
    assert ION_FIT_MAX_ENERGY == pytest.approx(wavelength_to_energy(445.0))
    fit = fit_ionization_energy(e, energy_model_rate(ION, e), max_energy=ION_FIT_MAX_ENERGY)
    assert fit.n_used == int(np.sum(e <= ION_FIT_MAX_ENERGY))
    assert fit.params.E0 == pytest.approx(2.60, abs=1e-6)


def test_needs_enough_points():
    e = wavelength_to_energy(np.array([440.0, 450.0, 460.0]))
    with pytest.raises(FitError):
        fit_ionization_energy(e, energy_model_rate(ION, e))


def test_band_gap_consistency():
    d = band_gap_check(2.60, 2.94)
    assert d["sum"] == pytest.approx(5.54)
    assert d["band_gap"] == DIAMOND_BAND_GAP_EV == 5.48
    assert d["difference"] == pytest.approx(0.06)


def test_width_gradient_includes_window_edges():
    # photon energy 7 sigma below the edge: the moving window limits matter
    from nvpd.inference.energy import ENERGY_MODEL
    from nvpd.inference.nls import numeric_jacobian
    x = np.array([2.3089471, 2.38934194, 2.41832519, 2.55116498])
    p = np.array([1.83706038, 2.77421646, 0.03129877])
    ja, jn = ENERGY_MODEL.jac(x, p), numeric_jacobian(ENERGY_MODEL, x, p)
    assert ja[:, 2] == pytest.approx(jn[:, 2], rel=1e-6)

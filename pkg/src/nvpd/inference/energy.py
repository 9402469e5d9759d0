"""Photoionization spectrum model: Gaussian energy spread convolved with a
square-root band-edge density of states.

    r(hw) = A * integral over E >= E0 of sqrt(E - E0) * exp(-((E - hw) / sigma)**2 / 2) dE

The integral is evaluated with adaptive Gauss-Kronrod quadrature after the
substitution ``E = E0 + u**2``, which removes the square-root kink at the
band edge. Integration is restricted to ``[max(E0, hw - 8 sigma), hw + 8 sigma]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from ..core import DomainError, wavelength_to_energy
from .nls import CurveModel, FitError, NlsResult, nls_fit

WINDOW = 8.0
QUAD_EPSREL = 1e-10

#: Diamond band gap in eV used for the consistency check of the two band edges.
DIAMOND_BAND_GAP_EV = 5.48

#: Ionization data are used only up to this photon energy (445 nm): the
#: square-root DOS describes the band only close to its edge.
ION_FIT_MAX_ENERGY = wavelength_to_energy(445.0)


class ExtrapolationWarning(UserWarning):
    """Fitted band edge lies outside the sampled photon-energy window."""


@dataclass(frozen=True)
class EnergyFitParams:
    """Amplitude, band-edge energy E0 (eV) and Gaussian width (eV)."""

    A: float
    E0: float
    sigma_width: float

    def __post_init__(self):
        if not self.E0 > 0:
            raise DomainError("E0 must be positive")
        if not self.sigma_width > 0:
            raise DomainError("sigma_width must be positive")


def _u_bounds(e0, hw, sig):
    lo = max(e0, hw - WINDOW * sig)
    hi = hw + WINDOW * sig
    if hi <= lo:
        return None
    return math.sqrt(lo - e0), math.sqrt(hi - e0)


def _quad(fn, a, b):
    val, _ = integrate.quad(fn, a, b, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)
    return val


def _integrals(e0, sig, hw, want_grad=False):
    """Base integral I(hw) (rate with A=1) and optionally dI/dE0, dI/dsigma."""
    b = _u_bounds(e0, hw, sig)
    if b is None:
        return (0.0, 0.0, 0.0) if want_grad else 0.0
    ua, ub = b

    def gauss(u):
        z = (e0 + u * u - hw) / sig
        return math.exp(-0.5 * z * z)

    base = _quad(lambda u: 2.0 * u * u * gauss(u), ua, ub)
    if not want_grad:
        return base
    # d/dE0 of the sqrt factor gives -1/(2 sqrt(E-E0)); after substitution the integrand is smooth
    d_e0 = -_quad(gauss, ua, ub)

    def dsig(u):
        z = (e0 + u * u - hw) / sig
        return 2.0 * u * u * math.exp(-0.5 * z * z) * z * z / sig

    # both window edges move with sigma (the lower one only when above E0, where
    # ua > 0); the Leibniz terms keep the gradient exact for the truncated integral
    edge = WINDOW * math.exp(-0.5 * WINDOW * WINDOW)
    d_sig = _quad(dsig, ua, ub) + edge * (ua + ub)
    return base, d_e0, d_sig


def energy_model_rate(params: EnergyFitParams, hw):
    """Model rate at photon energy ``hw`` (eV); scalar or array."""
    e = np.asarray(hw, dtype=float)
    vals = np.array([params.A * _integrals(params.E0, params.sigma_width, float(h))
                     for h in e.ravel()]).reshape(e.shape)
    return float(vals) if vals.ndim == 0 else vals


def _energy_f(x, p):
    a, e0, sig = p
    return np.array([a * _integrals(e0, sig, h) for h in x])


def _energy_j(x, p):
    a, e0, sig = p
    rows = []
    for h in x:
        base, de0, dsig = _integrals(e0, sig, h, want_grad=True)
        rows.append((base, a * de0, a * dsig))
    return np.array(rows)


ENERGY_MODEL = CurveModel("band_edge_spectrum", ("A", "E0", "sigma_width"), _energy_f, _energy_j)


def fixed_sigma_model(sigma_width: float) -> CurveModel:
    """Two-parameter (A, E0) variant with the Gaussian width held fixed."""

    def f(x, p):
        return _energy_f(x, (p[0], p[1], sigma_width))

    def j(x, p):
        return _energy_j(x, (p[0], p[1], sigma_width))[:, :2]

    return CurveModel("band_edge_spectrum_fixed_sigma", ("A", "E0"), f, j)


@dataclass
class EnergyFit:
    params: EnergyFitParams
    covariance: np.ndarray  # over the free parameters
    result: NlsResult
    sigma_fixed: bool
    n_used: int

    @property
    def E0_err(self) -> float:
        return math.sqrt(max(self.covariance[1, 1], 0.0))


def _profile_amplitude(e, y, w, e0, sig):
    m = _energy_f(e, (1.0, e0, sig))
    den = float(np.sum(w * m * m))
    if den <= 0:
        return None, math.inf
    a = float(np.sum(w * m * y)) / den
    r = y - a * m
    return a, float(np.sum(w * r * r))


def fit_ionization_energy(hw, rates, sigma=None, fix_sigma: Optional[float] = None,
                          max_energy: Optional[float] = None) -> EnergyFit:
    """Fit the band-edge spectrum to linear-rate coefficients.

    Parameters
    ----------
    hw : array_like
        Photon energies in eV.
    rates : array_like
        Linear (one-photon) rate coefficients at those energies.
    sigma : array_like, optional
        Uncertainties of ``rates``; inverse-variance weights are used when
        given, otherwise the fit is unweighted.
    fix_sigma : float, optional
        Hold the Gaussian width fixed (needed when only a handful of points
        are available, as for the recombination branch).
    max_energy : float, optional
        Ignore points above this photon energy. See :data:`ION_FIT_MAX_ENERGY`.
    """
    e = np.asarray(hw, dtype=float)
    y = np.asarray(rates, dtype=float)
    s = None if sigma is None else np.asarray(sigma, dtype=float)
    if e.shape != y.shape:
        raise FitError("energies and rates differ in length")
    if max_energy is not None:
        keep = e <= max_energy + 1e-12
        e, y = e[keep], y[keep]
        s = None if s is None else s[keep]
    need = 3 if fix_sigma is not None else 4
    if e.size < need:
        raise FitError(f"energy fit needs at least {need} points, got {e.size}")
    w = np.ones_like(y) if s is None else 1.0 / s ** 2

    # grid search on (E0, sigma) with the amplitude profiled out
    e0_grid = np.linspace(e.min() - 0.4, e.max() + 0.4, 41)
    sig_grid = [fix_sigma] if fix_sigma is not None else [0.02, 0.04, 0.07, 0.1, 0.15]
    best = None
    for sg in sig_grid:
        for e0 in e0_grid:
            if e0 <= 0:
                continue
            a, cost = _profile_amplitude(e, y, w, e0, sg)
            if a is not None and a > 0 and (best is None or cost < best[0]):
                best = (cost, a, e0, sg)
    if best is None:
        raise FitError("no positive-amplitude starting point for the energy fit")
    _, a0, e00, sg0 = best

    if fix_sigma is not None:
        model = fixed_sigma_model(fix_sigma)
        res = nls_fit(model, e, y, [a0, e00], w, absolute_sigma=s is not None)
        a_f, e0_f = res.params
        sg_f = fix_sigma
    else:
        res = nls_fit(ENERGY_MODEL, e, y, [a0, e00, sg0], w, absolute_sigma=s is not None)
        a_f, e0_f, sg_f = res.params
    if not (e0_f > 0 and sg_f > 0):
        raise FitError(f"energy fit left the physical domain (E0={e0_f:g}, sigma={sg_f:g})")
    if not (e.min() <= e0_f <= e.max()):
        warnings.warn(f"fitted E0={e0_f:.3f} eV lies outside the sampled window "
                      f"[{e.min():.3f}, {e.max():.3f}] eV", ExtrapolationWarning, stacklevel=2)
    params = EnergyFitParams(float(a_f), float(e0_f), float(abs(sg_f)))
    return EnergyFit(params, res.covariance, res, fix_sigma is not None, int(e.size))


def band_gap_check(e_ion: float, e_rec: float, band_gap: float = DIAMOND_BAND_GAP_EV) -> dict:
    """Sum of the two band-edge energies against the band gap."""
    total = e_ion + e_rec
    return {"E_ion": e_ion, "E_rec": e_rec, "sum": total,
            "band_gap": band_gap, "difference": total - band_gap}

"""Saturation, power-law and flip-curve fits built on :func:`nls_fit`."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..core import DomainError
from ..kinetics import PowerLawRate, TwoStateRates, rates_from_flip_fit
from .nls import CurveModel, FitError, ModelMismatchError, NlsResult, nls_fit


# ---------------------------------------------------------------------------
# models

def _sat_f(x, p):
    fs, i_s = p
    return fs * x / (x + i_s)


def _sat_j(x, p):
    fs, i_s = p
    return np.stack([x / (x + i_s), -fs * x / (x + i_s) ** 2], axis=-1)


SATURATION = CurveModel("saturation", ("F_S", "I_S"), _sat_f, _sat_j)

PARABOLA = CurveModel(
    "parabola", ("a", "b"),
    lambda x, p: p[0] * x + p[1] * x * x,
    lambda x, p: np.stack([x, x * x], axis=-1),
)

QUADRATIC = CurveModel(
    "quadratic", ("b",),
    lambda x, p: p[0] * x * x,
    lambda x, p: (x * x)[:, None],
)


def _flip_f(x, p):
    # x[:, 0] = duration, x[:, 1] = branch (0: start NV-, 1: start NV0)
    lam, q = p
    t, branch = x[:, 0], x[:, 1]
    rise = -np.expm1(-lam * t)
    asym = np.where(branch == 0, q, 1.0 - q)
    return asym * rise


def _flip_j(x, p):
    lam, q = p
    t, branch = x[:, 0], x[:, 1]
    rise = -np.expm1(-lam * t)
    asym = np.where(branch == 0, q, 1.0 - q)
    sign = np.where(branch == 0, 1.0, -1.0)
    return np.stack([asym * t * np.exp(-lam * t), sign * rise], axis=-1)


#: Joint model of both flip branches; parameters (lambda_tot, p_inf from NV-).
FLIP_CURVE = CurveModel("flip_curve", ("lambda_tot", "p_inf"), _flip_f, _flip_j)


# ---------------------------------------------------------------------------
# saturation

@dataclass
class SaturationFit:
    F_S: float
    I_S: float
    covariance: np.ndarray
    result: NlsResult
    saturating: bool = True

    def __call__(self, intensity):
        return _sat_f(np.asarray(intensity, dtype=float), (self.F_S, self.I_S))


def _saturation_guess(i, f):
    ok = (i > 0) & (f > 0)
    if ok.sum() >= 2:
        # 1/F = 1/F_S + (I_S/F_S) / I
        slope, icpt = np.polyfit(1.0 / i[ok], 1.0 / f[ok], 1)
        if icpt > 0 and slope > 0:
            return 1.0 / icpt, slope / icpt
    return 1.5 * float(np.max(f)), float(np.median(i[i > 0])) if np.any(i > 0) else 1.0


def fit_saturation(intensity, fluorescence, sigma=None) -> SaturationFit:
    """Fit ``F = F_S * I / (I + I_S)``.

    If the largest power stays below a third of the fitted ``I_S`` the data do
    not constrain the plateau; a warning is issued and ``saturating`` is False.
    """
    i = np.asarray(intensity, dtype=float)
    f = np.asarray(fluorescence, dtype=float)
    if i.size < 2 or i.shape != f.shape:
        raise FitError("saturation fit needs matching arrays of at least two points")
    w = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    res = nls_fit(SATURATION, i, f, _saturation_guess(i, f), w, absolute_sigma=sigma is not None)
    fs, i_s = res.params
    if not (fs > 0 and i_s > 0):
        raise ModelMismatchError(f"saturation fit gave non-physical F_S={fs:g}, I_S={i_s:g}")
    saturating = bool(np.max(i) > i_s / 3.0)
    if not saturating:
        warnings.warn("power grid never approaches saturation; I_S is poorly constrained",
                      RuntimeWarning, stacklevel=2)
    return SaturationFit(float(fs), float(i_s), res.covariance, res, saturating)


# ---------------------------------------------------------------------------
# rate vs power

@dataclass
class PowerLawFit:
    a: float
    b: float
    covariance: np.ndarray
    result: NlsResult

    @property
    def law(self) -> PowerLawRate:
        return PowerLawRate(self.a, self.b)

    @property
    def a_err(self) -> float:
        return math.sqrt(max(self.covariance[0, 0], 0.0))

    @property
    def b_err(self) -> float:
        return math.sqrt(max(self.covariance[1, 1], 0.0))


def fit_rate_vs_power(powers, rates, sigma=None, quadratic_only: bool = False) -> PowerLawFit:
    """Least-squares ``rate = a*p + b*p**2``.

    With ``quadratic_only`` the linear coefficient is pinned to zero (pure
    two-photon regime) and reported with zero variance.
    """
    p = np.asarray(powers, dtype=float)
    r = np.asarray(rates, dtype=float)
    if p.size < 3 or p.shape != r.shape:
        raise FitError("rate-vs-power fit needs at least three matching points")
    w = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    absolute = sigma is not None
    if quadratic_only:
        res = nls_fit(QUADRATIC, p, r, [1.0], w, absolute_sigma=absolute)
        cov = np.zeros((2, 2))
        cov[1, 1] = res.covariance[0, 0]
        return PowerLawFit(0.0, float(res.params[0]), cov, res)
    res = nls_fit(PARABOLA, p, r, [0.0, 0.0], w, absolute_sigma=absolute)
    return PowerLawFit(float(res.params[0]), float(res.params[1]), res.covariance, res)


# ---------------------------------------------------------------------------
# flip curves

@dataclass
class FlipFit:
    rates: TwoStateRates
    p_infinity: float
    lambda_tot: float
    covariance: np.ndarray  # of (lambda_tot, p_inf)
    result: NlsResult

    @property
    def rate_covariance(self) -> np.ndarray:
        """Covariance of (lambda_ion, lambda_rec) by linear propagation."""
        lam, q = self.lambda_tot, self.p_infinity
        jac = np.array([[q, lam], [1.0 - q, -lam]])
        return jac @ self.covariance @ jac.T

    @property
    def rate_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.rate_covariance), 0.0, None))


def wilson_sigma(successes, trials, z: float = 1.0) -> np.ndarray:
    """Half-width of the Wilson score interval at ``z`` standard deviations.

    Stays positive for 0 or ``trials`` successes, so it is usable as a fit
    uncertainty for binomial fractions.
    """
    k = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    ph = k / n
    return z / (1.0 + z * z / n) * np.sqrt(ph * (1.0 - ph) / n + z * z / (4.0 * n * n))


def _flip_guess(t, y, branch):
    tmax = t.max()
    late = t >= 0.6 * tmax
    plateau_minus = float(np.mean(y[(branch == 0) & late])) if np.any((branch == 0) & late) else np.nan
    plateau_zero = float(np.mean(y[(branch == 1) & late])) if np.any((branch == 1) & late) else np.nan
    if np.isfinite(plateau_minus) and np.isfinite(plateau_zero) and plateau_minus + plateau_zero > 0:
        q = plateau_minus / (plateau_minus + plateau_zero)
        scale = plateau_minus + plateau_zero
    elif np.isfinite(plateau_minus):
        q, scale = 0.5, 2 * plateau_minus
    else:
        q, scale = 0.5, 2 * plateau_zero
    q = min(max(q, 0.02), 0.98)
    # sum of branches rises as 1 - exp(-lambda t); use the half-rise time
    asym = np.where(branch == 0, q, 1.0 - q)
    frac = np.clip(y / np.maximum(asym, 1e-6), 0.0, 0.999)
    ok = (t > 0) & (frac > 0.05) & (frac < 0.95)
    if np.any(ok):
        lam = float(np.median(-np.log1p(-frac[ok]) / t[ok]))
    else:
        lam = 1.0 / np.median(t[t > 0])
    if not lam > 0:
        lam = 1.0 / tmax
    return lam, q, scale


def fit_flip_curve(durations, flip_minus, flip_zero=None, shots_minus=None, shots_zero=None,
                   sigma_minus=None, sigma_zero=None) -> FlipFit:
    """Joint exponential fit of the flip probability after NV- and NV0 starts.

    Both branches share ``lambda_tot``; their asymptotes are ``p_inf`` and
    ``1 - p_inf`` with ``p_inf = lambda_ion / lambda_tot``. ``flip_zero`` may
    be omitted (NV- starts only). Uncertainties come from ``sigma_*`` if
    given, else from Wilson intervals when shot numbers are given, else the
    fit is unweighted and the covariance is scaled by the residual.

    Raises
    ------
    ModelMismatchError
        If the fitted pumping rate is not positive or the asymptote lies
        clearly outside [0, 1].
    """
    t = np.asarray(durations, dtype=float)
    ym = np.asarray(flip_minus, dtype=float)
    if t.size < 4:
        raise FitError("flip-curve fit needs at least four durations")
    if np.any(t < 0):
        raise DomainError("durations must be non-negative")
    xs = [np.column_stack([t, np.zeros_like(t)])]
    ys = [ym]
    sig = [_branch_sigma(ym, shots_minus, sigma_minus)]
    if flip_zero is not None:
        yz = np.asarray(flip_zero, dtype=float)
        xs.append(np.column_stack([t, np.ones_like(t)]))
        ys.append(yz)
        sig.append(_branch_sigma(yz, shots_zero, sigma_zero))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    weighted = all(s is not None for s in sig)
    w = 1.0 / np.concatenate(sig) ** 2 if weighted else None

    lam0, q0, _ = _flip_guess(x[:, 0], y, x[:, 1])
    best = None
    # a negative start lets accelerating (non-saturating) data reveal itself
    for scale in (1.0, 0.3, 3.0, -1.0):
        try:
            res = nls_fit(FLIP_CURVE, x, y, [lam0 * scale, q0], w, absolute_sigma=weighted)
        except FitError:
            continue
        if best is None or res.residual < best.residual:
            best = res
    if best is None:
        raise FitError("flip-curve fit failed from every starting point")
    lam, q = best.params
    if not lam > 0:
        raise ModelMismatchError(f"fitted pumping rate {lam:g} is not positive")
    q_err = best.stderr[1]
    outside = max(-q, q - 1.0)
    if outside > 0 and (outside > 3 * q_err or q_err > 1.0):
        raise ModelMismatchError(f"fitted asymptote {q:g} +- {q_err:g} is not a probability; "
                                 "data do not saturate")
    q_c = min(max(q, 0.0), 1.0)
    return FlipFit(rates_from_flip_fit(q_c, lam), float(q), float(lam), best.covariance, best)


def _branch_sigma(y, shots, sigma):
    if sigma is not None:
        return np.broadcast_to(np.asarray(sigma, dtype=float), y.shape).copy()
    if shots is not None:
        n = np.broadcast_to(np.asarray(shots, dtype=float), y.shape)
        return wilson_sigma(np.round(y * n), n)
    return None


def flip_probabilities_from_shots(pre_states, post_states):
    """Empirical flip fractions split by the pre-probe state.

    Returns ``(flip_minus, n_minus, flip_zero, n_zero)``.
    """
    pre = np.asarray(pre_states)
    post = np.asarray(post_states)
    out = []
    for s in (0, 1):
        sel = pre == s
        n = int(sel.sum())
        out += [float(np.mean(post[sel] != s)) if n else float("nan"), n]
    return tuple(out)

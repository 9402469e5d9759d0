"""Rate-equation models of the photo-induced charge dynamics.

Two-state model
    NV- --lambda_ion--> NV0 and NV0 --lambda_rec--> NV-, solved in closed form.
Power laws
    rate(p) = a*p + b*p**2 for each direction.
Four-level model
    NV- ground (G), excited (E), metastable (M) and an effective NV0 level (0),
    whose steady state sets the fluorescence saturation curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ChargeState, DomainError, check_power

PROB_TOL = 1e-12


class NoSteadyStateError(DomainError):
    """Both transition rates vanish, so no unique stationary state exists."""


@dataclass(frozen=True)
class TwoStateRates:
    """Ionization (NV- -> NV0) and recombination (NV0 -> NV-) rates in 1/ms."""

    lambda_ion: float
    lambda_rec: float

    def __post_init__(self):
        if not (self.lambda_ion >= 0 and self.lambda_rec >= 0):
            raise DomainError(f"rates must be non-negative: {self}")

    @classmethod
    def from_lifetimes(cls, t_minus: float, t_zero: float) -> "TwoStateRates":
        """Rates from mean dwell times (ms) in NV- and NV0."""
        if not (t_minus > 0 and t_zero > 0):
            raise DomainError("lifetimes must be positive")
        return cls(1.0 / t_minus, 1.0 / t_zero)

    @property
    def total(self) -> float:
        return self.lambda_ion + self.lambda_rec

    @property
    def lifetime_minus(self) -> float:
        return math.inf if self.lambda_ion == 0 else 1.0 / self.lambda_ion

    @property
    def lifetime_zero(self) -> float:
        return math.inf if self.lambda_rec == 0 else 1.0 / self.lambda_rec

    def leaving(self, state: ChargeState) -> float:
        """Rate of leaving ``state``."""
        return self.lambda_ion if state == ChargeState.NEGATIVE else self.lambda_rec

    def generator(self) -> np.ndarray:
        """Column-stochastic generator acting on (p_minus, p_zero)."""
        return np.array([[-self.lambda_ion, self.lambda_rec],
                         [self.lambda_ion, -self.lambda_rec]])


@dataclass(frozen=True)
class ChargeDistribution:
    p_minus: float
    p_zero: float

    def __post_init__(self):
        if abs(self.p_minus + self.p_zero - 1.0) > PROB_TOL:
            raise DomainError(f"probabilities must sum to 1: {self}")
        if not (-PROB_TOL <= self.p_minus <= 1 + PROB_TOL):
            raise DomainError(f"probability out of range: {self}")

    @classmethod
    def pure(cls, state: ChargeState) -> "ChargeDistribution":
        state = ChargeState.parse(state)
        return cls(1.0, 0.0) if state == ChargeState.NEGATIVE else cls(0.0, 1.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.p_minus, self.p_zero])


def steady_state(r: TwoStateRates) -> ChargeDistribution:
    """Detailed-balance populations, p_minus = T_minus / (T_minus + T_zero)."""
    tot = r.total
    if tot <= 0:
        raise NoSteadyStateError("both rates are zero")
    p_zero = r.lambda_ion / tot
    return ChargeDistribution(1.0 - p_zero, p_zero)


def evolve(r: TwoStateRates, p0: ChargeDistribution, t: float) -> ChargeDistribution:
    """Populations after illuminating for ``t`` ms starting from ``p0``.

    Uses p(t) = p_inf + (p0 - p_inf) * exp(-lambda_tot * t); for a pure
    NV- start this is p_inf - (lambda_ion/lambda_tot) e^(-lambda_tot t) (-1, 1).
    """
    if not t >= 0:
        raise DomainError(f"time must be non-negative, got {t}")
    tot = r.total
    if tot == 0 or t == 0:
        return ChargeDistribution(p0.p_minus, p0.p_zero)
    decay = math.exp(-tot * t)
    # excess NV0 population relative to steady state
    q_inf = r.lambda_ion / tot
    p_zero = q_inf + (p0.p_zero - q_inf) * decay
    p_zero = min(max(p_zero, 0.0), 1.0)
    return ChargeDistribution(1.0 - p_zero, p_zero)


def flip_probability(r: TwoStateRates, initial: ChargeState, t: float) -> float:
    """Probability that the charge state at ``t`` differs from ``initial``."""
    if not t >= 0:
        raise DomainError(f"time must be non-negative, got {t}")
    initial = ChargeState.parse(initial)
    tot = r.total
    if tot == 0:
        return 0.0
    rise = -math.expm1(-tot * t)
    return r.leaving(initial) / tot * rise


def rates_from_flip_fit(p_inf_from_minus: float, lambda_tot: float) -> TwoStateRates:
    """Split a pumping rate into directions using the NV- -> NV0 asymptote."""
    if not (0.0 <= p_inf_from_minus <= 1.0):
        raise DomainError(f"asymptote must lie in [0, 1], got {p_inf_from_minus}")
    if not lambda_tot > 0:
        raise DomainError(f"pumping rate must be positive, got {lambda_tot}")
    q, lam = float(p_inf_from_minus), float(lambda_tot)
    return TwoStateRates(q * lam, (1.0 - q) * lam)


@dataclass(frozen=True)
class PowerLawRate:
    """rate(p) = a*p + b*p**2 with p in uW.

    Fitted values may come out slightly negative from noise; they are kept
    as-is and only clamped via :meth:`clamped` when reported.
    """

    a: float
    b: float

    def __call__(self, power_uw):
        p = np.asarray(power_uw, dtype=float)
        out = self.a * p + self.b * p * p
        return float(out) if out.ndim == 0 else out

    def clamped(self) -> "PowerLawRate":
        return PowerLawRate(max(self.a, 0.0), max(self.b, 0.0))


def power_scaled_rates(ion: PowerLawRate, rec: PowerLawRate, power_uw: float) -> TwoStateRates:
    p = check_power(power_uw)
    return TwoStateRates(max(ion(p), 0.0), max(rec(p), 0.0))


# ---------------------------------------------------------------------------
# four-level saturation model

@dataclass(frozen=True)
class FourLevelParams:
    """Cross-sections (1/(uW ms)) and decay rates (1/ms) of the four-level model.

    ``I0`` is the NV0 saturation power in uW; it enters the effective
    recombination rate r_re = sigma_re * I * I / (I + I0).
    """

    sigma: float
    sigma_ion: float
    sigma_re: float
    lambda_EG: float
    lambda_EM: float
    lambda_MG: float
    I0: float

    def __post_init__(self):
        vals = (self.sigma, self.sigma_ion, self.sigma_re, self.lambda_EG,
                self.lambda_EM, self.lambda_MG, self.I0)
        if any(not v >= 0 for v in vals):
            raise DomainError(f"four-level parameters must be non-negative: {self}")
        if not self.lambda_EG > 0:
            raise DomainError("lambda_EG must be positive")

    def recombination_rate(self, intensity: float) -> float:
        if intensity == 0:
            return 0.0
        return self.sigma_re * intensity * intensity / (intensity + self.I0)

    def generator(self, intensity: float) -> np.ndarray:
        """Column generator Q with dp/dt = Q p for p = (G, E, M, 0)."""
        i = intensity
        r_re = self.recombination_rate(i)
        exc = i * self.sigma
        ion = i * self.sigma_ion
        return np.array([
            [-exc, self.lambda_EG, self.lambda_MG, r_re],
            [exc, -self.lambda_EG - self.lambda_EM - ion, 0.0, 0.0],
            [0.0, self.lambda_EM, -self.lambda_MG, 0.0],
            [0.0, ion, 0.0, -r_re],
        ])

    def saturation_population(self) -> float:
        """Closed-form p_S of the saturation law p_E = p_S I / (I + I_S)."""
        denom = 1.0 + self.lambda_EM / self.lambda_MG + self.sigma_ion / self.sigma
        if self.sigma_ion > 0:
            denom += self.sigma_ion / self.sigma_re
        return 1.0 / denom

    def saturation_power(self) -> float:
        """Closed-form I_S of the saturation law, in uW."""
        num = self.lambda_EG + self.lambda_EM
        den = self.sigma + self.sigma * self.lambda_EM / self.lambda_MG + self.sigma_ion
        if self.sigma_ion > 0:
            num += self.I0 * self.sigma * self.sigma_ion / self.sigma_re
            den += self.sigma * self.sigma_ion / self.sigma_re
        return num / den


@dataclass(frozen=True)
class FourLevelState:
    p_G: float
    p_E: float
    p_M: float
    p_0: float
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.p_G, self.p_E, self.p_M, self.p_0])


def four_level_steady_state(fp: FourLevelParams, intensity: float) -> FourLevelState:
    """Stationary populations of the four-level model at illumination ``intensity``.

    Solved directly from the generator with one balance row replaced by the
    normalization. Without light there is no closed loop; the ground state is
    returned with ``degenerate=True``.
    """
    i = check_power(intensity)
    if i == 0:
        return FourLevelState(1.0, 0.0, 0.0, 0.0, degenerate=True)
    q = fp.generator(i)
    # columns of q sum to zero, so the last balance row is redundant
    a = q.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(4)
    rhs[-1] = 1.0
    try:
        p = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return FourLevelState(1.0, 0.0, 0.0, 0.0, degenerate=True)
    if not np.all(np.isfinite(p)):
        return FourLevelState(1.0, 0.0, 0.0, 0.0, degenerate=True)
    p = np.clip(p, 0.0, 1.0)
    p /= p.sum()
    return FourLevelState(*map(float, p))


def saturation_curve(fp: FourLevelParams, intensities, efficiency: float = 1.0):
    """Fluorescence ``efficiency * lambda_EG * p_E`` on a power grid.

    Returns ``(intensities, fluorescence)`` as arrays.
    """
    grid = np.asarray(intensities, dtype=float)
    if grid.size == 0 or np.any(grid < 0):
        raise DomainError("power grid must be non-empty and non-negative")
    fl = np.array([efficiency * fp.lambda_EG * four_level_steady_state(fp, i).p_E
                   for i in grid])
    return grid, fl

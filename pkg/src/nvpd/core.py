"""Shared domain types and unit conventions.

Units are fixed across the package: time in ms, rates in 1/ms, optical power
in uW, photon energy in eV and fluorescence in counts/ms.
"""
from __future__ import annotations

import enum

import numpy as np

#: h*c in eV*nm (CODATA 2018, exact SI definitions).
HC_EV_NM = 1239.8419843320026


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ChargeState(enum.IntEnum):
    """Charge state of the defect.

    ``NEGATIVE`` (NV-) is the bright state under red-filtered detection,
    ``NEUTRAL`` (NV0) the dark one. Integer values double as HMM state
    indices and as array codes in traces.
    """

    NEGATIVE = 0
    NEUTRAL = 1

    @property
    def label(self) -> str:
        return "NV-" if self is ChargeState.NEGATIVE else "NV0"

    @classmethod
    def parse(cls, value) -> "ChargeState":
        if isinstance(value, ChargeState):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower()
        if key in ("nv-", "minus", "negative", "0"):
            return cls.NEGATIVE
        if key in ("nv0", "zero", "neutral", "1"):
            return cls.NEUTRAL
        raise DomainError(f"unknown charge state {value!r}")

    def other(self) -> "ChargeState":
        return ChargeState(1 - int(self))


def wavelength_to_energy(wavelength_nm):
    """Photon energy in eV for a vacuum wavelength in nm.

    Accepts scalars or arrays; every element must be positive.
    """
    w = np.asarray(wavelength_nm, dtype=float)
    if np.any(~(w > 0)):
        raise DomainError("wavelength must be positive")
    e = HC_EV_NM / w
    return float(e) if e.ndim == 0 else e


def energy_to_wavelength(energy_ev):
    """Vacuum wavelength in nm for a photon energy in eV."""
    e = np.asarray(energy_ev, dtype=float)
    if np.any(~(e > 0)):
        raise DomainError("photon energy must be positive")
    w = HC_EV_NM / e
    return float(w) if w.ndim == 0 else w


def check_power(power_uw) -> float:
    p = float(power_uw)
    if not p >= 0:
        raise DomainError(f"power must be non-negative, got {power_uw}")
    return p

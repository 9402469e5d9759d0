"""Versioned JSON run configurations, validated before anything executes.

Every model forbids unknown keys. A manifest written by a previous run is also
accepted as a configuration: its embedded ``config`` block is re-validated.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .core import ChargeState
from .kinetics import TwoStateRates
from .sim import EmissionModel, Pulse, PulseSequence

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RatesBlock(_Strict):
    """Either rates (1/ms) or lifetimes (ms); lifetimes win when both are given."""

    lambda_ion: Optional[float] = Field(None, ge=0)
    lambda_rec: Optional[float] = Field(None, ge=0)
    T_minus_ms: Optional[float] = Field(None, gt=0)
    T_zero_ms: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _complete(self):
        has_rates = self.lambda_ion is not None and self.lambda_rec is not None
        has_life = self.T_minus_ms is not None and self.T_zero_ms is not None
        if not (has_rates or has_life):
            raise ValueError("give lambda_ion and lambda_rec, or T_minus_ms and T_zero_ms")
        return self

    def to_rates(self) -> TwoStateRates:
        if self.T_minus_ms is not None and self.T_zero_ms is not None:
            return TwoStateRates.from_lifetimes(self.T_minus_ms, self.T_zero_ms)
        return TwoStateRates(self.lambda_ion, self.lambda_rec)


class EmissionBlock(_Strict):
    fl_minus: float = Field(ge=0)
    fl_zero: float = Field(ge=0)
    bin_width_ms: float = Field(1.0, gt=0)

    def to_model(self) -> EmissionModel:
        return EmissionModel(self.fl_minus, self.fl_zero, self.bin_width_ms)


class PulseBlock(_Strict):
    wavelength_nm: float = Field(gt=0)
    power_uw: float = Field(ge=0)
    duration_ms: float = Field(ge=0)
    rates: RatesBlock

    def to_pulse(self) -> Pulse:
        return Pulse(self.wavelength_nm, self.power_uw, self.duration_ms)


class _Base(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = Field(0, ge=0)


# ---------------------------------------------------------------------------
# simulate

class SimTraceConfig(_Base):
    preset: Optional[Literal["fig1b"]] = None
    rates: Optional[RatesBlock] = None
    emission: Optional[EmissionBlock] = None
    duration_ms: Optional[float] = Field(None, gt=0)
    initial: Optional[Literal["NV-", "NV0"]] = None
    seeds: Optional[list[int]] = Field(None, min_length=1)
    include_truth: bool = True

    @model_validator(mode="after")
    def _filled(self):
        if self.preset is None and (self.rates is None or self.emission is None or self.duration_ms is None):
            raise ValueError("without a preset, rates, emission and duration_ms are required")
        return self


class SimHistogramConfig(_Base):
    p_minus: float = Field(ge=0, le=1)
    emission: EmissionBlock
    readout_ms: float = Field(gt=0)
    readout_rates: RatesBlock = RatesBlock(lambda_ion=0.0, lambda_rec=0.0)
    shots: int = Field(ge=1)


class SimShotsConfig(_Base):
    init: PulseBlock
    probe: PulseBlock
    detect: PulseBlock
    emission: EmissionBlock
    shots: int = Field(ge=1)
    initial: Literal["NV-", "NV0"] = "NV-"
    include_truth: bool = True

    def sequence(self) -> PulseSequence:
        return PulseSequence(self.init.to_pulse(), self.probe.to_pulse(), self.detect.to_pulse())

    def rate_model(self) -> dict:
        return {"init": self.init.rates.to_rates(), "probe": self.probe.rates.to_rates(),
                "detect": self.detect.rates.to_rates()}

    def initial_state(self) -> ChargeState:
        return ChargeState.parse(self.initial)


# ---------------------------------------------------------------------------
# fit

class _FitBase(_Base):
    input: str
    plot_data: bool = True


class FitTraceConfig(_FitBase):
    max_iter: int = Field(1000, ge=1)
    tol: float = Field(1e-10, gt=0)


class FitHistogramConfig(_FitBase):
    min_separation: float = Field(1.0, ge=0)


class FitFlipConfig(_FitBase):
    pass


class FitRatePowerConfig(_FitBase):
    quadratic_only: bool = False


class FitSaturationConfig(_FitBase):
    pass


class FitEnergyConfig(_FitBase):
    branch: Literal["ionization", "recombination"] = "ionization"
    fix_sigma: Optional[float] = Field(None, gt=0)
    weighted: bool = True
    #: Largest photon energy used (eV). ``None`` applies the branch default:
    #: the near-band-edge cutoff for ionization, no cutoff for recombination.
    max_energy_ev: Optional[float] = Field(None, gt=0)
    use_cutoff: bool = True


# ---------------------------------------------------------------------------
# reproduce

class ReproduceConfig(_Base):
    jobs: int = Field(1, ge=1)
    shots: Optional[int] = Field(None, ge=100)
    cycles: Optional[float] = Field(None, gt=0)
    init_duration_ms: Optional[float] = Field(None, gt=0)


SCHEMAS = {
    ("simulate", "trace"): SimTraceConfig,
    ("simulate", "histogram"): SimHistogramConfig,
    ("simulate", "shots"): SimShotsConfig,
    ("fit", "trace-hmm"): FitTraceConfig,
    ("fit", "histogram"): FitHistogramConfig,
    ("fit", "flip"): FitFlipConfig,
    ("fit", "rate-power"): FitRatePowerConfig,
    ("fit", "saturation"): FitSaturationConfig,
    ("fit", "energy"): FitEnergyConfig,
}
for _fig in ("fig3", "fig4", "fig5c", "fig6"):
    SCHEMAS[("reproduce", _fig)] = ReproduceConfig


def unwrap_manifest(raw: dict) -> dict:
    """Return the config block of a manifest, or ``raw`` itself for a plain config."""
    if isinstance(raw, dict) and "manifest_version" in raw and "config" in raw:
        cfg = dict(raw["config"])
        cfg.setdefault("seed", raw.get("seed", 0))
        return cfg
    return raw


def load_config(command: str, subcommand: str, raw: Optional[dict], base_dir: Optional[Path] = None):
    """Validate ``raw`` against the schema of ``command subcommand``.

    Relative ``input`` paths are resolved against ``base_dir`` (the directory
    of the config file).
    """
    schema = SCHEMAS[(command, subcommand)]
    data = unwrap_manifest(raw) if raw is not None else {}
    cfg = schema.model_validate(data)
    if base_dir is not None and isinstance(cfg, _FitBase):
        p = Path(cfg.input)
        if not p.is_absolute() and not cfg.input.startswith("bundled:"):
            cfg = cfg.model_copy(update={"input": str(base_dir / p)})
    return cfg

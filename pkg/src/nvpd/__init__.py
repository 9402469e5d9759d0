"""Simulation and inference of photo-induced NV charge-state dynamics."""
from .core import (HC_EV_NM, ChargeState, DomainError, energy_to_wavelength,
                   wavelength_to_energy)
from .kinetics import (ChargeDistribution, FourLevelParams, FourLevelState, PowerLawRate,
                       TwoStateRates, evolve, flip_probability, four_level_steady_state,
                       power_scaled_rates, rates_from_flip_fit, saturation_curve, steady_state)
from .sim import (EmissionModel, PhotonTrace, Pulse, PulseSequence, ShotRecord, ShotRecords,
                  derive_rng, simulate_correlated_experiment, simulate_detection_histogram,
                  simulate_trace)

__version__ = "0.1.0"

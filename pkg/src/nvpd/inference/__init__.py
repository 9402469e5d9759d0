"""Estimators: HMM trace analysis, Poisson mixtures, curve and spectral fits."""
from .nls import (CurveModel, FitError, ModelMismatchError, NlsResult, RankDeficientError,
                  nls_fit, numeric_jacobian)
from .hmm import (HmmEstimate, forward_log_likelihood, hmm_fit, rates_from_transition,
                  transition_matrix, viterbi_path)
from .mixture import (PoissonMixture, ThresholdClassifier, UnresolvedMixtureError,
                      fit_poisson_mixture, make_threshold_classifier, misclassification,
                      population_from_mixture)
from .curves import (FLIP_CURVE, PARABOLA, QUADRATIC, SATURATION, FlipFit, PowerLawFit,
                     SaturationFit, fit_flip_curve, fit_rate_vs_power, fit_saturation,
                     flip_probabilities_from_shots, wilson_sigma)
from .energy import (DIAMOND_BAND_GAP_EV, ENERGY_MODEL, ION_FIT_MAX_ENERGY, EnergyFit,
                     EnergyFitParams, ExtrapolationWarning, band_gap_check, energy_model_rate,
                     fit_ionization_energy, fixed_sigma_model)

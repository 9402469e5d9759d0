import numpy as np
import pytest
from scipy import stats

from nvpd.kinetics import TwoStateRates, steady_state
from nvpd.sim import EmissionModel, simulate_detection_counts, simulate_detection_histogram
from nvpd.inference.mixture import (PoissonMixture, UnresolvedMixtureError, fit_poisson_mixture,
                                    make_threshold_classifier, misclassification,
                                    population_from_mixture)
from nvpd.inference.nls import FitError

READOUT = EmissionModel(10.0, 1.0)  # 3 ms readout -> means 30 and 3
NO_RATES = TwoStateRates(0.0, 0.0)


def test_population_ratio():
    assert population_from_mixture(PoissonMixture(3, 30, 50, 50)) == 0.5
    assert population_from_mixture(PoissonMixture(3, 30, 100, 0)) == 0.0
    assert population_from_mixture(PoissonMixture(3, 30, 30, 70)) == pytest.approx(0.7)


def test_recovers_population_from_synthetic_histogram():
    h = simulate_detection_histogram(0.7, READOUT, NO_RATES, 3.0, 100000, seed=21)
    m = fit_poisson_mixture(h)
    assert m.resolved and m.converged
    assert m.amp_minus + m.amp_zero == pytest.approx(100000)
    assert (m.mu_zero, m.mu_minus) == pytest.approx((3.0, 30.0), rel=0.02)
    assert population_from_mixture(m) == pytest.approx(0.7, abs=0.02)


def test_fig1b_population_from_histogram():
    p = steady_state(TwoStateRates.from_lifetimes(56.6, 465.0)).p_minus
    h = simulate_detection_histogram(p, READOUT, NO_RATES, 3.0, 100000, seed=22)
    assert population_from_mixture(fit_poisson_mixture(h)) == pytest.approx(0.1085, abs=0.005)


def test_single_poisson_is_flagged():
    h = np.bincount(np.random.default_rng(1).poisson(12.0, 20000))
    m = fit_poisson_mixture(h)
    small = min(m.amp_minus, m.amp_zero) / 20000
    assert (not m.resolved) or small < 0.02


def test_too_few_shots():
    with pytest.raises(FitError):
        fit_poisson_mixture([10, 20, 5])


def test_rescaling_invariance():
    h = simulate_detection_histogram(0.55, READOUT, NO_RATES, 3.0, 5000, seed=4)
    base = population_from_mixture(fit_poisson_mixture(h))
    for k in (2, 3, 7):
        assert population_from_mixture(fit_poisson_mixture(h * k)) == pytest.approx(base, abs=0.005)


def exhaustive_threshold(mu0, mu1, prior, tmax=200):
    """Oracle: scan every integer threshold by summing pmfs directly."""
    k = np.arange(0, 400)
    p0 = stats.poisson.pmf(k, mu0)
    p1 = stats.poisson.pmf(k, mu1)
    errs = [prior * p1[:t].sum() + (1 - prior) * p0[t:].sum() for t in range(tmax + 1)]
    return int(np.argmin(errs)), errs


def test_threshold_equal_priors():
    m = PoissonMixture(3.0, 30.0, 5000, 5000)
    c = make_threshold_classifier(m)
    t_oracle, errs = exhaustive_threshold(3.0, 30.0, 0.5)
    assert c.threshold == t_oracle
    assert 3 < c.threshold < 30
    assert errs[t_oracle] < 0.01
    assert c.error == pytest.approx(errs[t_oracle], abs=1e-12)


@pytest.mark.parametrize("mu0, mu1, prior", [(3, 30, 0.7), (0.5, 8, 0.2), (2, 12, 0.9), (5, 20, 0.5)])
def test_threshold_matches_exhaustive_scan(mu0, mu1, prior):
    m = PoissonMixture(mu0, mu1, 1000 * (1 - prior), 1000 * prior)
    assert make_threshold_classifier(m).threshold == exhaustive_threshold(mu0, mu1, prior)[0]


def test_unresolved_mixture_rejected():
    with pytest.raises(UnresolvedMixtureError):
        make_threshold_classifier(PoissonMixture(10.0, 10.2, 50, 50, resolved=False))


def test_empirical_confusion_matches_fidelities():
    counts, truth = simulate_detection_counts(0.7, READOUT, NO_RATES, 3.0, 100000, seed=31)
    m = fit_poisson_mixture(np.bincount(counts))
    c = make_threshold_classifier(m)
    pred = c.classify(counts)
    f_minus = np.mean(pred[truth == 0] == 0)
    f_zero = np.mean(pred[truth == 1] == 1)
    assert abs(f_minus - c.fidelity_minus) < 0.005
    assert abs(f_zero - c.fidelity_zero) < 0.005


def test_misclassification_vectorised():
    e = misclassification(3.0, 30.0, 0.5, [0, 1000])
    assert e == pytest.approx([0.5, 0.5])

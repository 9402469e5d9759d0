"""Two-component Poisson mixture for single-shot readout histograms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from ..core import ChargeState, DomainError
from .nls import FitError


class UnresolvedMixtureError(FitError):
    """The two Poisson components cannot be told apart."""


@dataclass
class PoissonMixture:
    """Component means and amplitudes; amplitudes add up to the number of shots."""

    mu_zero: float
    mu_minus: float
    amp_zero: float
    amp_minus: float
    log_likelihood: float = float("nan")
    n_iterations: int = 0
    converged: bool = True
    resolved: bool = True

    @property
    def total(self) -> float:
        return self.amp_zero + self.amp_minus

    def pmf(self, k):
        """Expected histogram (counts per bin) at photon numbers ``k``."""
        k = np.asarray(k)
        return (self.amp_zero * stats.poisson.pmf(k, self.mu_zero)
                + self.amp_minus * stats.poisson.pmf(k, self.mu_minus))

    def to_json_dict(self) -> dict:
        return {
            "model": "poisson_mixture",
            "parameters": {"mu_zero": self.mu_zero, "mu_minus": self.mu_minus,
                           "amp_zero": self.amp_zero, "amp_minus": self.amp_minus},
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "resolved": self.resolved,
            "p_minus": population_from_mixture(self),
        }


def _as_histogram(hist):
    h = np.asarray(hist, dtype=float)
    if h.ndim != 1 or np.any(h < 0):
        raise DomainError("histogram must be a 1-D array of non-negative occurrences")
    return h


def _loglik(k, h, logfact, w, mu):
    # per-bin component log densities
    lp = np.log(np.maximum(w, 1e-300))[None, :] + k[:, None] * np.log(np.maximum(mu, 1e-300))[None, :] \
        - mu[None, :] - logfact[:, None]
    lse = logsumexp(lp, axis=1)
    return float(np.sum(h * lse)), lp - lse[:, None]


def fit_poisson_mixture(hist, max_iter: int = 5000, tol: float = 1e-12,
                        min_separation: float = 1.0) -> PoissonMixture:
    """Maximum-likelihood two-Poisson mixture by expectation maximisation.

    Parameters
    ----------
    hist : array_like
        ``hist[k]`` is the number of shots with ``k`` photons.
    min_separation : float
        Means closer than this are reported as unresolved.

    Notes
    -----
    The likelihood is checked to be non-decreasing at every iteration.
    """
    h = _as_histogram(hist)
    total = h.sum()
    if total < 100:
        raise FitError(f"histogram holds {total:g} shots, need at least 100")
    k = np.arange(h.size, dtype=float)
    logfact = gammaln(k + 1.0)
    mean = float(np.sum(k * h) / total)

    # start from a split at the mean: weighted means of the lower and upper parts
    lo = k <= mean
    m0 = float(np.sum(k[lo] * h[lo]) / max(h[lo].sum(), 1e-12))
    m1 = float(np.sum(k[~lo] * h[~lo]) / max(h[~lo].sum(), 1e-12)) if np.any(h[~lo] > 0) else mean + 1.0
    mu = np.array([max(m0, 1e-3), max(m1, m0 + 1e-3)])
    w = np.array([h[lo].sum(), h[~lo].sum()]) / total
    w = np.clip(w, 1e-3, 1.0)
    w /= w.sum()

    ll, logresp = _loglik(k, h, logfact, w, mu)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp = np.exp(logresp) * h[:, None]
        nk = resp.sum(axis=0)
        w = nk / total
        mu = np.where(nk > 0, (resp * k[:, None]).sum(axis=0) / np.maximum(nk, 1e-300), mu)
        ll_new, logresp = _loglik(k, h, logfact, w, mu)
        if ll_new < ll - 1e-9 * abs(ll):
            raise AssertionError(f"EM log-likelihood decreased: {ll} -> {ll_new}")
        if ll_new - ll <= tol * abs(ll_new):
            ll = ll_new
            converged = True
            break
        ll = ll_new

    order = np.argsort(mu)
    mu, w = mu[order], w[order]
    resolved = bool(mu[1] - mu[0] >= min_separation)
    return PoissonMixture(float(mu[0]), float(mu[1]), float(w[0] * total), float(w[1] * total),
                          ll, it, converged, resolved)


def population_from_mixture(m: PoissonMixture) -> float:
    """NV- probability as the amplitude ratio A_minus / (A_minus + A_zero)."""
    tot = m.amp_minus + m.amp_zero
    if not tot > 0:
        raise DomainError("mixture amplitudes sum to zero")
    return m.amp_minus / tot


@dataclass(frozen=True)
class ThresholdClassifier:
    """Counts ``>= threshold`` are assigned NV-, lower counts NV0."""

    threshold: int
    fidelity_minus: float
    fidelity_zero: float

    def classify(self, counts) -> np.ndarray:
        c = np.asarray(counts)
        return np.where(c >= self.threshold, ChargeState.NEGATIVE, ChargeState.NEUTRAL).astype(np.int8)

    @property
    def error(self) -> float:
        """Mean of the two per-class error probabilities."""
        return 1.0 - 0.5 * (self.fidelity_minus + self.fidelity_zero)


def misclassification(mu_zero, mu_minus, prior_minus, thresholds):
    """Total error probability of each integer threshold under the mixture."""
    t = np.asarray(thresholds)
    err_minus = stats.poisson.cdf(t - 1, mu_minus)   # NV- read below threshold
    err_zero = stats.poisson.sf(t - 1, mu_zero)      # NV0 read at or above threshold
    return prior_minus * err_minus + (1.0 - prior_minus) * err_zero


def make_threshold_classifier(m: PoissonMixture) -> ThresholdClassifier:
    """Integer threshold minimising the prior-weighted misclassification.

    Raises
    ------
    UnresolvedMixtureError
        If the mixture was flagged as unresolved.
    """
    if not m.resolved or not m.mu_minus > m.mu_zero:
        raise UnresolvedMixtureError("mixture components are not resolved")
    prior = population_from_mixture(m)
    upper = int(np.ceil(m.mu_minus + 12.0 * np.sqrt(m.mu_minus) + 12))
    ts = np.arange(0, upper + 1)
    err = misclassification(m.mu_zero, m.mu_minus, prior, ts)
    t = int(ts[np.argmin(err)])
    f_minus = float(stats.poisson.sf(t - 1, m.mu_minus))
    f_zero = float(stats.poisson.cdf(t - 1, m.mu_zero))
    return ThresholdClassifier(t, f_minus, f_zero)

"""Two-state hidden Markov model with Poisson emissions for telegraph traces.

The hidden chain is the charge state sampled once per bin. Its per-bin
transition matrix is the exact matrix exponential of the continuous-time
generator over one bin width, so the Baum-Welch estimate of the transition
probabilities maps one-to-one onto transition rates:

    1 - P01 - P10 = exp(-lambda_tot * dt),  lambda_ion / lambda_rec = P01 / P10.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy.special import gammaln

from ..kinetics import TwoStateRates
from ..sim import EmissionModel, PhotonTrace
from .nls import FitError

MIN_MEAN = 1e-12


@nb.njit(cache=True)
def _forward(logb, A, pi):
    T = logb.shape[0]
    alpha = np.empty((T, 2))
    scale = np.empty(T)
    ll = 0.0
    for t in range(T):
        mx = max(logb[t, 0], logb[t, 1])
        b0 = math.exp(logb[t, 0] - mx)
        b1 = math.exp(logb[t, 1] - mx)
        if t == 0:
            a0 = pi[0] * b0
            a1 = pi[1] * b1
        else:
            p0 = alpha[t - 1, 0]
            p1 = alpha[t - 1, 1]
            a0 = (p0 * A[0, 0] + p1 * A[1, 0]) * b0
            a1 = (p0 * A[0, 1] + p1 * A[1, 1]) * b1
        c = a0 + a1
        alpha[t, 0] = a0 / c
        alpha[t, 1] = a1 / c
        scale[t] = c
        ll += mx + math.log(c)
    return alpha, scale, ll


@nb.njit(cache=True)
def _backward_stats(logb, A, alpha, scale):
    """Posterior state marginals and expected transition counts."""
    T = logb.shape[0]
    gamma = np.empty((T, 2))
    xi = np.zeros((2, 2))
    beta0 = 1.0
    beta1 = 1.0
    gamma[T - 1, 0] = alpha[T - 1, 0]
    gamma[T - 1, 1] = alpha[T - 1, 1]
    for t in range(T - 1, 0, -1):
        mx = max(logb[t, 0], logb[t, 1])
        eb0 = math.exp(logb[t, 0] - mx) * beta0
        eb1 = math.exp(logb[t, 1] - mx) * beta1
        c = scale[t]
        p0 = alpha[t - 1, 0]
        p1 = alpha[t - 1, 1]
        xi[0, 0] += p0 * A[0, 0] * eb0 / c
        xi[0, 1] += p0 * A[0, 1] * eb1 / c
        xi[1, 0] += p1 * A[1, 0] * eb0 / c
        xi[1, 1] += p1 * A[1, 1] * eb1 / c
        nb0 = (A[0, 0] * eb0 + A[0, 1] * eb1) / c
        nb1 = (A[1, 0] * eb0 + A[1, 1] * eb1) / c
        beta0 = nb0
        beta1 = nb1
        g0 = p0 * beta0
        g1 = p1 * beta1
        s = g0 + g1
        gamma[t - 1, 0] = g0 / s
        gamma[t - 1, 1] = g1 / s
    return gamma, xi


@nb.njit(cache=True)
def _viterbi(logb, logA, logpi):
    T = logb.shape[0]
    back = np.empty((T, 2), dtype=np.int8)
    d0 = logpi[0] + logb[0, 0]
    d1 = logpi[1] + logb[0, 1]
    for t in range(1, T):
        s00 = d0 + logA[0, 0]
        s10 = d1 + logA[1, 0]
        s01 = d0 + logA[0, 1]
        s11 = d1 + logA[1, 1]
        if s00 >= s10:
            n0 = s00
            back[t, 0] = 0
        else:
            n0 = s10
            back[t, 0] = 1
        if s11 >= s01:
            n1 = s11
            back[t, 1] = 1
        else:
            n1 = s01
            back[t, 1] = 0
        d0 = n0 + logb[t, 0]
        d1 = n1 + logb[t, 1]
    path = np.empty(T, dtype=np.int8)
    path[T - 1] = 0 if d0 >= d1 else 1
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _log_emission(counts, means):
    c = np.asarray(counts, dtype=float)
    m = np.maximum(np.asarray(means, dtype=float), MIN_MEAN)
    return c[:, None] * np.log(m)[None, :] - m[None, :] - gammaln(c + 1.0)[:, None]


def transition_matrix(r: TwoStateRates, dt: float) -> np.ndarray:
    """Row-stochastic per-bin transition matrix, exp(generator * dt)."""
    tot = r.total
    if tot == 0:
        return np.eye(2)
    f = -math.expm1(-tot * dt) / tot
    p01 = r.lambda_ion * f
    p10 = r.lambda_rec * f
    return np.array([[1.0 - p01, p01], [p10, 1.0 - p10]])


def rates_from_transition(P: np.ndarray, dt: float) -> TwoStateRates:
    """Invert :func:`transition_matrix`; sums of off-diagonals >= 1 are clipped."""
    p01, p10 = float(P[0, 1]), float(P[1, 0])
    s = p01 + p10
    if s <= 0:
        return TwoStateRates(0.0, 0.0)
    s_eff = min(s, 1.0 - 1e-12)
    tot = -math.log1p(-s_eff) / dt
    return TwoStateRates(p01 / s * tot, p10 / s * tot)


def forward_log_likelihood(counts, transition, means, initial) -> float:
    """Log-likelihood of a count sequence under a 2-state Poisson HMM."""
    logb = _log_emission(counts, means)
    _, _, ll = _forward(logb, np.asarray(transition, dtype=float), np.asarray(initial, dtype=float))
    return float(ll)


def viterbi_path(counts, transition, means, initial) -> np.ndarray:
    logb = _log_emission(counts, means)
    with np.errstate(divide="ignore"):
        logA = np.log(np.asarray(transition, dtype=float))
        logpi = np.log(np.asarray(initial, dtype=float))
    return _viterbi(logb, logA, logpi)


@dataclass
class HmmEstimate:
    """Result of :func:`hmm_fit`.

    ``rates`` are obtained from the per-bin transition probabilities through
    the exact exponential inverse; ``naive_rates`` are the first-order values
    ``P01 / dt`` and ``P10 / dt`` that ignore multiple jumps per bin.
    """

    rates: TwoStateRates
    em: EmissionModel
    path: np.ndarray
    log_likelihood: float
    n_iterations: int
    converged: bool
    naive_rates: Optional[TwoStateRates] = None
    transition: Optional[np.ndarray] = None
    initial: Optional[np.ndarray] = None
    ll_history: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def lifetimes(self):
        """Mean dwell times (NV-, NV0) in ms."""
        return self.rates.lifetime_minus, self.rates.lifetime_zero

    def to_json_dict(self) -> dict:
        t_minus, t_zero = self.lifetimes
        n = self.naive_rates or self.rates
        return {
            "model": "two_state_poisson_hmm",
            "parameters": {
                "lambda_ion": self.rates.lambda_ion,
                "lambda_rec": self.rates.lambda_rec,
                "T_minus_ms": t_minus,
                "T_zero_ms": t_zero,
                "fl_minus": self.em.fl_minus,
                "fl_zero": self.em.fl_zero,
                "lambda_ion_naive": n.lambda_ion,
                "lambda_rec_naive": n.lambda_rec,
            },
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "degenerate": self.degenerate,
        }


def _two_means(counts, n_iter=100):
    c = counts.astype(float)
    lo, hi = float(c.min()), float(c.max())
    for _ in range(n_iter):
        cut = 0.5 * (lo + hi)
        sel = c > cut
        if not sel.any() or sel.all():
            break
        new_lo, new_hi = float(c[~sel].mean()), float(c[sel].mean())
        if new_lo == lo and new_hi == hi:
            break
        lo, hi = new_lo, new_hi
    return lo, hi


def _initial_guess(counts):
    lo, hi = _two_means(counts)
    cut = 0.5 * (lo + hi)
    state = np.where(counts > cut, 0, 1)
    n_minus = max(int(np.sum(state[:-1] == 0)), 1)
    n_zero = max(int(np.sum(state[:-1] == 1)), 1)
    up = int(np.sum((state[:-1] == 0) & (state[1:] == 1)))
    down = int(np.sum((state[:-1] == 1) & (state[1:] == 0)))
    p01 = min(max(up / n_minus, 1e-4), 0.2)
    p10 = min(max(down / n_zero, 1e-4), 0.2)
    P = np.array([[1 - p01, p01], [p10, 1 - p10]])
    return np.array([max(hi, 1e-3), max(lo, 1e-6)]), P


def hmm_fit(trace: PhotonTrace, init: Optional[HmmEstimate] = None, max_iter: int = 1000,
            tol: float = 1e-10) -> HmmEstimate:
    """Baum-Welch estimate of rates and emission levels, plus the Viterbi path.

    Parameters
    ----------
    trace : PhotonTrace
        At least 100 bins.
    init : HmmEstimate, optional
        Starting point; by default levels come from 2-means clustering of the
        counts and transition probabilities from level crossings.
    tol : float
        Relative log-likelihood improvement at which EM stops.

    Raises
    ------
    AssertionError
        If an EM step lowers the likelihood.
    """
    counts = np.asarray(trace.counts)
    if counts.size < 100:
        raise FitError(f"trace has {counts.size} bins, need at least 100")
    dt = trace.bin_width

    if np.all(counts == counts[0]):
        level = float(counts[0]) / dt
        return HmmEstimate(TwoStateRates(0.0, 0.0), EmissionModel(level, level, dt),
                           np.zeros(counts.size, dtype=np.int8), float("nan"), 0, False,
                           TwoStateRates(0.0, 0.0), np.eye(2), np.array([1.0, 0.0]),
                           degenerate=True)

    if init is not None:
        means = init.em.means * (dt / init.em.bin_width)
        P = transition_matrix(init.rates, dt)
    else:
        means, P = _initial_guess(counts)
    pi = np.array([0.5, 0.5])
    c = counts.astype(float)

    history = []
    converged = False
    logb = _log_emission(counts, means)
    alpha, scale, ll = _forward(logb, P, pi)
    history.append(ll)
    it = 0
    for it in range(1, max_iter + 1):
        gamma, xi = _backward_stats(logb, P, alpha, scale)
        pi = np.clip(gamma[0], 1e-300, None)
        pi /= pi.sum()
        P = xi / xi.sum(axis=1, keepdims=True)
        occ = gamma.sum(axis=0)
        means = np.maximum((gamma * c[:, None]).sum(axis=0) / np.maximum(occ, 1e-300), MIN_MEAN)
        logb = _log_emission(counts, means)
        alpha, scale, ll_new = _forward(logb, P, pi)
        if ll_new < ll - 1e-8 * abs(ll):
            raise AssertionError(f"EM log-likelihood decreased: {ll} -> {ll_new}")
        history.append(ll_new)
        done = ll_new - ll <= tol * abs(ll_new)
        ll = ll_new
        if done:
            converged = True
            break

    # state 0 must be the bright one
    if means[0] < means[1]:
        means = means[::-1].copy()
        P = P[::-1, ::-1].copy()
        pi = pi[::-1].copy()
    with np.errstate(divide="ignore"):
        path = _viterbi(_log_emission(counts, means), np.log(P), np.log(pi))
    rates = rates_from_transition(P, dt)
    naive = TwoStateRates(float(P[0, 1]) / dt, float(P[1, 0]) / dt)
    em = EmissionModel(float(means[0]) / dt, float(means[1]) / dt, dt)
    return HmmEstimate(rates, em, path, float(ll), it, converged, naive, P, pi, history)

"""Seeded forward simulation of photon-counting experiments.

The charge state follows a continuous-time two-state Markov chain sampled
with exact exponential waiting times; photon counts are Poisson with the
time-integrated intensity of whatever states were occupied during a bin or
readout window.

Randomness comes from one integer root seed. Every independent task (a trace,
a sweep point, a block of shots) draws from its own stream obtained with
:func:`derive_rng`, i.e. ``SeedSequence(seed, spawn_key=keys)``, so results do
not depend on the order in which tasks are executed.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import ChargeState, DomainError
from .kinetics import TwoStateRates, evolve, ChargeDistribution

#: Shots are simulated in blocks of this size, each with its own stream.
SHOT_BLOCK = 4096


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for task ``keys`` under root ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def task_seed(seed: int, *keys: int) -> int:
    """Integer root seed of sub-task ``keys``, for sweeps over seeded simulators."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class EmissionModel:
    """Fluorescence of each charge state (counts/ms) and the count bin width (ms)."""

    fl_minus: float
    fl_zero: float
    bin_width: float = 1.0

    def __post_init__(self):
        if not self.fl_zero >= 0:
            raise DomainError("fl_zero must be non-negative")
        if not self.fl_minus >= self.fl_zero:
            raise DomainError("fl_minus must not be below fl_zero")
        if not self.bin_width > 0:
            raise DomainError("bin_width must be positive")

    @property
    def means(self) -> np.ndarray:
        """Mean counts per bin, indexed by ChargeState."""
        return np.array([self.fl_minus, self.fl_zero]) * self.bin_width


@dataclass
class PhotonTrace:
    bin_width: float
    counts: np.ndarray
    true_path: Optional[np.ndarray] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1 or self.counts.size < 1:
            raise DomainError("trace needs at least one bin")
        if np.any(self.counts < 0):
            raise DomainError("counts must be non-negative")
        if self.true_path is not None:
            self.true_path = np.asarray(self.true_path, dtype=np.int8)
            if self.true_path.shape != self.counts.shape:
                raise DomainError("true_path length differs from counts")

    def __len__(self):
        return self.counts.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.counts.size) * self.bin_width


@dataclass(frozen=True)
class Pulse:
    wavelength_nm: float
    power_uw: float
    duration_ms: float

    def __post_init__(self):
        if not self.duration_ms >= 0:
            raise DomainError("pulse duration must be non-negative")
        if not self.power_uw >= 0:
            raise DomainError("pulse power must be non-negative")


@dataclass(frozen=True)
class PulseSequence:
    """Initialization pulse, probe pulse of variable length, detection pulse."""

    init_pulse: Pulse
    probe_pulse: Pulse
    detect_pulse: Pulse

    def __post_init__(self):
        if not self.detect_pulse.duration_ms > 0:
            raise DomainError("detection pulse must have positive duration")

    def with_probe_duration(self, duration_ms: float) -> "PulseSequence":
        p = self.probe_pulse
        return PulseSequence(self.init_pulse,
                             Pulse(p.wavelength_nm, p.power_uw, duration_ms),
                             self.detect_pulse)


@dataclass
class ShotRecords:
    """Columnar store of correlated shots (one row per shot)."""

    pre_counts: np.ndarray
    post_counts: np.ndarray
    true_pre: Optional[np.ndarray] = None
    true_post: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.pre_counts)

    def __getitem__(self, i) -> "ShotRecord":
        return ShotRecord(
            int(self.pre_counts[i]), int(self.post_counts[i]),
            None if self.true_pre is None else ChargeState(int(self.true_pre[i])),
            None if self.true_post is None else ChargeState(int(self.true_post[i])),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class ShotRecord:
    pre_counts: int
    post_counts: int
    true_pre: Optional[ChargeState] = None
    true_post: Optional[ChargeState] = None


# ---------------------------------------------------------------------------
# jump process

def sample_path(r: TwoStateRates, duration: float, rng: np.random.Generator,
                initial: ChargeState = ChargeState.NEGATIVE):
    """Sample the jump process on ``[0, duration]``.

    Returns ``(jump_times, states)``: ``states[k]`` is occupied from
    ``jump_times[k]`` (with ``jump_times[0] == 0``) until the next jump or
    the end of the window.
    """
    initial = ChargeState.parse(initial)
    leave = np.array([r.lambda_ion, r.lambda_rec])
    # an absorbing state ends the path
    if leave[int(initial)] == 0:
        return np.zeros(1), np.array([int(initial)], dtype=np.int8)
    starts = [np.zeros(1)]
    states = [np.array([int(initial)], dtype=np.int8)]
    t = 0.0
    s = int(initial)
    mean_cycle = sum(1.0 / x if x > 0 else 0.0 for x in leave)
    chunk = int(min(max(64, 2.2 * duration / mean_cycle + 64), 1 << 22))
    while True:
        if leave[1 - s] == 0:
            # one jump into an absorbing state at most
            dt = rng.exponential(1.0 / leave[s])
            if t + dt < duration:
                starts.append(np.array([t + dt]))
                states.append(np.array([1 - s], dtype=np.int8))
            break
        # alternate dwells s, 1-s, s, ...
        n = 2 * chunk
        scale = np.empty(n)
        scale[0::2] = 1.0 / leave[s]
        scale[1::2] = 1.0 / leave[1 - s]
        dwell = rng.exponential(scale)
        ends = t + np.cumsum(dwell)
        inside = ends < duration
        k = int(np.count_nonzero(inside))
        seq = np.empty(n, dtype=np.int8)
        seq[0::2] = 1 - s
        seq[1::2] = s
        starts.append(ends[:k])
        states.append(seq[:k])
        if k < n:
            break
        t = ends[-1]
    return np.concatenate(starts), np.concatenate(states)


def simulate_trace(r: TwoStateRates, em: EmissionModel, duration: float, seed: int,
                   initial: Optional[ChargeState] = None, rng=None) -> PhotonTrace:
    """Binned photon-count trace of a telegraph emitter.

    Parameters
    ----------
    r : TwoStateRates
        Transition rates under the (constant) illumination.
    em : EmissionModel
        Emission levels and bin width.
    duration : float
        Trace length in ms; ``floor(duration / bin_width)`` bins are produced.
    seed : int
        Root seed. Ignored when ``rng`` is given.
    initial : ChargeState, optional
        Starting state. Drawn from the steady state when omitted
        (NV- if both rates vanish).

    Notes
    -----
    Jumps inside a bin are honoured exactly: the Poisson mean of a bin is the
    occupancy-weighted intensity. ``true_path`` stores the state occupied for
    the larger part of each bin, ties going to the state at the bin start.
    """
    bw = em.bin_width
    if not duration >= bw:
        raise DomainError("duration must cover at least one bin")
    n_bins = int(math.floor(duration / bw + 1e-9))
    if rng is None:
        rng = derive_rng(seed, 0)
    if initial is None:
        if r.total == 0:
            initial = ChargeState.NEGATIVE
        else:
            p_minus = r.lambda_rec / r.total
            initial = ChargeState.NEGATIVE if rng.random() < p_minus else ChargeState.NEUTRAL
    t_end = n_bins * bw
    jumps, states = sample_path(r, t_end, rng, initial)

    # cumulative time spent in NV- is piecewise linear with kinks at the jumps
    seg_end = np.append(jumps[1:], t_end)
    in_minus = (states == ChargeState.NEGATIVE).astype(float)
    cum_at_jumps = np.concatenate([[0.0], np.cumsum((seg_end - jumps) * in_minus)])
    knots = np.append(jumps, t_end)
    edges = np.arange(n_bins + 1) * bw
    edges[-1] = t_end
    cum = np.interp(edges, knots, cum_at_jumps)
    t_minus = np.clip(np.diff(cum), 0.0, bw)

    mean = em.fl_minus * t_minus + em.fl_zero * (bw - t_minus)
    counts = rng.poisson(mean)

    start_state = states[np.searchsorted(jumps, edges[:-1], side="right") - 1]
    half = 0.5 * bw
    path = np.where(t_minus > half, ChargeState.NEGATIVE,
                    np.where(t_minus < half, ChargeState.NEUTRAL, start_state)).astype(np.int8)
    return PhotonTrace(bw, counts, path)


# ---------------------------------------------------------------------------
# vectorised evolution of many independent shots

def _evolve_shots(states: np.ndarray, r: TwoStateRates, duration: float,
                  rng: np.random.Generator):
    """Evolve each shot for ``duration`` ms under ``r``.

    Returns ``(time_in_minus, final_states)``.
    """
    states = states.astype(np.int8).copy()
    t_minus = np.zeros(states.size)
    if duration <= 0:
        return t_minus, states
    leave = np.array([r.lambda_ion, r.lambda_rec])
    t = np.zeros(states.size)
    active = np.arange(states.size)
    while active.size:
        s = states[active]
        rate = leave[s]
        with np.errstate(divide="ignore"):
            dwell = np.where(rate > 0, rng.exponential(1.0, active.size) / np.where(rate > 0, rate, 1.0), np.inf)
        end = t[active] + dwell
        stay = np.minimum(end, duration) - t[active]
        t_minus[active] += np.where(s == 0, stay, 0.0)
        jumped = end < duration
        idx = active[jumped]
        states[idx] = 1 - states[idx]
        t[idx] = end[jumped]
        active = idx
    return t_minus, states


def _counts_for(t_minus, duration, em: EmissionModel, rng):
    mean = em.fl_minus * t_minus + em.fl_zero * (duration - t_minus)
    return rng.poisson(mean)


def simulate_detection_counts(p_minus: float, em: EmissionModel, r_during_readout: TwoStateRates,
                              readout: float, shots: int, seed: int):
    """Per-shot readout counts and initial states.

    Returns ``(counts, initial_states)``.
    """
    if not 0 <= p_minus <= 1:
        raise DomainError("p_minus must be a probability")
    if shots < 1:
        raise DomainError("need at least one shot")
    if not readout > 0:
        raise DomainError("readout must be positive")
    counts = np.empty(shots, dtype=np.int64)
    init = np.empty(shots, dtype=np.int8)
    for block, lo in enumerate(range(0, shots, SHOT_BLOCK)):
        hi = min(lo + SHOT_BLOCK, shots)
        rng = derive_rng(seed, 1, block)
        s0 = np.where(rng.random(hi - lo) < p_minus, 0, 1).astype(np.int8)
        t_minus, _ = _evolve_shots(s0, r_during_readout, readout, rng)
        counts[lo:hi] = _counts_for(t_minus, readout, em, rng)
        init[lo:hi] = s0
    return counts, init


def simulate_detection_histogram(p_minus: float, em: EmissionModel, r_during_readout: TwoStateRates,
                                 readout: float, shots: int, seed: int) -> np.ndarray:
    """Histogram of single-shot readout counts.

    Entry ``k`` of the returned array is the number of shots with ``k``
    detected photons. With zero readout rates the counts follow an exact
    two-Poisson mixture with weights ``(p_minus, 1 - p_minus)``.
    """
    counts, _ = simulate_detection_counts(p_minus, em, r_during_readout, readout, shots, seed)
    return np.bincount(counts)


RateModel = Mapping[str, TwoStateRates] | Callable[[Pulse], TwoStateRates]


def _rates_for(rate_model, name: str, pulse: Pulse) -> TwoStateRates:
    if callable(rate_model):
        return rate_model(pulse)
    return rate_model[name]


def check_readout_separation(em: EmissionModel, readout: float) -> bool:
    """True if the two count levels are separated by more than 5 shot-noise widths."""
    mu_minus = em.fl_minus * readout
    mu_zero = em.fl_zero * readout
    ok = (mu_minus - mu_zero) > 5.0 * math.sqrt(0.5 * (mu_minus + mu_zero))
    if not ok:
        warnings.warn(f"detection pulse of {readout} ms gives poorly separated count "
                      f"levels ({mu_zero:.2f} vs {mu_minus:.2f})", RuntimeWarning, stacklevel=3)
    return ok


def simulate_correlated_experiment(seq: PulseSequence, rate_model: RateModel, em: EmissionModel,
                                   shots: int, seed: int, initial: ChargeState = ChargeState.NEGATIVE
                                   ) -> ShotRecords:
    """Readout, probe pulse, readout again, repeated ``shots`` times.

    ``rate_model`` maps the pulse names ``"init"``, ``"probe"`` and
    ``"detect"`` to rates, or is a callable taking a :class:`Pulse`. Every
    shot starts in ``initial`` before the init pulse. ``true_pre`` is the
    state when the probe pulse starts, ``true_post`` the state when it ends.
    Fluorescence is recorded during the two detection pulses only.
    """
    if shots < 1:
        raise DomainError("need at least one shot")
    readout = seq.detect_pulse.duration_ms
    check_readout_separation(em, readout)
    r_init = _rates_for(rate_model, "init", seq.init_pulse)
    r_probe = _rates_for(rate_model, "probe", seq.probe_pulse)
    r_det = _rates_for(rate_model, "detect", seq.detect_pulse)
    p_after_init = evolve(r_init, ChargeDistribution.pure(initial), seq.init_pulse.duration_ms).p_minus

    pre = np.empty(shots, dtype=np.int64)
    post = np.empty(shots, dtype=np.int64)
    true_pre = np.empty(shots, dtype=np.int8)
    true_post = np.empty(shots, dtype=np.int8)
    for block, lo in enumerate(range(0, shots, SHOT_BLOCK)):
        hi = min(lo + SHOT_BLOCK, shots)
        rng = derive_rng(seed, 2, block)
        s = np.where(rng.random(hi - lo) < p_after_init, 0, 1).astype(np.int8)
        t_minus, s = _evolve_shots(s, r_det, readout, rng)
        pre[lo:hi] = _counts_for(t_minus, readout, em, rng)
        true_pre[lo:hi] = s
        _, s = _evolve_shots(s, r_probe, seq.probe_pulse.duration_ms, rng)
        true_post[lo:hi] = s
        t_minus, _ = _evolve_shots(s, r_det, readout, rng)
        post[lo:hi] = _counts_for(t_minus, readout, em, rng)
    return ShotRecords(pre, post, true_pre, true_post)


# ---------------------------------------------------------------------------
# CSV export

def _state_label(code) -> str:
    return ChargeState(int(code)).label


def write_trace_csv(trace: PhotonTrace, path, include_truth: bool = True) -> Path:
    """Write ``bin_ms,counts[,true_state]``; ``bin_ms`` is the bin start time."""
    path = Path(path)
    truth = include_truth and trace.true_path is not None
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_ms", "counts", "true_state"] if truth else ["bin_ms", "counts"])
        for i, c in enumerate(trace.counts):
            row = [repr(float(i * trace.bin_width)), int(c)]
            if truth:
                row.append(_state_label(trace.true_path[i]))
            w.writerow(row)
    return path


def read_trace_csv(path) -> PhotonTrace:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DomainError(f"{path}: empty trace")
    t = np.array([float(r["bin_ms"]) for r in rows])
    counts = np.array([int(r["counts"]) for r in rows])
    bw = float(t[1] - t[0]) if t.size > 1 else 1.0
    truth = None
    if "true_state" in rows[0] and rows[0]["true_state"] not in (None, ""):
        truth = np.array([int(ChargeState.parse(r["true_state"])) for r in rows])
    return PhotonTrace(bw, counts, truth)


def write_shots_csv(shots: ShotRecords, path, include_truth: bool = True) -> Path:
    """Write ``pre_counts,post_counts[,true_pre,true_post]``."""
    path = Path(path)
    truth = include_truth and shots.true_pre is not None
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["pre_counts", "post_counts"]
        if truth:
            header += ["true_pre", "true_post"]
        w.writerow(header)
        for i in range(len(shots)):
            row = [int(shots.pre_counts[i]), int(shots.post_counts[i])]
            if truth:
                row += [_state_label(shots.true_pre[i]), _state_label(shots.true_post[i])]
            w.writerow(row)
    return path


def read_shots_csv(path) -> ShotRecords:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    pre = np.array([int(r["pre_counts"]) for r in rows], dtype=np.int64)
    post = np.array([int(r["post_counts"]) for r in rows], dtype=np.int64)
    tp = tq = None
    if rows and rows[0].get("true_pre"):
        tp = np.array([int(ChargeState.parse(r["true_pre"])) for r in rows], dtype=np.int8)
        tq = np.array([int(ChargeState.parse(r["true_post"])) for r in rows], dtype=np.int8)
    return ShotRecords(pre, post, tp, tq)


def write_histogram_csv(hist: Sequence[int], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["counts", "occurrences"])
        for k, n in enumerate(hist):
            w.writerow([k, int(n)])
    return path


def read_histogram_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ks = np.array([int(r["counts"]) for r in rows])
    ns = np.array([int(r["occurrences"]) for r in rows])
    hist = np.zeros(ks.max() + 1 if ks.size else 1, dtype=np.int64)
    np.add.at(hist, ks, ns)
    return hist

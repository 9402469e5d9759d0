"""Synthetic simulate -> infer -> aggregate pipelines producing figure data series.

Each pipeline returns an ordered mapping ``table name -> {column: values}``
that :func:`write_tables` turns into CSV files. Every sweep point draws from
its own seed (:func:`nvpd.sim.task_seed`), so results do not depend on how
points are distributed over worker processes.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import presets as ps
from .core import ChargeState, wavelength_to_energy
from .inference.curves import (fit_flip_curve, fit_rate_vs_power, flip_probabilities_from_shots,
                               wilson_sigma)
from .inference.energy import (ION_FIT_MAX_ENERGY, band_gap_check, energy_model_rate,
                               fit_ionization_energy)
from .inference.hmm import hmm_fit
from .inference.mixture import fit_poisson_mixture, make_threshold_classifier, population_from_mixture
from .inference.nls import FitError
from .io import write_csv, write_json
from .kinetics import ChargeDistribution, TwoStateRates, evolve, steady_state
from .sim import (EmissionModel, Pulse, PulseSequence, simulate_correlated_experiment,
                  simulate_detection_histogram, simulate_trace, task_seed)

FIGURES = ("fig3", "fig4", "fig5c", "fig6")
NAN = float("nan")


class InitPulseWarning(UserWarning):
    """The preparation pulse is too short for the populations to reach steady state."""


def _map(fn: Callable, items, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# helpers

def _trace_point(r: TwoStateRates, em: EmissionModel, duration: float, seed: int) -> dict:
    """Simulate one telegraph trace and summarise its HMM fit.

    Rate errors are counting errors, rate / sqrt(number of observed jumps
    out of that state along the Viterbi path).
    """
    tr = simulate_trace(r, em, duration, seed)
    est = hmm_fit(tr)
    path = est.path
    n_up = max(int(np.sum((path[:-1] == 0) & (path[1:] == 1))), 1)
    n_down = max(int(np.sum((path[:-1] == 1) & (path[1:] == 0))), 1)
    ion, rec = est.rates.lambda_ion, est.rates.lambda_rec
    ion_err, rec_err = ion / math.sqrt(n_up), rec / math.sqrt(n_down)
    tot = ion + rec
    if tot > 0:
        p = rec / tot
        p_err = math.hypot(rec * ion_err, ion * rec_err) / tot ** 2
    else:
        p, p_err = NAN, NAN
    t_bright = max(float(np.sum(path == 0)) * tr.bin_width, tr.bin_width)
    return {
        "lambda_ion": ion, "lambda_ion_err": ion_err,
        "lambda_rec": rec, "lambda_rec_err": rec_err,
        "lambda_ion_naive": est.naive_rates.lambda_ion, "lambda_rec_naive": est.naive_rates.lambda_rec,
        "p_minus": p, "p_minus_err": p_err,
        "fl_minus": est.em.fl_minus, "fl_minus_err": math.sqrt(est.em.fl_minus / t_bright),
        "fl_zero": est.em.fl_zero,
    }


def _columns(rows: list, keys) -> dict:
    return {k: np.array([row[k] for row in rows], dtype=float) for k in keys}


def _safe(fn, *args, **kw):
    """Run a fit; on failure warn and return None so a sweep can continue."""
    try:
        return fn(*args, **kw)
    except FitError as exc:
        warnings.warn(f"{fn.__name__} failed: {exc}", RuntimeWarning, stacklevel=2)
        return None


# ---------------------------------------------------------------------------
# power dependence

def _fig3_task(args):
    seed, i, j, cycles = args
    truth = ps.FIG3_TRUTH[i]
    p = ps.FIG3_POWERS_UW[j]
    r = TwoStateRates(truth.ion(p), truth.rec(p))
    # one bin per 1/p ms keeps the expected counts per bin independent of power
    em = EmissionModel(truth.fl_minus_per_uw * p, truth.fl_zero_per_uw * p, 1.0 / p)
    duration = cycles * (r.lifetime_minus + r.lifetime_zero)
    out = _trace_point(r, em, duration, task_seed(seed, 3, i, j))
    out.update(wavelength_nm=truth.wavelength_nm, power_uw=p, lambda_ion_true=r.lambda_ion,
               lambda_rec_true=r.lambda_rec, p_minus_true=steady_state(r).p_minus)
    return out


def fig3(seed: int, jobs: int = 1, cycles: Optional[float] = None) -> dict:
    """Rates and NV- population versus power at two wavelengths, with quadratic fits."""
    cyc = cycles or ps.FIG3_CYCLES
    tasks = [(seed, i, j, cyc) for i in range(len(ps.FIG3_TRUTH)) for j in range(len(ps.FIG3_POWERS_UW))]
    rows = _map(_fig3_task, tasks, jobs)

    coeffs, curves = [], []
    grid = np.linspace(0.0, 6.5, 66)
    for truth in ps.FIG3_TRUTH:
        sel = [r for r in rows if r["wavelength_nm"] == truth.wavelength_nm]
        pw = np.array([r["power_uw"] for r in sel])
        fits = {}
        for k in ("lambda_ion", "lambda_rec"):
            y = np.array([r[k] for r in sel])
            s = np.array([r[k + "_err"] for r in sel])
            fits[k] = _safe(fit_rate_vs_power, pw, y, sigma=s, quadratic_only=True)
        b = {k: (f.b, f.b_err) if f else (NAN, NAN) for k, f in fits.items()}
        coeffs.append({"wavelength_nm": truth.wavelength_nm,
                       "b_ion": b["lambda_ion"][0], "b_ion_err": b["lambda_ion"][1],
                       "b_rec": b["lambda_rec"][0], "b_rec_err": b["lambda_rec"][1],
                       "b_ion_true": truth.ion.b, "b_rec_true": truth.rec.b})
        for x in grid:
            curves.append({"wavelength_nm": truth.wavelength_nm, "power_uw": x,
                           "lambda_ion_fit": b["lambda_ion"][0] * x * x,
                           "lambda_rec_fit": b["lambda_rec"][0] * x * x})

    return {
        "fig3a_rates": _columns(rows, ["wavelength_nm", "power_uw", "lambda_ion", "lambda_ion_err",
                                       "lambda_rec", "lambda_rec_err", "lambda_ion_true",
                                       "lambda_rec_true"]),
        "fig3a_fits": _columns(curves, ["wavelength_nm", "power_uw", "lambda_ion_fit", "lambda_rec_fit"]),
        "fig3a_coefficients": _columns(coeffs, ["wavelength_nm", "b_ion", "b_ion_err", "b_rec",
                                                "b_rec_err", "b_ion_true", "b_rec_true"]),
        "fig3b_population": _columns(rows, ["wavelength_nm", "power_uw", "p_minus", "p_minus_err",
                                            "p_minus_true"]),
    }


# ---------------------------------------------------------------------------
# wavelength dependence

def _fig4_task(args):
    seed, i, cycles = args
    nm = float(ps.FIG4_TABLE[i, 0])
    r, em = ps.fig4_truth(nm)
    duration = cycles * (r.lifetime_minus + r.lifetime_zero)
    out = _trace_point(r, em, duration, task_seed(seed, 4, i))
    out.update(wavelength_nm=nm, lambda_ion_true=r.lambda_ion, lambda_rec_true=r.lambda_rec,
               fl_minus_true=em.fl_minus, p_minus_true=steady_state(r).p_minus)
    return out


def fig4(seed: int, jobs: int = 1, cycles: Optional[float] = None) -> dict:
    """Rates, NV- fluorescence and NV- population versus wavelength at 1 uW."""
    cyc = cycles or ps.FIG4_CYCLES
    rows = _map(_fig4_task, [(seed, i, cyc) for i in range(len(ps.FIG4_TABLE))], jobs)
    return {"fig4": _columns(rows, [
        "wavelength_nm", "lambda_ion", "lambda_ion_err", "lambda_rec", "lambda_rec_err",
        "lambda_ion_naive", "lambda_rec_naive", "fl_minus", "fl_minus_err", "p_minus", "p_minus_err",
        "lambda_ion_true", "lambda_rec_true", "fl_minus_true", "p_minus_true"])}


# ---------------------------------------------------------------------------
# single-shot population

def check_init_pulse(total_rate: float, duration_ms: float, factor: float = 3.0) -> bool:
    """Warn when the preparation pulse is shorter than ``factor / total_rate``."""
    need = factor / total_rate
    if duration_ms < need:
        warnings.warn(f"preparation pulse of {duration_ms:g} ms is shorter than {need:g} ms "
                      f"(3/lambda_tot); populations will not have reached steady state",
                      InitPulseWarning, stacklevel=2)
        return False
    return True


def _fig5c_task(args):
    seed, key, nm, init_ms, shots = args
    r_init = ps.fig5c_init_rates(nm)
    p_after = evolve(r_init, ChargeDistribution.pure(ChargeState.NEGATIVE), init_ms).p_minus
    hist = simulate_detection_histogram(p_after, ps.FIG5C_READOUT_EMISSION, ps.FIG5C_READOUT_RATES,
                                        ps.FIG5C_READOUT_MS, shots, task_seed(seed, 5, key))
    mix = fit_poisson_mixture(hist)
    p = population_from_mixture(mix)
    return {"wavelength_nm": nm, "p_minus": p, "p_minus_err": math.sqrt(p * (1 - p) / shots),
            "p_minus_true": ps.fig5c_p_minus(nm), "p_prepared": p_after,
            "mu_zero": mix.mu_zero, "mu_minus": mix.mu_minus, "hist": hist, "mix": mix}


def fig5c(seed: int, jobs: int = 1, shots: Optional[int] = None,
          init_duration_ms: Optional[float] = None) -> dict:
    """NV- population after a preparation pulse, read out by Poisson-mixture fits."""
    n = shots or ps.FIG5C_SHOTS
    init_ms = init_duration_ms or ps.FIG5C_INIT_DURATION_MS
    check_init_pulse(ps.FIG5C_INIT_TOTAL_RATE, init_ms)
    tasks = [(seed, k, float(nm), init_ms, n) for k, nm in enumerate(ps.FIG5C_WAVELENGTHS)]
    # example histogram after a 565 nm preparation pulse
    tasks.append((seed, len(tasks), 565.0, init_ms, n))
    rows = _map(_fig5c_task, tasks, jobs)
    example = rows.pop()
    hist = example["hist"]
    k = np.arange(hist.size)
    return {
        "fig5c_population": _columns(rows, ["wavelength_nm", "p_minus", "p_minus_err", "p_minus_true",
                                            "p_prepared", "mu_zero", "mu_minus"]),
        "fig5b_histogram": {"counts": k.astype(float), "occurrences": hist.astype(float),
                            "mixture_fit": example["mix"].pmf(k)},
    }


# ---------------------------------------------------------------------------
# correlated single-shot rates in the blue

def _fig6_classifier(seed: int, shots: int):
    p0 = steady_state(ps.FIG6_INIT_RATES).p_minus
    hist = simulate_detection_histogram(p0, ps.FIG5C_READOUT_EMISSION, ps.FIG5C_READOUT_RATES,
                                        ps.FIG5C_READOUT_MS, max(shots, 10_000), task_seed(seed, 6, 0))
    return make_threshold_classifier(fit_poisson_mixture(hist))


def _fig6_task(args):
    seed, i, j, shots, cls = args
    nm, pw = ps.FIG6_WAVELENGTHS[i], ps.FIG6_POWERS_UW[j]
    r = ps.fig6_rates(nm, pw)
    durations = np.array(ps.FIG6_DURATION_GRID) / r.total
    rate_model = {"init": ps.FIG6_INIT_RATES, "probe": r, "detect": ps.FIG5C_READOUT_RATES}
    seq = PulseSequence(Pulse(532.0, 20.0, ps.FIG6_INIT_DURATION_MS), Pulse(nm, pw, 0.0),
                        Pulse(594.0, 1.0, ps.FIG5C_READOUT_MS))
    fm, nm_, fz, nz = (np.empty(durations.size) for _ in range(4))
    for k, d in enumerate(durations):
        rec = simulate_correlated_experiment(seq.with_probe_duration(float(d)), rate_model,
                                             ps.FIG5C_READOUT_EMISSION, shots,
                                             task_seed(seed, 6, 1 + i, j, k))
        fm[k], nm_[k], fz[k], nz[k] = flip_probabilities_from_shots(cls.classify(rec.pre_counts),
                                                                   cls.classify(rec.post_counts))
    fit = _safe(fit_flip_curve, durations, fm, fz, shots_minus=nm_, shots_zero=nz)
    out = {"wavelength_nm": nm, "power_uw": pw, "lambda_ion_true": r.lambda_ion,
           "lambda_rec_true": r.lambda_rec, "durations": durations, "flip_minus": fm,
           "n_minus": nm_, "flip_zero": fz, "n_zero": nz}
    if fit is None:
        out.update(lambda_ion=NAN, lambda_ion_err=NAN, lambda_rec=NAN, lambda_rec_err=NAN,
                   lambda_tot=NAN, p_inf=NAN)
    else:
        err = fit.rate_errors
        out.update(lambda_ion=fit.rates.lambda_ion, lambda_ion_err=float(err[0]),
                   lambda_rec=fit.rates.lambda_rec, lambda_rec_err=float(err[1]),
                   lambda_tot=fit.lambda_tot, p_inf=fit.p_infinity)
    return out


def _parabolas(rows):
    out = []
    for nm in ps.FIG6_WAVELENGTHS:
        sel = [r for r in rows if r["wavelength_nm"] == nm and np.isfinite(r["lambda_ion"])]
        pw = np.array([r["power_uw"] for r in sel])
        ion_law, rec_law = ps.fig6_laws(nm)
        row = {"wavelength_nm": nm, "energy_ev": float(wavelength_to_energy(nm)),
               "a_ion_true": ion_law.a, "b_ion_true": ion_law.b,
               "a_rec_true": rec_law.a, "b_rec_true": rec_law.b}
        for k, tag in (("lambda_ion", "ion"), ("lambda_rec", "rec")):
            y = np.array([r[k] for r in sel])
            s = np.array([r[k + "_err"] for r in sel])
            s = np.where(s > 0, s, np.max(s[s > 0]) if np.any(s > 0) else 1.0)
            fit = _safe(fit_rate_vs_power, pw, y, sigma=s) if pw.size >= 3 else None
            row[f"a_{tag}"] = fit.a if fit else NAN
            row[f"a_{tag}_err"] = fit.a_err if fit else NAN
            row[f"b_{tag}"] = fit.b if fit else NAN
            row[f"b_{tag}_err"] = fit.b_err if fit else NAN
        out.append(row)
    return out


def _energy_fits(lin):
    e = np.array([r["energy_ev"] for r in lin])
    summary = {}
    a, s = (np.array([r[k] for r in lin]) for k in ("a_ion", "a_ion_err"))
    ok = np.isfinite(a) & np.isfinite(s) & (s > 0)
    ion = _safe(fit_ionization_energy, e[ok], a[ok], sigma=s[ok], max_energy=ION_FIT_MAX_ENERGY)
    sigma_w = ion.params.sigma_width if ion else ps.FIG6_ION.sigma_width
    order = np.argsort(-e)[: ps.FIG6_REC_POINTS]
    a, s = (np.array([r[k] for r in lin])[order] for k in ("a_rec", "a_rec_err"))
    ok = np.isfinite(a) & np.isfinite(s) & (s > 0)
    with warnings.catch_warnings():
        # four points on the low-energy tail always sit below the fitted edge
        warnings.simplefilter("ignore")
        rec = _safe(fit_ionization_energy, e[order][ok], a[ok], sigma=s[ok], fix_sigma=sigma_w)
    for tag, fit, truth in (("ionization", ion, ps.FIG6_ION), ("recombination", rec, ps.FIG6_REC)):
        summary[tag] = {
            "E0_ev": fit.params.E0 if fit else NAN,
            "E0_err_ev": fit.E0_err if fit else NAN,
            "sigma_ev": fit.params.sigma_width if fit else NAN,
            "A": fit.params.A if fit else NAN,
            "n_points": fit.n_used if fit else 0,
            "sigma_fixed": bool(fit.sigma_fixed) if fit else None,
            "E0_true_ev": truth.E0,
        }
    if ion and rec:
        summary["band_gap_check"] = band_gap_check(ion.params.E0, rec.params.E0)
    return ion, rec, summary


def fig6(seed: int, jobs: int = 1, shots: Optional[int] = None) -> dict:
    """Flip curves, rate-versus-power parabolas and the linear-part spectrum with band-edge fits."""
    n = shots or ps.FIG6_SHOTS
    cls = _fig6_classifier(seed, n)
    tasks = [(seed, i, j, n, cls)
             for i in range(len(ps.FIG6_WAVELENGTHS)) for j in range(len(ps.FIG6_POWERS_UW))]
    rows = _map(_fig6_task, tasks, jobs)

    ex = next(r for r in rows if (r["wavelength_nm"], r["power_uw"]) == ps.FIG6B_POINT)
    lam, q = ex["lambda_tot"], ex["p_inf"]
    t = ex["durations"]
    flip = {
        "duration_ms": t,
        "flip_minus": ex["flip_minus"],
        "flip_minus_err": wilson_sigma(np.round(ex["flip_minus"] * ex["n_minus"]), ex["n_minus"]),
        "flip_zero": ex["flip_zero"],
        "flip_zero_err": wilson_sigma(np.round(ex["flip_zero"] * ex["n_zero"]), ex["n_zero"]),
        "fit_minus": q * -np.expm1(-lam * t),
        "fit_zero": (1 - q) * -np.expm1(-lam * t),
    }

    lin = _parabolas(rows)
    curves = []
    for row in lin:
        for x in np.linspace(0.0, 10.0, 41):
            curves.append({"wavelength_nm": row["wavelength_nm"], "power_uw": x,
                           "lambda_ion_fit": row["a_ion"] * x + row["b_ion"] * x * x,
                           "lambda_rec_fit": row["a_rec"] * x + row["b_rec"] * x * x})

    ion, rec, summary = _energy_fits(lin)
    summary["classifier"] = {"threshold": cls.threshold, "fidelity_minus": cls.fidelity_minus,
                             "fidelity_zero": cls.fidelity_zero}
    grid = np.linspace(2.35, 2.90, 56)
    model = {"energy_ev": grid,
             "a_ion_model": energy_model_rate(ion.params, grid) if ion else np.full(grid.size, NAN),
             "a_rec_model": energy_model_rate(rec.params, grid) if rec else np.full(grid.size, NAN)}

    return {
        "fig6b_flip": flip,
        "fig6c_rates": _columns(rows, ["wavelength_nm", "power_uw", "lambda_ion", "lambda_ion_err",
                                       "lambda_rec", "lambda_rec_err", "lambda_ion_true",
                                       "lambda_rec_true"]),
        "fig6c_fits": _columns(curves, ["wavelength_nm", "power_uw", "lambda_ion_fit", "lambda_rec_fit"]),
        "fig6d_linear": _columns(lin, ["wavelength_nm", "energy_ev", "a_ion", "a_ion_err", "a_rec",
                                       "a_rec_err", "b_ion", "b_ion_err", "b_rec", "b_rec_err",
                                       "a_ion_true", "a_rec_true", "b_ion_true", "b_rec_true"]),
        "fig6d_model": model,
        "fig6d_summary": summary,
    }


# ---------------------------------------------------------------------------

def run(figure: str, seed: int, jobs: int = 1, shots: Optional[int] = None,
        cycles: Optional[float] = None, init_duration_ms: Optional[float] = None) -> dict:
    if figure == "fig3":
        return fig3(seed, jobs, cycles)
    if figure == "fig4":
        return fig4(seed, jobs, cycles)
    if figure == "fig5c":
        return fig5c(seed, jobs, shots, init_duration_ms)
    if figure == "fig6":
        return fig6(seed, jobs, shots)
    raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")


def write_tables(tables: dict, out_dir) -> list:
    """One CSV per table (JSON for dict-of-scalars summaries); returns the written paths."""
    out = Path(out_dir)
    paths = []
    for name, table in tables.items():
        if name.endswith("_summary"):
            paths.append(write_json(table, out / f"{name}.json"))
        else:
            paths.append(write_csv(out / f"{name}.csv", list(table), list(table.values())))
    return paths

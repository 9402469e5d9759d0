"""Command-line interface.

    nvpd simulate trace|histogram|shots [--config FILE] [--seed N] [--out DIR]
    nvpd fit trace-hmm|histogram|flip|rate-power|saturation|energy --config FILE [--input FILE]
    nvpd reproduce fig3|fig4|fig5c|fig6 [--config FILE] [--seed N] [--out DIR] [--jobs N] [--figures]

Exit codes: 0 success, 2 invalid configuration or arguments, 3 fit error or
non-convergence, 4 input/output error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__, presets
from .config import load_config
from .core import ChargeState, DomainError, wavelength_to_energy
from .inference import (fit_flip_curve, fit_ionization_energy, fit_poisson_mixture, fit_rate_vs_power,
                        fit_saturation, hmm_fit, make_threshold_classifier)
from .inference.energy import ION_FIT_MAX_ENERGY, energy_model_rate
from .inference.mixture import UnresolvedMixtureError
from .inference.nls import FitError
from .io import (InputFormatError, build_manifest, config_hash, read_table, sha256_file,
                 utc_now, write_csv, write_json)
from .kinetics import NoSteadyStateError, steady_state
from .sim import (read_histogram_csv, read_trace_csv, simulate_correlated_experiment,
                  simulate_detection_histogram, simulate_trace, write_histogram_csv, write_shots_csv,
                  write_trace_csv)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FIT = 3
EXIT_IO = 4

SIMULATE = ("trace", "histogram", "shots")
FIT = ("trace-hmm", "histogram", "flip", "rate-power", "saturation", "energy")
REPRODUCE = ("fig3", "fig4", "fig5c", "fig6")


class NotConverged(Exception):
    """A report was written but the underlying fit did not converge."""


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nvpd", description="Charge-state dynamics simulation and inference.")
    ap.add_argument("--version", action="version", version=f"nvpd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required,
                       help="JSON config, or a manifest from an earlier run")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("nvpd_out"), help="output directory")

    p = sub.add_parser("simulate", help="forward-simulate photon counts")
    p.add_argument("subcommand", choices=SIMULATE)
    common(p)
    p = sub.add_parser("fit", help="fit a model to a data file")
    p.add_argument("subcommand", choices=FIT)
    common(p, config_required=True)
    p.add_argument("--input", help="data file (overrides the config)")
    p = sub.add_parser("reproduce", help="run a synthetic figure pipeline")
    p.add_argument("subcommand", choices=REPRODUCE)
    common(p)
    p.add_argument("--jobs", type=int, help="worker processes for sweep points")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    return ap


def _load(args):
    raw, base = None, None
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        try:
            raw = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise DomainError(f"{args.config}: not valid JSON ({exc})") from exc
        base = args.config.parent
    raw = dict(raw or {})
    if raw.get("manifest_version") is None:
        if args.seed is not None:
            raw["seed"] = args.seed
        if getattr(args, "input", None):
            raw["input"] = args.input
    cfg = load_config(args.command, args.subcommand, raw, base)
    if raw.get("manifest_version") is not None and args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _finish(args, cfg, started, inputs, outputs):
    manifest = build_manifest(args.command, args.subcommand, cfg.model_dump(mode="json"), cfg.seed,
                              inputs, outputs, started)
    write_json(manifest, args.out / "manifest.json")


# ---------------------------------------------------------------------------
# simulate

def _simulate(args, cfg):
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.subcommand == "trace":
        if cfg.preset == "fig1b":
            r, em, duration = presets.FIG1B_RATES, presets.FIG1B_EMISSION, presets.FIG1B_DURATION_MS
        else:
            r, em, duration = None, None, None
        r = cfg.rates.to_rates() if cfg.rates else r
        em = cfg.emission.to_model() if cfg.emission else em
        duration = cfg.duration_ms or duration
        seeds = cfg.seeds or [cfg.seed]
        paths = []
        for s in seeds:
            name = "trace.csv" if cfg.seeds is None else f"trace_seed{s}.csv"
            initial = ChargeState.parse(cfg.initial) if cfg.initial else None
            tr = simulate_trace(r, em, duration, s, initial=initial)
            paths.append(write_trace_csv(tr, out / name, include_truth=cfg.include_truth))
        return [], paths
    if args.subcommand == "histogram":
        hist = simulate_detection_histogram(cfg.p_minus, cfg.emission.to_model(), cfg.readout_rates.to_rates(),
                                            cfg.readout_ms, cfg.shots, cfg.seed)
        return [], [write_histogram_csv(hist, out / "histogram.csv")]
    shots = simulate_correlated_experiment(cfg.sequence(), cfg.rate_model(), cfg.emission.to_model(),
                                           cfg.shots, cfg.seed, initial=cfg.initial_state())
    return [], [write_shots_csv(shots, out / "shots.csv", include_truth=cfg.include_truth)]


# ---------------------------------------------------------------------------
# fit

def _input_path(spec: str) -> Path:
    if spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        path = Path(str(resources.files("nvpd") / "data" / f"{name}.csv"))
    else:
        path = Path(spec)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {spec}")
    return path


def _parse(reader, path):
    try:
        return reader(path)
    except (KeyError, ValueError, IndexError) as exc:
        raise InputFormatError(f"{path}: cannot parse ({exc})") from exc


def _fit_trace(cfg, path):
    trace = _parse(read_trace_csv, path)
    est = hmm_fit(trace, max_iter=cfg.max_iter, tol=cfg.tol)
    rep = est.to_json_dict()
    try:
        rep["parameters"]["p_minus"] = steady_state(est.rates).p_minus
    except NoSteadyStateError:
        rep["parameters"]["p_minus"] = None
    level = np.where(est.path == 0, est.em.fl_minus, est.em.fl_zero) * trace.bin_width
    plot = {"bin_ms": trace.times, "counts": trace.counts, "viterbi_state": est.path,
            "fitted_level": level}
    return rep, plot, est.converged


def _fit_histogram(cfg, path):
    hist = _parse(read_histogram_csv, path)
    mix = fit_poisson_mixture(hist, min_separation=cfg.min_separation)
    rep = mix.to_json_dict()
    try:
        cls = make_threshold_classifier(mix)
        rep["classifier"] = {"threshold": cls.threshold, "fidelity_minus": cls.fidelity_minus,
                             "fidelity_zero": cls.fidelity_zero}
    except UnresolvedMixtureError:
        warnings.warn("mixture components are not resolved; no threshold classifier", RuntimeWarning)
        rep["classifier"] = None
    k = np.arange(hist.size)
    plot = {"counts": k, "occurrences": hist, "mixture_fit": mix.pmf(k)}
    return rep, plot, mix.converged


def _fit_flip(cfg, path):
    t = _parse(lambda p: read_table(p, ["duration_ms", "flip_minus"],
                                    ["flip_zero", "n_minus", "n_zero", "sigma_minus", "sigma_zero"]), path)
    fit = fit_flip_curve(t["duration_ms"], t["flip_minus"], t.get("flip_zero"),
                         shots_minus=t.get("n_minus"), shots_zero=t.get("n_zero"),
                         sigma_minus=t.get("sigma_minus"), sigma_zero=t.get("sigma_zero"))
    rep = fit.result.to_json_dict()
    err = fit.rate_errors
    rep["rates"] = {"lambda_ion": fit.rates.lambda_ion, "lambda_ion_err": float(err[0]),
                    "lambda_rec": fit.rates.lambda_rec, "lambda_rec_err": float(err[1]),
                    "rate_covariance": fit.rate_covariance}
    d = t["duration_ms"]
    rise = -np.expm1(-fit.lambda_tot * d)
    plot = {"duration_ms": d, "flip_minus": t["flip_minus"], "fit_minus": fit.p_infinity * rise}
    if "flip_zero" in t:
        plot.update(flip_zero=t["flip_zero"], fit_zero=(1 - fit.p_infinity) * rise)
    return rep, plot, fit.result.converged


def _fit_rate_power(cfg, path):
    t = _parse(lambda p: read_table(p, ["power_uw", "rate"], ["sigma"]), path)
    fit = fit_rate_vs_power(t["power_uw"], t["rate"], sigma=t.get("sigma"), quadratic_only=cfg.quadratic_only)
    rep = fit.result.to_json_dict()
    rep["coefficients"] = {"a": fit.a, "a_err": fit.a_err, "b": fit.b, "b_err": fit.b_err,
                           "covariance": fit.covariance}
    plot = {"power_uw": t["power_uw"], "rate": t["rate"], "fit": fit.law(t["power_uw"])}
    return rep, plot, fit.result.converged


def _fit_saturation(cfg, path):
    t = _parse(lambda p: read_table(p, ["power_uw", "fluorescence"], ["sigma"]), path)
    fit = fit_saturation(t["power_uw"], t["fluorescence"], sigma=t.get("sigma"))
    rep = fit.result.to_json_dict()
    rep["saturating"] = fit.saturating
    plot = {"power_uw": t["power_uw"], "fluorescence": t["fluorescence"], "fit": fit(t["power_uw"])}
    return rep, plot, fit.result.converged


def _fit_energy(cfg, path):
    t = _parse(lambda p: read_table(p, ["rate"], ["wavelength_nm", "energy_ev", "sigma"]), path)
    if "energy_ev" in t:
        e = t["energy_ev"]
    elif "wavelength_nm" in t:
        e = wavelength_to_energy(t["wavelength_nm"])
    else:
        raise InputFormatError(f"{path}: needs a wavelength_nm or energy_ev column")
    sigma = t.get("sigma") if cfg.weighted else None
    max_e = cfg.max_energy_ev
    if max_e is None and cfg.use_cutoff and cfg.branch == "ionization":
        max_e = ION_FIT_MAX_ENERGY
    if not cfg.use_cutoff:
        max_e = None
    fit = fit_ionization_energy(e, t["rate"], sigma=sigma, fix_sigma=cfg.fix_sigma, max_energy=max_e)
    rep = fit.result.to_json_dict()
    rep.update(branch=cfg.branch, E0_ev=fit.params.E0, E0_err_ev=fit.E0_err,
               sigma_fixed=fit.sigma_fixed, n_used=fit.n_used, max_energy_ev=max_e)
    plot = {"energy_ev": e, "rate": t["rate"], "fit": energy_model_rate(fit.params, e),
            "used": (e <= max_e).astype(int) if max_e else np.ones(e.size, dtype=int)}
    return rep, plot, fit.result.converged


_FITTERS = {"trace-hmm": _fit_trace, "histogram": _fit_histogram, "flip": _fit_flip,
            "rate-power": _fit_rate_power, "saturation": _fit_saturation, "energy": _fit_energy}


def _fit(args, cfg):
    path = _input_path(cfg.input)
    rep, plot, converged = _FITTERS[args.subcommand](cfg, path)
    rep["provenance"] = {"tool_version": __version__, "input": str(path), "input_sha256": sha256_file(path),
                         "config_hash": config_hash(cfg.model_dump(mode="json"))}
    outputs = [write_json(rep, args.out / "report.json")]
    if cfg.plot_data:
        outputs.append(write_csv(args.out / "fit_curve.csv", list(plot), list(plot.values())))
    return [path], outputs, converged


# ---------------------------------------------------------------------------
# reproduce

def _reproduce(args, cfg):
    from . import reproduce
    jobs = args.jobs or cfg.jobs
    tables = reproduce.run(args.subcommand, cfg.seed, jobs=jobs, shots=cfg.shots, cycles=cfg.cycles,
                           init_duration_ms=cfg.init_duration_ms)
    outputs = reproduce.write_tables(tables, args.out)
    if args.figures:
        from .plotting import render_figure
        outputs.append(render_figure(args.subcommand, tables, args.out))
    return [], outputs


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = utc_now()
    try:
        cfg = _load(args)
        converged = True
        if args.command == "simulate":
            inputs, outputs = _simulate(args, cfg)
        elif args.command == "fit":
            inputs, outputs, converged = _fit(args, cfg)
        else:
            inputs, outputs = _reproduce(args, cfg)
        _finish(args, cfg, started, inputs, outputs)
        if not converged:
            raise NotConverged("fit did not converge; report written")
    except (ValidationError, DomainError) as exc:
        print(f"nvpd: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, NotConverged) as exc:
        print(f"nvpd: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"nvpd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in outputs:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

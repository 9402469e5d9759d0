"""Optional PNG rendering of the reproduction tables (``--figures``).

The CSV tables are the primary output; these figures are a convenience and
are not covered by the byte-identity guarantee.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _by_wavelength(table, *cols):
    wl = table["wavelength_nm"]
    for nm in np.unique(wl):
        sel = wl == nm
        yield nm, [table[c][sel] for c in cols]


def _fig3(t, plt):
    fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(10, 4))
    for nm, (p, ion, ie, rec, re_) in _by_wavelength(t["fig3a_rates"], "power_uw", "lambda_ion",
                                                      "lambda_ion_err", "lambda_rec", "lambda_rec_err"):
        ax_a.errorbar(p, ion, ie, fmt="o", label=f"ion {nm:g} nm")
        ax_a.errorbar(p, rec, re_, fmt="s", label=f"rec {nm:g} nm")
    for nm, (p, ion, rec) in _by_wavelength(t["fig3a_fits"], "power_uw", "lambda_ion_fit", "lambda_rec_fit"):
        ax_a.plot(p, ion, "-", color="0.4", lw=0.8)
        ax_a.plot(p, rec, "--", color="0.4", lw=0.8)
    ax_a.set(xlabel="power (uW)", ylabel="rate (1/ms)")
    ax_a.legend(fontsize=7)
    for nm, (p, pm, pe) in _by_wavelength(t["fig3b_population"], "power_uw", "p_minus", "p_minus_err"):
        ax_b.errorbar(p, pm, pe, fmt="o", label=f"{nm:g} nm")
    ax_b.set(xlabel="power (uW)", ylabel="P(NV-)", ylim=(0, 1))
    ax_b.legend(fontsize=7)
    return fig


def _fig4(t, plt):
    d = t["fig4"]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    x = d["wavelength_nm"]
    for ax, (y, e, lab) in zip(axes.flat, [
            ("lambda_ion", "lambda_ion_err", "ionization rate (1/ms)"),
            ("lambda_rec", "lambda_rec_err", "recombination rate (1/ms)"),
            ("fl_minus", "fl_minus_err", "NV- fluorescence (counts/ms)"),
            ("p_minus", "p_minus_err", "P(NV-)")]):
        ax.errorbar(x, d[y], d[e], fmt="o-")
        ax.set_ylabel(lab)
    for ax in axes[1]:
        ax.set_xlabel("wavelength (nm)")
    return fig


def _fig5c(t, plt):
    fig, (ax_b, ax_c) = plt.subplots(1, 2, figsize=(10, 4))
    h = t["fig5b_histogram"]
    ax_b.bar(h["counts"], h["occurrences"], width=1.0, color="0.75")
    ax_b.plot(h["counts"], h["mixture_fit"], "r-")
    ax_b.set(xlabel="photon counts", ylabel="occurrences")
    d = t["fig5c_population"]
    ax_c.errorbar(d["wavelength_nm"], d["p_minus"], d["p_minus_err"], fmt="o")
    ax_c.plot(d["wavelength_nm"], d["p_minus_true"], "-", color="0.5", lw=0.8)
    ax_c.set(xlabel="wavelength (nm)", ylabel="P(NV-)", ylim=(0, 1))
    return fig


def _fig6(t, plt):
    fig, axes = plt.subplots(1, 3, figsize=(14, 4))
    f = t["fig6b_flip"]
    ax = axes[0]
    ax.errorbar(f["duration_ms"], f["flip_minus"], f["flip_minus_err"], fmt="o", label="from NV-")
    ax.errorbar(f["duration_ms"], f["flip_zero"], f["flip_zero_err"], fmt="s", label="from NV0")
    ax.plot(f["duration_ms"], f["fit_minus"], "r-")
    ax.plot(f["duration_ms"], f["fit_zero"], "r--")
    ax.set(xlabel="pulse duration (ms)", ylabel="flip probability")
    ax.legend(fontsize=7)
    ax = axes[1]
    for nm, (p, ion, ie) in _by_wavelength(t["fig6c_rates"], "power_uw", "lambda_ion", "lambda_ion_err"):
        if nm in (440.0, 470.0, 500.0):
            ax.errorbar(p, ion, ie, fmt="o", label=f"ion {nm:g} nm")
    for nm, (p, ion) in _by_wavelength(t["fig6c_fits"], "power_uw", "lambda_ion_fit"):
        if nm in (440.0, 470.0, 500.0):
            ax.plot(p, ion, "-", color="0.4", lw=0.8)
    ax.set(xlabel="power (uW)", ylabel="rate (1/ms)")
    ax.legend(fontsize=7)
    ax = axes[2]
    d, m = t["fig6d_linear"], t["fig6d_model"]
    ax.errorbar(d["energy_ev"], d["a_ion"], d["a_ion_err"], fmt="o", label="ionization")
    ax.errorbar(d["energy_ev"], d["a_rec"], d["a_rec_err"], fmt="s", label="recombination")
    ax.plot(m["energy_ev"], m["a_ion_model"], "r-")
    ax.plot(m["energy_ev"], m["a_rec_model"], "r--")
    ax.set(xlabel="photon energy (eV)", ylabel="linear part a (1/(ms uW))")
    ax.legend(fontsize=7)
    return fig


_RENDER = {"fig3": _fig3, "fig4": _fig4, "fig5c": _fig5c, "fig6": _fig6}


def render_figure(figure: str, tables: dict, out_dir) -> Path:
    """Draw ``figure`` from its tables into ``out_dir/<figure>.png``."""
    plt = _pyplot()
    fig = _RENDER[figure](tables, plt)
    fig.tight_layout()
    path = Path(out_dir) / f"{figure}.png"
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path

"""Static SVG figures.

Output is byte-stable: the SVG date stamp is dropped and element ids are
derived from a fixed hash salt.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectra import Spectrum, vvw_strong_impact_width  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ammonia-qmd"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def trajectory_svg(path, times, values, impacts=(), ylabel=r"$|\alpha|^2$"):
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(times, values, lw=0.8, color="k")
    for t in impacts:
        ax.axvline(t, color="tab:red", lw=0.6, ls=":")
    ax.set_xlabel("time (cycles)")
    ax.set_ylabel(ylabel)
    ax.set_xlim(times[0], times[-1])
    fig.tight_layout()
    _save(fig, path)


def spectrum_svg(path, spectrum: Spectrum, fit=None, nu_max=4.0):
    keep = (spectrum.frequencies > 0) & (spectrum.frequencies <= nu_max)
    nu = spectrum.frequencies[keep]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(nu, spectrum.power[keep], lw=0.7, color="0.4", label=spectrum.quantity)
    if fit is not None:
        ax.plot(nu, fit.model(nu), color="tab:red", lw=1.2,
                label=rf"fit $\nu_0$={fit.nu0:.3f}, b={fit.b:.3f}")
    ax.set_xlabel(r"$\nu$ (cycles$^{-1}$)")
    ax.set_ylabel(spectrum.quantity)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def sweep_svg(path, result, x="p"):
    p = result.p if x == "p" else result.column("pressure_bar")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.errorbar(p, result.column("nu0"), yerr=result.column("nu0_se"), fmt="o-", ms=3)
    a1.set_ylabel(r"peak frequency $\nu_0$")
    a2.errorbar(p, result.column("b"), yerr=result.column("b_se"), fmt="o-", ms=3, label="fit")
    if x == "p":
        a2.plot(p, vvw_strong_impact_width(p), "k--", lw=0.8, label=r"$p/2\pi$")
    a2.set_ylabel("width b")
    a2.legend(frameon=False)
    for ax in (a1, a2):
        ax.set_xlabel("impacts per cycle" if x == "p" else "pressure (bar)")
    fig.suptitle(result.model)
    fig.tight_layout()
    _save(fig, path)


def comparison_svg(path, result, data, report):
    mp = result.column("pressure_bar")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.plot(mp, result.column("nu0"), "-", label="model")
    a1.plot(data.pressure_bar, data.nu0_norm, "o", ms=4, label="data")
    a1.set_ylabel(r"$\nu_0/\nu_{00}$")
    a2.plot(mp, result.column("b"), "-", label="model")
    a2.plot(data.pressure_bar, data.b_norm, "o", ms=4, label="data")
    a2.set_ylabel(r"$b/\nu_{00}$")
    for ax in (a1, a2):
        ax.set_xlabel(f"pressure (bar), {report.p_per_bar:g} impacts/cycle per bar")
        ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def coherence_svg(path, stats, times=None, traces=None):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    centers = 0.5 * (stats.bin_edges[1:] + stats.bin_edges[:-1])
    width = np.diff(stats.bin_edges)
    a1.bar(centers, stats.histogram / stats.histogram.sum() / width, width=width,
           color="0.6", edgecolor="k", lw=0.4)
    a1.set_xlabel(r"$|\alpha|^2$")
    a1.set_ylabel("density")
    if traces is not None:
        for tr in traces:
            a2.plot(times, tr, lw=0.5)
    a2.axhline(stats.mean_abs_coherence, color="k", ls="--", lw=0.8)
    a2.set_xlabel("time (cycles)")
    a2.set_ylabel(r"$|\rho_{LR}|$")
    fig.tight_layout()
    _save(fig, path)

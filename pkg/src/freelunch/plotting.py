"""SVG figures regenerated purely from the CSV files of a run directory."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sweep import read_csv  # noqa: E402

LABELS = {
    "tau": r"$\tau$ [s]",
    "n": r"$n$",
    "r": r"squeezing $r$",
    "theta": r"$\theta$ [rad]",
    "T": r"$T$ [K]",
}
# fixed metadata and id salt so reruns give byte-identical files
SVG_META = {"Date": None, "Creator": "freelunch"}
STYLE = {"svg.hashsalt": "freelunch", "figure.figsize": (6.4, 4.0), "axes.grid": True, "grid.alpha": 0.3}


def _axis(ax, var, x):
    ax.set_xlabel(LABELS.get(var, var))
    x = np.asarray(x)
    if var == "tau" and np.all(x > 0) and x.max() / x.min() > 10:
        ax.set_xscale("log")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    return path


def plot_free_lunch(cols, var, path, extrema=None):
    x = cols[var]
    fig, ax = plt.subplots()
    ax.plot(x, cols["P_freelunch"], lw=1.2, label="analytic")
    if "freq_mc" in cols:
        lo = cols["freq_mc"] - cols["wilson_lo"]
        hi = cols["wilson_hi"] - cols["freq_mc"]
        ax.errorbar(x, cols["freq_mc"], yerr=[lo, hi], fmt="o", ms=3, capsize=2, label="Monte Carlo (99%)")
    if extrema is not None:
        kinds = np.asarray(extrema["kind"])
        for kind, marker in (("max", "^"), ("min", "v")):
            sel = kinds == kind
            if np.any(sel):
                ax.plot(extrema["tau"][sel], extrema["P_freelunch"][sel], marker, ms=4, ls="none",
                        label=f"refined {kind}")
    ax.set_ylabel(r"$P(w < \Delta F)$")
    ax.set_ylim(-0.02, 0.52)
    _axis(ax, var, x)
    ax.legend(loc="best", fontsize="small")
    return _save(fig, path)


def plot_irreversible_work(cols, var, path):
    x = cols[var]
    fig, ax = plt.subplots()
    ax.plot(x, cols["W_irr_per_n"], lw=1.2)
    ax.set_ylabel(r"$W_{irr}/n$ [J]")
    _axis(ax, var, x)
    return _save(fig, path)


def plot_variance(cols, var, path):
    x = cols[var]
    fig, ax = plt.subplots()
    for key, label in (("var_thermal", r"$\sigma_\beta^2$"), ("var_q_st", "quantum stationary"),
                       ("var_q_nst", "quantum non-stationary"), ("var_total", "total")):
        ax.plot(x, cols[key], lw=1.0, label=label)
    ax.set_ylabel(r"work variance [J$^2$]")
    _axis(ax, var, x)
    ax.legend(loc="best", fontsize="small")
    return _save(fig, path)


def plot_histogram(hist, row, path):
    lo, hi, counts = hist["bin_lo"], hist["bin_hi"], hist["count"]
    width = hi - lo
    total = counts.sum()
    fig, ax = plt.subplots()
    ax.bar(lo, counts / (total * width), width=width, align="edge", alpha=0.5, label="Monte Carlo")
    mean, var = row["W"][0], row["var_total"][0]
    if var > 0:
        w = np.linspace(lo[0], hi[-1], 400)
        ax.plot(w, np.exp(-(w - mean) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var), label="analytic Gaussian")
    ax.axvline(row["dF"][0], color="k", ls="--", lw=1, label=r"$\Delta F$")
    ax.set_xlabel("work w [J]")
    ax.set_ylabel("density [1/J]")
    ax.legend(loc="best", fontsize="small")
    return _save(fig, path)


def plot_results(outdir):
    """Write every figure the CSVs in ``outdir`` support; returns the paths."""
    written = []
    with plt.rc_context(STYLE):
        header, cols = read_csv(os.path.join(outdir, "results.csv"))
        var = header[0]
        if len(cols[var]) > 1:
            ext_path = os.path.join(outdir, "extrema.csv")
            extrema = read_csv(ext_path)[1] if os.path.exists(ext_path) else None
            written.append(plot_free_lunch(cols, var, os.path.join(outdir, "free_lunch.svg"), extrema))
            written.append(plot_irreversible_work(cols, var, os.path.join(outdir, "irreversible_work.svg")))
            written.append(plot_variance(cols, var, os.path.join(outdir, "variance.svg")))
        hist_path = os.path.join(outdir, "histogram.csv")
        if os.path.exists(hist_path):
            written.append(plot_histogram(read_csv(hist_path)[1], cols,
                                          os.path.join(outdir, "work_histogram.svg")))
    return written

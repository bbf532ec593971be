"""Analytic and Monte Carlo runs driven by a RunConfig, with CSV output."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig, echo
from .montecarlo import THREADS_ENV, compare_to_analytic, run_ensemble
from .scan import scan_free_lunch
from .thermo import ForceProtocol, analyze, work_statistics

ANALYTIC_COLUMNS = ("W", "W_irr", "W_irr_per_n", "var_thermal", "var_q_st", "var_q_nst",
                    "var_total", "var_total_per_n", "dF", "I", "P_freelunch")
MC_COLUMNS = ("W_mc", "var_mc", "freq_mc", "wilson_lo", "wilson_hi")
EXTREMA_COLUMNS = ("kind", "tau", "W_irr", "P_freelunch")
HISTOGRAM_COLUMNS = ("bin_lo", "bin_hi", "count")


def columns(sweep_var, mc=False):
    return (sweep_var,) + ANALYTIC_COLUMNS + (MC_COLUMNS if mc else ())


def format_number(value):
    return f"{float(value):.17e}"


def _protocol(config: RunConfig, var=None, value=None):
    params, state, tau = config.params, config.state, config.tau
    if var == "tau":
        tau = float(value)
    elif var == "T":
        params = params.replace(T=float(value))
    elif var in ("n", "r", "theta"):
        state = state.replace(**{var: float(value)})
    return ForceProtocol(state, params, tau)


def _analytic_row(r, n):
    per_n = (lambda v: v / n) if n > 0 else (lambda v: float("nan"))
    return {
        "W": r["W"], "W_irr": r["W_irr"], "W_irr_per_n": per_n(r["W_irr"]),
        "var_thermal": r["var_thermal"], "var_q_st": r["var_q_st"], "var_q_nst": r["var_q_nst"],
        "var_total": r["var_total"], "var_total_per_n": per_n(r["var_total"]),
        "dF": r["dF"], "I": r["I"], "P_freelunch": r["P"],
    }


def _mc_row(config: RunConfig, proto):
    ens = run_ensemble(proto, config.flags, config.N, config.seed, config.steps_per_period)
    return {"W_mc": ens.mean, "var_mc": ens.var, "freq_mc": ens.freelunch_freq,
            "wilson_lo": ens.wilson[0], "wilson_hi": ens.wilson[1]}, ens


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def sweep_rows(config: RunConfig):
    """One dict per sweep point, in sweep order."""
    axis = config.sweep
    values = axis.values()
    var = axis.var
    if var == "tau":
        proto = _protocol(config, "tau", values.max())
        res = analyze(proto, config.flags, values)
        rows = []
        for i, v in enumerate(values):
            r = {k: np.asarray(res[k])[i] for k in ("W", "W_irr", "var_thermal", "var_q_st", "var_q_nst",
                                                     "var_total", "dF", "I", "P")}
            rows.append({var: v, **_analytic_row(r, config.state.n)})
    else:
        def point(v):
            proto = _protocol(config, var, v)
            n = proto.state.n
            return {var: v, **_analytic_row(analyze(proto, config.flags), n)}
        with ThreadPoolExecutor(_threads()) as pool:
            rows = list(pool.map(point, values))
    if config.mc:
        for row in rows:
            mc, _ = _mc_row(config, _protocol(config, var, row[var]))
            row.update(mc)
    return rows


def write_csv(path, rows, cols):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(cols)
            for row in rows:
                out.writerow([row[c] if isinstance(row[c], str) else format_number(row[c]) for c in cols])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path):
    """Header and a dict of float columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        data = list(csv.reader(fh))
    header, body = data[0], data[1:]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in body])
        except ValueError:
            cols[name] = [r[j] for r in body]
    return header, cols


def prepare_output(config: RunConfig):
    try:
        os.makedirs(config.out, exist_ok=True)
        with open(os.path.join(config.out, "config.echo"), "w", encoding="utf-8") as fh:
            fh.write(echo(config))
    except OSError as exc:
        raise OSError(f"cannot write to output directory {config.out}: {exc.strerror or exc}") from exc


def tau_extrema(config: RunConfig):
    """Reversible points and per-lobe minima of P over the tau sweep range."""
    axis = config.sweep
    proto = _protocol(config, "tau", axis.max)
    _, rev, mins = scan_free_lunch(proto, config.flags, axis.min, axis.max)
    rows = []
    for t in rev.all:
        r = analyze(proto.with_tau(t), config.flags)
        rows.append({"kind": "max", "tau": t, "W_irr": r["W_irr"], "P_freelunch": r["P"]})
    for t, p in mins:
        r = analyze(proto.with_tau(t), config.flags)
        rows.append({"kind": "min", "tau": t, "W_irr": r["W_irr"], "P_freelunch": p})
    rows.sort(key=lambda row: row["tau"])
    return rows


def run_sweep(config: RunConfig):
    """Write results.csv (and extrema.csv for tau sweeps, SVGs with ``svg``)."""
    prepare_output(config)
    rows = sweep_rows(config)
    cols = columns(config.sweep.var, config.mc)
    path = os.path.join(config.out, "results.csv")
    write_csv(path, rows, cols)
    written = [path]
    if config.sweep.var == "tau" and config.sweep.points > 1:
        ext = os.path.join(config.out, "extrema.csv")
        write_csv(ext, tau_extrema(config), EXTREMA_COLUMNS)
        written.append(ext)
    if config.svg and len(rows) > 1:
        from .plotting import plot_results
        written += plot_results(config.out)
    return rows, written


def run_analytic(config: RunConfig):
    prepare_output(config)
    proto = _protocol(config)
    r = analyze(proto, config.flags)
    row = {"tau": config.tau, **_analytic_row(r, config.state.n)}
    path = os.path.join(config.out, "results.csv")
    write_csv(path, [row], columns("tau"))
    return row, [path]


def run_montecarlo(config: RunConfig):
    prepare_output(config)
    proto = _protocol(config)
    r = analyze(proto, config.flags)
    mc, ens = _mc_row(config, proto)
    row = {"tau": config.tau, **_analytic_row(r, config.state.n), **mc}
    path = os.path.join(config.out, "results.csv")
    write_csv(path, [row], columns("tau", mc=True))
    report = compare_to_analytic(ens, work_statistics(proto, config.flags))
    hist = os.path.join(config.out, "histogram.csv")
    edges, counts = ens.hist_edges, ens.hist_counts
    write_csv(hist, [{"bin_lo": edges[i], "bin_hi": edges[i + 1], "count": counts[i]}
                     for i in range(len(counts))], HISTOGRAM_COLUMNS)
    written = [path, hist]
    if config.svg:
        from .plotting import plot_results
        written += plot_results(config.out)
    return row, report, written

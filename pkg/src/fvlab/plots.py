"""Figure rendering for the CLI report path.

Every function takes plain rows (the same data that lands in the CSVs) and
writes one PNG next to the delimited output.  Rendering is optional at the
CLI level; nothing here feeds back into the numerics.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_rates(rows, path):
    """I and I~ over the speed grid; saturated points drawn at the cap."""
    xs = [r[0] for r in rows]
    i_vals = [min(r[1], 10.0) if not math.isinf(r[1]) else 10.0 for r in rows]
    it_vals = [r[2] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(xs, i_vals, "b-")
    ax1.set_xlabel("x")
    ax1.set_ylabel("I(x)")
    ax2.plot(xs, it_vals, "r-")
    ax2.set_xlabel("x")
    ax2.set_ylabel(r"$\tilde{I}(x)$")
    ax2.set_ylim(-0.02, 1.02)
    return _finish(fig, path)


def plot_max_paths(rows, path):
    """Piecewise-constant running maximum per replica."""
    fig, ax = plt.subplots(figsize=(7, 4))
    by_rep: dict[int, list[tuple[float, int]]] = {}
    for rep, t, m in rows:
        by_rep.setdefault(int(rep), []).append((float(t), int(m)))
    for rep, pts in sorted(by_rep.items()):
        ts = [p[0] for p in pts]
        ms = [p[1] for p in pts]
        ax.step(ts, ms, where="post", alpha=0.7, label=f"replica {rep}" if rep < 8 else None)
    ax.set_xlabel("time")
    ax.set_ylabel("rightmost position M(t)")
    if len(by_rep) <= 8:
        ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_tail(rows, path):
    """Empirical exceedance (with CI) against the exp(-chi) bound."""
    chis = [r.chi for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(chis, [r.frequency for r in rows],
                yerr=[[max(r.frequency - r.ci_low, 0.0) for r in rows],
                      [max(r.ci_high - r.frequency, 0.0) for r in rows]],
                fmt="o", capsize=4, label="empirical")
    ax.plot(chis, [r.bound for r in rows], "k--", label=r"$e^{-\chi}$")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\chi$")
    ax.set_ylabel("exceedance probability")
    ax.set_ylim(bottom=max(min(r.bound for r in rows) * 1e-6, 1e-12))
    ax.legend()
    return _finish(fig, path)


def plot_bad_set(rows, path):
    """Per-event frequencies (upper CI whiskers) against the analytic bounds."""
    names = [r.event for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.2, [max(r.frequency, 1e-12) for r in rows], 0.4, label="frequency")
    ax.bar(x + 0.2, [r.bound for r in rows], 0.4, label="bound")
    for xi, r in zip(x, rows):
        ax.plot([xi - 0.2, xi - 0.2], [max(r.frequency, 1e-12), max(r.ci_high, 1e-12)], "k-")
    ax.set_yscale("log")
    ax.set_xticks(x, names, rotation=20)
    ax.set_ylabel("probability")
    ax.legend()
    return _finish(fig, path)


def plot_drift(rows, path):
    """Drift estimate per starting height with the region boundary."""
    fig, ax = plt.subplots(figsize=(7, 4))
    m0s = [r.m0 for r in rows]
    ests = [r.estimate.mean for r in rows]
    ax.errorbar(m0s, ests,
                yerr=[[r.estimate.mean - r.estimate.lo for r in rows],
                      [r.estimate.hi - r.estimate.mean for r in rows]],
                fmt="o-", capsize=4)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("initial height M(0)")
    ax.set_ylabel(r"$E[e^{\delta M_T}] - e^{\delta M_0}$")
    ax.set_yscale("symlog", linthresh=1e-4)
    return _finish(fig, path)


def plot_scaling(rows, slope, intercept, path):
    """Median stationary maximum against log N with the least-squares fit."""
    ns = [r.n_walks for r in rows]
    medians = [r.quantiles[0.5] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.log(ns), medians, "bo", label="median max")
    for q in (0.1, 0.9):
        ax.plot(np.log(ns), [r.quantiles[q] for r in rows], "b.", alpha=0.4)
    if slope is not None:
        xs = np.linspace(math.log(min(ns)) - 0.2, math.log(max(ns)) + 0.2, 50)
        ax.plot(xs, slope * xs + intercept, "k--",
                label=f"fit: {slope:.2f} logN + {intercept:.2f}")
    ax.set_xlabel("log N")
    ax.set_ylabel("stationary rightmost position")
    ax.legend()
    return _finish(fig, path)


def plot_qsd(mass_rows, tv_rows, path):
    """Oracle mass function, with the TV trend inset when a grid was run."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    states = [r[0] for r in mass_rows]
    masses = [r[1] for r in mass_rows]
    hi = max((s for s, m in zip(states, masses) if m > 1e-8), default=30)
    ax.bar(states[:hi], masses[:hi], width=0.9)
    ax.set_xlabel("state")
    ax.set_ylabel("oracle mass")
    if tv_rows:
        inset = fig.add_axes([0.58, 0.55, 0.35, 0.33])
        inset.plot([r[0] for r in tv_rows], [r[1] for r in tv_rows], "ro-")
        inset.set_xscale("log")
        inset.set_xlabel("N", fontsize=8)
        inset.set_ylabel("TV(empirical, oracle)", fontsize=8)
        inset.tick_params(labelsize=7)
    return _finish(fig, path)

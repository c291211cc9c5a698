"""Figure rendering for CLI reports.

Every report path that writes a delimited table can also render a
matching figure next to it; all figures go through Agg so headless runs
work.  Styling is deliberately plain: log-log convergence panels, time
series, and annulus error maps.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.figsize"] = (6.0, 4.2)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3
plt.rcParams["savefig.dpi"] = 150


def save_calibration_curves(path, curves, constants=None):
    """Optimal shift against smoothing, one curve per profile."""
    fig, ax = plt.subplots()
    for label, deltas, shifts in curves:
        ax.plot(deltas, shifts, label=label)
    ax.axhline(0.0, color="k", lw=0.8)
    if constants:
        for label, value in constants.items():
            ax.axvline(value, color="gray", lw=0.6, ls=":")
    ax.set_xlabel("smoothing width")
    ax.set_ylabel("optimal shift")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_convergence(path, groups, xlabel, ylabel, slopes=None):
    """Log-log convergence curves, one per mask/label group."""
    fig, ax = plt.subplots()
    for label, xs, ys in groups:
        tag = label
        if slopes and label in slopes and slopes[label] is not None:
            tag = f"{label} (slope {slopes[label]:.2f})"
        ax.loglog(xs, ys, "o-", ms=3, label=tag)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_force_series(path, series_map, column="fx"):
    fig, ax = plt.subplots()
    for label, series in series_map.items():
        ax.plot(series.times, getattr(series, column), label=label, lw=1.0)
    ax.set_xlabel("time")
    ax.set_ylabel(column)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_annulus_field(path, state, name="vorticity", r_max=8.0, clim=None):
    """Polar pcolormesh of one field of a flow snapshot."""
    field = getattr(state, name)
    mask = state.r <= r_max
    r = state.r[mask]
    theta = np.concatenate([state.theta, [2.0 * math.pi]])
    values = np.concatenate([field[mask], field[mask][:, :1]], axis=1)
    fig, ax = plt.subplots(subplot_kw={"projection": "polar"})
    mesh = ax.pcolormesh(theta, r, values, shading="auto", cmap="RdBu_r")
    if clim:
        mesh.set_clim(*clim)
    ax.set_yticklabels([])
    fig.colorbar(mesh, ax=ax, shrink=0.8, label=name)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_profile(path, solutions, xlabel="x", ylabel="value", reference=None):
    fig, ax = plt.subplots()
    if reference is not None:
        ax.plot(reference[0], reference[1], "k--", lw=1.0, label="reference")
    for label, sol in solutions:
        ax.plot(sol.grid.nodes, sol.values, lw=1.0, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

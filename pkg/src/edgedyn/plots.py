"""Figure rendering for the CLI report paths.

Every function draws one figure and writes it to a file next to the
delimited output it illustrates; the CSV stays the source of truth.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _finish(fig, out_path) -> str:
    fig.savefig(out_path, dpi=DPI, format="png")
    plt.close(fig)
    return str(out_path)


def histogram_figure(counts, edges, out_path, overlay_normal=False, title="",
                     xlabel="value"):
    """Density histogram from precomputed bins, optional standard-normal curve."""
    counts = np.asarray(counts, dtype=float)
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    density = counts / counts.sum() / widths
    fig, ax = plt.subplots(figsize=(5.2, 3.4), constrained_layout=True)
    ax.bar(edges[:-1], density, width=widths, align="edge",
           color="#9ecae1", edgecolor="#3182bd", linewidth=0.6)
    if overlay_normal:
        grid = np.linspace(edges[0] - 0.5, edges[-1] + 0.5, 400)
        ax.plot(grid, np.exp(-grid**2 / 2.0) / math.sqrt(2.0 * math.pi),
                color="#de2d26", linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, out_path)


def path_figure(times, counts, out_path, mean_curve=None, title="",
                xlabel="time", ylabel="edges present"):
    """Step plot of one sample path with an optional analytic mean curve."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4), constrained_layout=True)
    ax.step(times, counts, where="post", color="#3182bd", linewidth=0.8)
    if mean_curve is not None:
        grid = np.linspace(times[0], times[-1], 400)
        ax.plot(grid, [mean_curve(t) for t in grid], color="#de2d26", linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, out_path)


def stationary_figure(pmf, out_path, title=""):
    """Bar plot of a stationary edge-count distribution."""
    pmf = np.asarray(pmf, dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 3.4), constrained_layout=True)
    ax.bar(np.arange(pmf.size), pmf, color="#9ecae1", edgecolor="#3182bd", linewidth=0.6)
    ax.set_xlabel("edges present")
    ax.set_ylabel("probability")
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, out_path)


def diffusion_figure(times, rho, gprime, hprime, sigma2, out_path, title=""):
    """Mean path, noise integrands and fluctuation variance on one canvas."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(5.2, 4.6), sharex=True,
                                      constrained_layout=True)
    top.plot(times, rho, color="#3182bd", label="mean fraction")
    top.plot(times, sigma2, color="#de2d26", label="fluctuation variance")
    top.legend(fontsize=8, frameon=False)
    bottom.plot(times, gprime, color="#756bb1", label="modulation noise g'")
    bottom.plot(times, hprime, color="#31a354", label="edge noise h'")
    bottom.set_xlabel("time")
    bottom.legend(fontsize=8, frameon=False)
    if title:
        top.set_title(title, fontsize=10)
    return _finish(fig, out_path)


def rate_surface_figure(x_grid, y_grid, rates, out_path, title=""):
    """Heat map of the local rate function; infinite cells are masked."""
    masked = np.ma.masked_invalid(np.asarray(rates, dtype=float))
    fig, ax = plt.subplots(figsize=(5.2, 3.8), constrained_layout=True)
    mesh = ax.pcolormesh(x_grid, y_grid, masked.T, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="rate")
    ax.set_xlabel("edge fraction x")
    ax.set_ylabel("velocity y")
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, out_path)


def transient_figure(times, means, sds, out_path, title=""):
    """Transient mean with a +-1 sd band."""
    times = np.asarray(times, dtype=float)
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 3.4), constrained_layout=True)
    ax.plot(times, means, color="#3182bd")
    ax.fill_between(times, means - sds, means + sds, color="#9ecae1", alpha=0.6)
    ax.set_xlabel("time")
    ax.set_ylabel("edges present")
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, out_path)

"""Figures written next to the CSV output.  Headless (Agg) only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
})


def _triangulation(grid):
    tris = [(0, grid.index(1, j), grid.index(1, j + 1)) for j in range(grid.nt)]
    for i in range(1, grid.ns - 1):
        for j in range(grid.nt):
            a, b = grid.index(i, j), grid.index(i, j + 1)
            c, d = grid.index(i + 1, j), grid.index(i + 1, j + 1)
            tris += [(a, c, d), (a, d, b)]
    return mtri.Triangulation(grid.xy[:, 0], grid.xy[:, 1], np.array(tris))


def plot_solution(grid, rho, kappa, residual, path, title=None):
    """Radius, principal curvatures and residual over the chart domain."""
    tri = _triangulation(grid)
    panels = [("radius rho", rho), ("kappa_1", kappa[:, 0]), ("kappa_2", kappa[:, 1]),
              ("|residual|", np.abs(residual))]
    fig, axes = plt.subplots(1, 4, figsize=(13, 3.2))
    for ax, (name, val) in zip(axes, panels):
        im = ax.tripcolor(tri, val, shading="gouraud", cmap="viridis")
        ax.set_aspect("equal")
        ax.set_title(name)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_monitors(records, path):
    """Monitor history along the continuation path."""
    steps = np.arange(len(records))
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(steps, [r.sup_u for r in records], "o-", ms=3, label="sup u")
    axes[0].plot(steps, [r.inf_u for r in records], "s-", ms=3, label="inf u")
    axes[0].legend(frameon=False)
    axes[0].set_title("height bounds")
    axes[1].plot(steps, [r.min_v_minus_vunder for r in records], "o-", ms=3)
    axes[1].axhline(0.0, color="k", lw=0.6)
    axes[1].set_title("min(v - v_under)")
    axes[2].semilogy(steps, [max(r.residual_norm, 1e-18) for r in records], "o-", ms=3)
    axes[2].set_title("residual sup-norm")
    for ax in axes:
        ax.set_xlabel("accepted step")
    # mark the stage switch
    switch = next((k for k, r in enumerate(records) if r.stage == "xi"), None)
    if switch is not None:
        for ax in axes:
            ax.axvline(switch - 0.5, color="0.6", ls="--", lw=0.8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_convergence(h, errors, path, label="max |rho - rho_exact|"):
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    ax.loglog(h, errors, "o-", label=label)
    ref = errors[0] * (h / h[0]) ** 2
    ax.loglog(h, ref, "k--", lw=0.8, label="slope 2")
    ax.set_xlabel("radial spacing h")
    ax.set_ylabel("error")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

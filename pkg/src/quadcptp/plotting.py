"""Optional figure rendering for CLI runs.

matplotlib is imported lazily with the non-interactive Agg backend, so the
rest of the package never pays for it.
"""
from __future__ import annotations

import numpy as np

from .errors import QuadCPTPError


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise QuadCPTPError("--figure needs matplotlib (pip install 'quadcptp[plot]')") from None

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def plot_scan(beta1, beta2, eigenvalues, verdicts, path, locked: bool = False) -> None:
    """Region map of the verdict over the grid and eigenvalue curves on ``beta1 = beta2``.

    Parameters
    ----------
    beta1, beta2 : (m,) arrays
        Grid coordinates in row-major order.
    eigenvalues : (m, 2n) array
        Ascending eigenvalues of ``Xi_H`` per point.
    verdicts : sequence of str
    path : str or path-like
        Output file; the format follows the suffix.
    locked : bool
        Whether the grid is the diagonal only.
    """
    plt = _pyplot()
    b1 = np.asarray(beta1, float)
    b2 = np.asarray(beta2, float)
    ev = np.asarray(eigenvalues, float)
    ok = np.array([v == "CPTP" for v in verdicts])
    if locked:
        fig, ax = plt.subplots(figsize=(5, 4))
        diag = np.ones(b1.size, bool)
        axes = [ax]
    else:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        u1, u2 = np.unique(b1), np.unique(b2)
        grid = ok.reshape(u1.size, u2.size).T.astype(float)
        axes[0].pcolormesh(u1, u2, grid, shading="nearest", cmap="Greys", vmin=0, vmax=1.5)
        axes[0].set_xlabel(r"$\beta_1$")
        axes[0].set_ylabel(r"$\beta_2$")
        axes[0].set_title(r"shaded: $\Xi_H \succeq 0$")
        diag = np.isclose(b1, b2, rtol=1e-12, atol=0)
    ax = axes[-1]
    if diag.any():
        order = np.argsort(b1[diag])
        for k in range(ev.shape[1]):
            ax.plot(b1[diag][order], ev[diag][order, k], label=f"eig {k + 1}")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.legend(fontsize="small")
    ax.set_xlabel(r"$\beta_1 = \beta_2$")
    ax.set_ylabel(r"eigenvalues of $\Xi_H$")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_trajectory(states, path) -> None:
    """Means and covariance diagonal of a moment trajectory against time."""
    plt = _pyplot()
    t = np.array([s.time for s in states])
    mean = np.array([s.mean for s in states])
    var = np.array([np.diag(s.cov) for s in states])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for k in range(mean.shape[1]):
        axes[0].plot(t, mean[:, k], label=f"<x{k + 1}>")
        axes[1].plot(t, var[:, k], label=f"var x{k + 1}")
    for ax in axes:
        ax.set_xlabel("t")
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

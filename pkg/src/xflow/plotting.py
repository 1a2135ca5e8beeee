"""Figure rendering for reports and studies (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import DissipationLedger  # noqa: E402
from .grids import Grid  # noqa: E402

__all__ = [
    "ledger_figure",
    "profile_figure",
    "monitor_figure",
    "study_figure",
]


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def ledger_figure(ledger: DissipationLedger, path):
    """Energy decay, cumulative dissipation, and density norms over time."""
    t = ledger.column("t")
    dt = ledger.column("dt")
    cum_diss = np.concatenate([[0.0], np.cumsum(dt * ledger.column("grad_q_sq"))])[:-1]
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 3.6))
    ax = axes[0]
    ax.plot(t, ledger.column("e_rho"), label=r"$\int e(\rho)$")
    ax.plot(t, cum_diss, label=r"$\int_0^t\!\int |\nabla q|^2$")
    ax.plot(t, ledger.column("e_rho") + cum_diss, "--", lw=1,
            label="sum (balance check)")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("energy dissipation")
    ax = axes[1]
    for col, lbl in (("rho_l1", r"$\|\rho\|_1$"), ("rho_l2", r"$\|\rho\|_2$"),
                     ("rho_linf", r"$\|\rho\|_\infty$")):
        ax.plot(t, ledger.column(col), label=lbl)
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("density norms")
    return _save(fig, path)


def profile_figure(grid: Grid, snapshot: dict, derived, path):
    """Final-state fields: 1-d line profiles or 2-d density/pressure maps."""
    if grid.d == 1:
        (x,) = grid.cell_centers()
        fig, ax = plt.subplots(figsize=(6.5, 3.8))
        ax.plot(x, snapshot["rho1"], label=r"$\rho_1$")
        ax.plot(x, snapshot["rho2"], label=r"$\rho_2$")
        ax.plot(x, derived.rho, "k--", lw=1, label=r"$\rho$")
        ax.plot(x, derived.q, label="q")
        if np.any(snapshot["n"] > 0):
            ax.plot(x, snapshot["n"], ":", label="n")
        ax.set_xlabel("x")
        ax.set_title(f"t = {snapshot['t']:g}")
        ax.legend(fontsize=8)
        return _save(fig, path)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8))
    im0 = axes[0].imshow(derived.rho.T, origin="lower",
                         extent=(0, grid.L, 0, grid.L))
    axes[0].set_title(r"$\rho$")
    fig.colorbar(im0, ax=axes[0], shrink=0.85)
    im1 = axes[1].imshow(derived.q.T, origin="lower",
                         extent=(0, grid.L, 0, grid.L))
    axes[1].set_title("q")
    fig.colorbar(im1, ax=axes[1], shrink=0.85)
    fig.suptitle(f"t = {snapshot['t']:g}")
    return _save(fig, path)


def monitor_figure(monitors, path):
    """LHS/RHS ratio per estimate; exact bounds must sit at or below 1."""
    names = [m.name for m in monitors]
    ratios = [min(m.ratio, 1e3) for m in monitors]
    colors = ["tab:blue" if m.kind == "exact" else "tab:orange" for m in monitors]
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    ax.bar(range(len(names)), ratios, color=colors)
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
    ax.set_yscale("log")
    ax.set_ylabel("LHS / RHS")
    ax.set_title("a priori estimate monitors")
    return _save(fig, path)


def study_figure(table, path):
    """One figure per study table, on axes natural to the sweep."""
    name = table.name
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    if name == "vanishing_viscosity":
        g = table.column("gamma")
        pos = g > 0
        ax.loglog(g[pos], table.column("grad_q_distance")[pos], "o-")
        ax.set_xlabel(r"$\gamma$")
        ax.set_ylabel(r"$\|\nabla q_\gamma - \nabla q_0\|_{L^2(Q_T)}$")
        ax.set_title("vanishing viscosity")
    elif name == "incompressible_limit":
        m = table.column("m")
        ax.semilogy(m, np.maximum(table.column("overshoot"), 1e-16), "o-",
                    label=r"$\max(\rho_m - 1)_+$")
        ax.semilogy(m, np.maximum(table.column("complementarity"), 1e-16), "s-",
                    label=r"$\int (1-\rho_m)_+ p_m^+$")
        cauchy = table.column("cauchy")
        ax.semilogy(m[1:], np.maximum(cauchy[1:], 1e-16), "^-",
                    label=r"$\|\nabla q_m - \nabla q_{prev}\|$")
        ax.set_xlabel("m")
        ax.legend(fontsize=8)
        ax.set_title("incompressible limit")
    elif name == "barenblatt":
        ax.loglog(table.column("N"), table.column("l1_error"), "o-")
        ax.set_xlabel("N")
        ax.set_ylabel(r"$L^1$ error / mass")
        ax.set_title("Barenblatt validation")
    elif name == "gamma_balance":
        g = table.column("gamma")
        ax.plot(g, table.column("balance"), "o-")
        ax.set_xscale("symlog", linthresh=1e-4)
        ax.set_xlabel(r"$\gamma$")
        ax.set_ylabel("B(T)")
        ax.set_title("viscous one-sidedness")
    elif name == "refinement":
        N = table.column("N")
        for col in table.columns[1:]:
            ax.plot(N, table.column(col), "o-", label=col)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.legend(fontsize=7)
        ax.set_title("refinement stability")
    else:
        for col in table.columns[1:]:
            ax.plot(table.column(table.columns[0]), table.column(col), label=col)
        ax.legend(fontsize=8)
    return _save(fig, path)

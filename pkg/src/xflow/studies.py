"""Empirical limit studies: vanishing viscosity, the m -> infinity
incompressible (Hele-Shaw) limit, and Barenblatt/refinement validation.

Sweeps share one grid and one set of initial data so the measured
dependence is purely on the swept parameter.  The viscosity sweep runs
its members in lockstep with a shared fixed time step, summing per-step
face-gradient differences for the exact L^2(Q_T) distance; the exponent
sweep lets every member use its own CFL step (the m = 64 member is two
orders of magnitude stiffer) and compares at shared checkpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DissipationLedger, dissipation_balance, estimate_monitors
from .energy import power_energy
from .generators import barenblatt_cell_averages, barenblatt_field
from .grids import Grid, gradient_faces, integrate
from .solver import (
    NumericalAbort,
    SimConfig,
    SimState,
    Stepper,
    derived_fields,
    run,
)

__all__ = [
    "StudyTable",
    "vanishing_viscosity_study",
    "gamma_balance_grid",
    "incompressible_limit_study",
    "barenblatt_validation",
    "refinement_study",
    "write_plot_data",
]


@dataclass
class StudyTable:
    name: str
    columns: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row width mismatch")
        self.rows.append(tuple(float(v) for v in values))

    def column(self, name) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def __len__(self):
        return len(self.rows)


def write_plot_data(table: StudyTable, path):
    """Whitespace-separated numeric columns with a '#' header line,
    consumable by any plotting tool; 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def write_csv(table: StudyTable, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(repr(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# lockstep driver (shared fixed dt across sweep members)


def _lockstep(configs, T, dt=None, margin=0.85, before_step=None):
    """Advance all configs with one shared fixed dt up to time T.

    dt defaults to `margin` times the tightest initial CFL bound in the
    sweep; every step re-checks each member's own CFL.  `before_step`
    receives (steppers, t, step_dt) with pre-step states.
    """
    steppers = [Stepper(c) for c in configs]
    ledgers = [DissipationLedger() for _ in configs]
    if dt is None:
        dt = margin * min(st.cfl_dt() for st in steppers)
    t = 0.0
    while t < T - 1e-12 * max(T, 1.0):
        step_dt = min(dt, T - t)
        if before_step is not None:
            before_step(steppers, t, step_dt)
        for st, led in zip(steppers, ledgers):
            led.append(**st.advance(dt_cap=step_dt, dt_override=step_dt))
        t += step_dt
    for st, led in zip(steppers, ledgers):
        st.state.t = T
        led.append(**st.terminal_row())
    return steppers, ledgers, dt


def _face_gradient_of_q(stepper):
    q = stepper.cfg.energy.eprime(stepper.state.rho1 + stepper.state.rho2)
    return gradient_faces(stepper.grid, q)


# ---------------------------------------------------------------------------
# vanishing viscosity


def vanishing_viscosity_study(base: SimConfig, gammas, T, dt=None) -> StudyTable:
    """Distances ||grad q_gamma - grad q_0||_{L^2(Q_T)} for a descending
    gamma list against the gamma = 0 member of the same sweep.

    All runs share grid, data, and energy; the gamma = 0 reference is
    appended when absent.  Aborting members abort the study; the partial
    table rides on the raised exception.
    """
    gammas = [float(g) for g in gammas]
    if sorted(gammas, reverse=True) != gammas:
        raise ValueError("gamma list must be descending")
    if 0.0 not in gammas:
        gammas = gammas + [0.0]
    if len(gammas) < 3:
        raise ValueError("sweep needs at least 3 members")
    configs = [base.with_updates(gamma=g, t_end=T) for g in gammas]
    ref_index = gammas.index(0.0)

    vol = base.grid.cell_volume
    dist_sq = np.zeros(len(gammas))
    self_sq = np.zeros(len(gammas))

    def before_step(steppers, t, step_dt):
        grads = [_face_gradient_of_q(st) for st in steppers]
        ref = grads[ref_index]
        for i, gq in enumerate(grads):
            acc_d = 0.0
            acc_s = 0.0
            for ga, ra in zip(gq.axes, ref.axes):
                diff = ga - ra
                acc_d += float(np.sum(diff * diff))
                acc_s += float(np.sum(ga * ga))
            dist_sq[i] += step_dt * acc_d * vol
            self_sq[i] += step_dt * acc_s * vol

    table = StudyTable(
        name="vanishing_viscosity",
        columns=("gamma", "grad_q_distance", "grad_q_norm"),
        meta={"T": T},
    )
    try:
        _, _, used_dt = _lockstep(configs, T, dt=dt, before_step=before_step)
    except NumericalAbort as exc:
        for g, d2, s2 in zip(gammas, dist_sq, self_sq):
            table.append(g, math.sqrt(d2), math.sqrt(s2))
        exc.partial_table = table
        raise
    table.meta["dt"] = used_dt
    order = sorted(range(len(gammas)), key=lambda i: -gammas[i])
    for i in order:
        table.append(gammas[i], math.sqrt(dist_sq[i]), math.sqrt(self_sq[i]))
    return table


def gamma_balance_grid(base: SimConfig, gammas, T, dt=None) -> StudyTable:
    """Dissipation balances B_gamma(T) on identical data across a gamma
    grid with one shared dt (viscosity only adds dissipation, so the
    column is nonincreasing in gamma up to the balance tolerance)."""
    configs = [base.with_updates(gamma=float(g), t_end=T) for g in gammas]
    steppers, ledgers, used_dt = _lockstep(configs, T, dt=dt)
    table = StudyTable(name="gamma_balance",
                       columns=("gamma", "balance", "relative", "tol"),
                       meta={"T": T, "dt": used_dt})
    for g, st, led in zip(gammas, steppers, ledgers):
        res = dissipation_balance(led, T, st.constants())
        table.append(g, res.balance, res.relative, res.tol)
    return table


# ---------------------------------------------------------------------------
# incompressible limit (m -> infinity)


def incompressible_limit_study(base: SimConfig, exponents, T,
                               checkpoints: int = 40) -> StudyTable:
    """Hele-Shaw signature metrics along an ascending exponent sweep.

    Per m: overshoot = max over the whole run of (rho_m - 1)_+ (from the
    per-step density sup), complementarity = the checkpoint integral of
    (1 - rho_m)_+ max(p_m, 0), and the Cauchy column
    ||grad q_m - grad q_prev||_{L^2(Q_T)} from shared-checkpoint
    gradients.  Requires rho^0 <= 1 and F3-compatible sources.
    """
    exponents = [float(m) for m in exponents]
    if sorted(exponents) != exponents or len(set(exponents)) != len(exponents):
        raise ValueError("exponent list must be strictly increasing")
    if len(exponents) < 3:
        raise ValueError("sweep needs at least 3 members")
    rho0 = base.rho1_init + base.rho2_init
    if float(rho0.max()) > 1.0 + 1e-12:
        raise ValueError("incompressible sweep requires rho^0 <= 1")
    if not base.sources.is_zero and not base.sources.monotone_column_sums:
        raise ValueError("incompressible sweep requires F3-compatible sources")

    every = T / checkpoints
    vol = base.grid.cell_volume
    table = StudyTable(
        name="incompressible_limit",
        columns=("m", "overshoot", "complementarity", "cauchy"),
        meta={"T": T, "checkpoints": checkpoints},
    )
    prev_grads = None
    for m in exponents:
        cfg = base.with_updates(energy=power_energy(m), t_end=T,
                                snapshot_every=every)
        traj = run(cfg)
        overshoot = max(float(np.max(traj.ledger.column("rho_linf"))) - 1.0, 0.0)

        # forward-rectangle checkpoint sums over [0, T): drop the endpoint
        comp = 0.0
        grads = []
        for snap in traj.snapshots:
            state = SimState(snap["t"], snap["rho1"], snap["rho2"], snap["n"])
            der = derived_fields(cfg, state)
            comp_cell = np.maximum(1.0 - der.rho, 0.0) * np.maximum(der.p, 0.0)
            if snap is not traj.snapshots[-1]:
                comp += every * float(np.sum(comp_cell)) * vol
            grads.append(gradient_faces(cfg.grid, der.q))

        if prev_grads is None:
            cauchy = 0.0
        else:
            acc = 0.0
            for gq, gp in zip(grads[:-1], prev_grads[:-1]):
                for ga, pa in zip(gq.axes, gp.axes):
                    diff = ga - pa
                    acc += every * float(np.sum(diff * diff)) * vol
            cauchy = math.sqrt(acc)
        prev_grads = grads
        table.append(m, overshoot, comp, cauchy)
    return table


# ---------------------------------------------------------------------------
# Barenblatt oracle validation


def barenblatt_validation(m, N_list, t0, T, mass: float = 1.0, L: float = 8.0,
                          cfl_safety: float = 0.8) -> StudyTable:
    """Single-species PME runs against the closed-form profile.

    Initial data samples the profile at time t0; after running to
    physical time T the solution is compared with the cell averages of
    the exact profile, as an L^1 error relative to the mass.  The
    observed order column holds log2(err_N / err_2N) for consecutive N.
    """
    if T < t0:
        raise ValueError("T must be at least t0")
    table = StudyTable(name="barenblatt",
                       columns=("N", "l1_error", "order", "projection_error"),
                       meta={"m": m, "t0": t0, "T": T, "mass": mass, "L": L})
    errors = []
    for N in N_list:
        grid = Grid(d=1, N=int(N), L=L)
        rho0 = barenblatt_field(grid, m, t0, mass)
        proj = integrate(grid, np.abs(
            rho0 - barenblatt_cell_averages(grid, m, t0, mass))) / mass
        if T == t0:
            errors.append(proj)
            table.append(N, proj, 0.0, proj)
            continue
        cfg = SimConfig(grid=grid, energy=power_energy(m), rho1_init=rho0,
                        rho2_init=np.zeros(grid.shape), n_init=np.zeros(grid.shape),
                        t_end=T - t0, cfl_safety=cfl_safety)
        traj = run(cfg)
        final = traj.snapshots[-1]["rho1"] + traj.snapshots[-1]["rho2"]
        exact = barenblatt_cell_averages(grid, m, T, mass)
        err = integrate(grid, np.abs(final - exact)) / mass
        errors.append(err)
        order = math.log2(errors[-2] / err) if len(errors) > 1 else 0.0
        table.append(N, err, order, proj)
    return table


# ---------------------------------------------------------------------------
# refinement sweep of monitors and balance


def refinement_study(config_factory, N_list, T) -> StudyTable:
    """Same physics at several resolutions; collates the dissipation
    balance and the scaling-estimate ratios used by the boundedness
    acceptance checks.  `config_factory(N)` must build the N-cell config."""
    cols = ("N", "balance_rel", "nabla_q_ratio", "rho_p_ratio",
            "dual_extra_ratio", "q_extra_ratio")
    table = StudyTable(name="refinement", columns=cols, meta={"T": T})
    for N in N_list:
        cfg = config_factory(int(N)).with_updates(t_end=T)
        traj = run(cfg)
        res = dissipation_balance(traj.ledger, T, traj.constants)
        mons = {r.name: r for r in estimate_monitors(traj.ledger, traj.constants, T)}
        table.append(N, res.relative,
                     mons["nabla_q_control"].ratio,
                     mons["rho_p_control"].ratio,
                     mons["dual_energy_extra_control"].ratio,
                     mons["rho_p_extra_control"].ratio)
    return table

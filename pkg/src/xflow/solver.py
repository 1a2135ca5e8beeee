"""Explicit conservative finite-volume stepping of the viscous q-form system.

The two species share one total flux

    G = -grad q - gamma grad rho + upwind(rho) V,          q = e'(rho),

split between them by the upwinded fraction theta_i = rho_i / rho taken
from the cell the q-flux drains (theta_i = 0 over vacuum).  Species 2
receives G minus the species-1 flux, so the face-wise identity
J_1 + J_2 = G holds bitwise and the total density satisfies the scalar
parabolic equation d_t rho - Lap q + div(rho V) = mu exactly in the
discrete sense.  Sources are explicit, evaluated at the transport
pressure p = (z*)^{-1}(q) (clamped below by p_min where the energy sends
p -> -infinity near vacuum).  The nutrient diffuses explicitly and decays
through consumption; its time-step bound folds the consumption rate into
the diffusion term so nonnegativity is preserved without clipping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diagnostics import DissipationLedger, RunConstants
from .energy import EnergyPair, beta as energy_beta
from .grids import (
    FaceFlux,
    Grid,
    divergence,
    face_flux_l2,
    gradient_faces,
    hminus1_norm,
    integrate,
    lp_norm,
    shift_down,
    support_near_seam,
    validate_field,
)
from .sources import SourceModel, validate_sources, zero_sources

__all__ = [
    "VectorField",
    "zero_field",
    "constant_field",
    "rotating_field",
    "tabulated_field",
    "SimConfig",
    "SimState",
    "DerivedFields",
    "Trajectory",
    "NumericalAbort",
    "Stepper",
    "derived_fields",
    "run",
]

EPS_VACUUM = 1e-14


class NumericalAbort(RuntimeError):
    """Raised when stepping hits NaN or the density reaches a_max.

    Carries the partial trajectory (when raised from :func:`run`) so
    callers can persist what was computed before the abort.
    """

    def __init__(self, message, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory


# ---------------------------------------------------------------------------
# drift field presets (analytic divergence per preset)


@dataclass(frozen=True)
class VectorField:
    kind: str
    params: tuple = ()
    face_arrays: tuple | None = None  # for tabulated fields

    def is_zero(self) -> bool:
        return self.kind == "zero"

    def face_values(self, grid: Grid) -> FaceFlux:
        """Normal component of V sampled at the face centers of each axis."""
        if self.kind == "zero":
            return FaceFlux(tuple(np.zeros(grid.shape) for _ in range(grid.d)))
        if self.kind == "constant":
            return FaceFlux(tuple(np.full(grid.shape, self.params[a])
                                  for a in range(grid.d)))
        if self.kind == "rotating":
            omega = self.params[0]
            c = grid.L / 2.0
            if grid.d == 1:
                xf = np.squeeze(grid.face_centers(0))
                v = omega * (grid.L / (2 * math.pi)) * np.sin(
                    2 * math.pi * (xf - c) / grid.L)
                return FaceFlux((v,))
            Xx, Yx = grid.face_centers(0)
            Xy, Yy = grid.face_centers(1)
            vx = -omega * (Yx - c)
            vy = omega * (Xy - c)
            return FaceFlux((vx, vy))
        if self.kind == "tabulated":
            if self.face_arrays is None or len(self.face_arrays) != grid.d:
                raise ValueError("tabulated field does not match grid dimension")
            return FaceFlux(tuple(validate_field(grid, a, "V face array")
                                  for a in self.face_arrays))
        raise ValueError(f"unknown vector field kind {self.kind!r}")

    def divergence_values(self, grid: Grid) -> np.ndarray:
        """div V at cell centers (closed form; discrete for tabulated)."""
        if self.kind in ("zero", "constant"):
            return np.zeros(grid.shape)
        if self.kind == "rotating":
            if grid.d == 2:
                return np.zeros(grid.shape)  # rigid rotation is divergence free
            omega = self.params[0]
            (x,) = grid.cell_centers()
            return omega * np.cos(2 * math.pi * (x - grid.L / 2.0) / grid.L)
        return divergence(grid, self.face_values(grid))

    def div_sup(self, grid: Grid) -> float:
        if self.kind in ("zero", "constant"):
            return 0.0
        if self.kind == "rotating":
            return abs(self.params[0]) if grid.d == 1 else 0.0
        return float(np.max(np.abs(self.divergence_values(grid))))

    def speed_sup(self, grid: Grid) -> float:
        if self.kind == "zero":
            return 0.0
        faces = self.face_values(grid)
        return max(float(np.max(np.abs(a))) for a in faces.axes)


def zero_field() -> VectorField:
    return VectorField("zero")


def constant_field(*components) -> VectorField:
    return VectorField("constant", tuple(float(c) for c in components))


def rotating_field(omega: float) -> VectorField:
    """Rigid rotation about the domain center in 2-d; in 1-d, the
    sinusoidal analogue V(x) = omega L/(2 pi) sin(2 pi (x - L/2)/L) whose
    divergence has the same sup |omega|."""
    return VectorField("rotating", (float(omega),))


def tabulated_field(*face_arrays) -> VectorField:
    return VectorField("tabulated", (), tuple(np.asarray(a, float) for a in face_arrays))


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class SimConfig:
    grid: Grid
    energy: EnergyPair
    rho1_init: np.ndarray
    rho2_init: np.ndarray
    n_init: np.ndarray
    t_end: float
    gamma: float = 0.0
    alpha: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    V: VectorField = field(default_factory=zero_field)
    sources: SourceModel = field(default_factory=zero_sources)
    cfl_safety: float = 0.8
    snapshot_every: float = 0.0  # 0: snapshot only at t = 0 and t_end
    p_min: float = -20.0

    def __post_init__(self):
        if self.gamma < 0 or self.alpha < 0 or self.c1 < 0 or self.c2 < 0:
            raise ValueError("gamma, alpha, c1, c2 must be nonnegative")
        if not (0 < self.cfl_safety <= 1):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")

    def with_updates(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class SimState:
    t: float
    rho1: np.ndarray
    rho2: np.ndarray
    n: np.ndarray

    def copy(self) -> "SimState":
        return SimState(self.t, self.rho1.copy(), self.rho2.copy(), self.n.copy())


@dataclass
class DerivedFields:
    rho: np.ndarray
    q: np.ndarray
    p: np.ndarray       # transport pressure, 0 on vacuum
    p_eff: np.ndarray   # clamped below by p_min, used for sources and CFL
    mu: np.ndarray


def derived_fields(cfg: SimConfig, state: SimState) -> DerivedFields:
    """rho, q = e'(rho), p = (z*)^{-1}(q) (0 where q = 0), mu."""
    energy = cfg.energy
    rho = state.rho1 + state.rho2
    q = energy.eprime(rho)
    mask = q > 0
    if mask.all():
        p = energy.zstarinv(q)
        p_eff = np.maximum(p, cfg.p_min)
    else:
        p = np.zeros_like(q)
        if mask.any():
            p[mask] = energy.zstarinv(q[mask])
        p_eff = np.where(mask, np.maximum(p, cfg.p_min), 0.0)
    if cfg.sources.is_zero:
        mu = np.zeros_like(q)
    else:
        mu = cfg.sources.mu(state.rho1, state.rho2, p_eff, state.n)
    return DerivedFields(rho=rho, q=q, p=p, p_eff=p_eff, mu=mu)


@dataclass
class Trajectory:
    config: SimConfig
    times: list
    snapshots: list   # dicts with keys t, rho1, rho2, n
    ledger: DissipationLedger
    constants: RunConstants
    aborted: str | None = None


# ---------------------------------------------------------------------------
# the stepper


def _upwind(values: np.ndarray, take_left: np.ndarray, axis: int) -> np.ndarray:
    return np.where(take_left, values, shift_down(values, axis))


class Stepper:
    """Owns a SimState and advances it one explicit step at a time."""

    def __init__(self, cfg: SimConfig, check_sources: bool = True):
        if not cfg.energy.single_valued_eprime:
            raise ValueError(
                "energy has a multivalued pressure map (incompressible-type); "
                "it cannot be stepped directly, reach it as an m -> infinity limit")
        if cfg.energy.m is not None and cfg.energy.m < 1:
            raise ValueError("fast-diffusion exponents m < 1 are not steppable "
                             "explicitly (e'' is singular at vacuum)")
        grid = cfg.grid
        rho1 = validate_field(grid, cfg.rho1_init, "rho1^0").copy()
        rho2 = validate_field(grid, cfg.rho2_init, "rho2^0").copy()
        n = validate_field(grid, cfg.n_init, "n^0").copy()
        if rho1.min() < 0 or rho2.min() < 0 or n.min() < 0:
            raise ValueError("initial data must be nonnegative")
        rho0 = rho1 + rho2
        if math.isfinite(cfg.energy.a_max) and rho0.max() >= cfg.energy.a_max:
            raise ValueError("initial total density reaches a_max; "
                             "e(rho^0) is not integrable")
        if support_near_seam(grid, rho0):
            warnings.warn("initial support comes within 10% of the periodic seam; "
                          "the free-space estimates may be contaminated",
                          stacklevel=2)

        self.cfg = cfg
        self.grid = grid
        self.state = SimState(0.0, rho1, rho2, n)
        self.v_faces = cfg.V.face_values(grid)
        self.div_v = cfg.V.divergence_values(grid)
        self.div_v_sup = cfg.V.div_sup(grid)
        self.v_speed = cfg.V.speed_sup(grid)
        self.has_v = not cfg.V.is_zero()
        self.has_sources = not cfg.sources.is_zero
        self.has_nutrient = cfg.alpha > 0 or cfg.c1 > 0 or cfg.c2 > 0
        n_hi = float(n.max(initial=0.0))
        if check_sources and not cfg.sources.is_zero:
            validate_sources(cfg.sources, p_box=(cfg.p_min, max(10.0, -cfg.p_min)),
                             n_box=(0.0, max(n_hi, 1.0)))
        self.source_bound = cfg.sources.bound_on(cfg.p_min, max(10.0, -cfg.p_min),
                                                 max(n_hi, 1.0))
        self.beta = energy_beta(cfg.energy)
        self.clipped_total = 0.0

    def constants(self) -> RunConstants:
        g = self.grid
        return RunConstants(d=g.d, L=g.L, h=g.h, gamma=self.cfg.gamma,
                            div_v_sup=self.div_v_sup, beta=self.beta)

    def cfl_dt(self, derived: DerivedFields | None = None) -> float:
        """dt = safety * min of the explicit stability caps."""
        cfg = self.cfg
        grid = self.grid
        if derived is None:
            derived = derived_fields(cfg, self.state)
        h, d = grid.h, grid.d
        rho_max = float(derived.rho.max(initial=0.0))
        e2 = cfg.energy.e2max(rho_max) if rho_max > 0 else 0.0
        caps = []
        if e2 + cfg.gamma > 0:
            caps.append(h * h / (2 * d * (e2 + cfg.gamma)))
        if self.has_nutrient:
            consumption = float(np.max(cfg.c1 * self.state.rho1
                                       + cfg.c2 * self.state.rho2, initial=0.0))
            nutrient_rate = 2 * d * cfg.alpha / (h * h) + consumption
            if nutrient_rate > 0:
                caps.append(1.0 / nutrient_rate)
        grad_p = gradient_faces(grid, derived.p_eff)
        p_speed = max(float(np.max(np.abs(a))) for a in grad_p.axes)
        caps.append(h / (self.v_speed + p_speed + EPS_VACUUM))
        if self.source_bound > 0:
            caps.append(1.0 / (2 * self.source_bound))
        return cfg.cfl_safety * min(caps)

    def advance(self, dt_cap: float, dt_override: float | None = None):
        """One explicit step of at most dt_cap; returns the ledger row.

        With dt_override the step uses min(override, dt_cap) and aborts if
        that exceeds the current CFL bound (fixed-dt study protocol).
        """
        cfg, grid, state = self.cfg, self.grid, self.state
        der = derived_fields(cfg, state)
        dt_cfl = self.cfl_dt(der)
        if dt_override is None:
            dt = min(dt_cfl, dt_cap)
        else:
            dt = min(dt_override, dt_cap)
            if dt > dt_cfl * (1 + 1e-9):
                raise NumericalAbort(
                    f"fixed dt {dt:.3e} exceeds the CFL bound {dt_cfl:.3e} "
                    f"at t={state.t:.6g}", state=state)
        if dt <= 0:
            raise ValueError("nonpositive time step")

        rho, q, mu = der.rho, der.q, der.mu
        gamma = cfg.gamma
        grad_q = gradient_faces(grid, q)
        grad_rho = gradient_faces(grid, rho)
        grad_rho1 = gradient_faces(grid, state.rho1) if gamma > 0 else None
        frac1 = np.divide(state.rho1, rho, out=np.zeros_like(rho), where=rho > 0)

        J1_axes, G_axes, adv_sq = [], [], 0.0
        for a in range(grid.d):
            gq = grad_q.axes[a]
            th1 = _upwind(frac1, gq <= 0.0, a)  # the q-flux drains the higher-q cell
            G = -gq
            J1 = -th1 * gq
            if gamma > 0:
                G = G - gamma * grad_rho.axes[a]
                J1 = J1 - gamma * grad_rho1.axes[a]
            if self.has_v:
                vf = self.v_faces.axes[a]
                v_left = vf >= 0.0
                adv = _upwind(rho, v_left, a) * vf
                G = G + adv
                J1 = J1 + _upwind(state.rho1, v_left, a) * vf
                adv_sq += float(np.sum(adv * adv))
            G_axes.append(G)
            J1_axes.append(J1)

        J1_flux = FaceFlux(tuple(J1_axes))
        J2_flux = FaceFlux(tuple(G - J1 for G, J1 in zip(G_axes, J1_axes)))

        rho1_new = state.rho1 - dt * divergence(grid, J1_flux)
        rho2_new = state.rho2 - dt * divergence(grid, J2_flux)
        if self.has_sources:
            s1, s2 = cfg.sources.species_rates(state.rho1, state.rho2,
                                               der.p_eff, state.n)
            rho1_new += dt * s1
            rho2_new += dt * s2

        clipped = 0.0
        for arr in (rho1_new, rho2_new):
            neg = arr < 0
            if np.any(neg):
                clipped += -float(arr[neg].sum()) * grid.cell_volume
                arr[neg] = 0.0
        self.clipped_total += clipped

        if self.has_nutrient:
            lap_n = divergence(grid, gradient_faces(grid, state.n))
            n_new = state.n + dt * (cfg.alpha * lap_n
                                    - state.n * (cfg.c1 * state.rho1
                                                 + cfg.c2 * state.rho2))
        else:
            n_new = state.n

        for name, arr in (("rho1", rho1_new), ("rho2", rho2_new), ("n", n_new)):
            if not np.isfinite(arr).all():
                raise NumericalAbort(f"NaN/Inf in {name} at t={state.t:.6g}",
                                     state=state)
        rho_new = rho1_new + rho2_new
        if math.isfinite(cfg.energy.a_max) and rho_new.max() >= cfg.energy.a_max:
            raise NumericalAbort(
                f"density reached a_max={cfg.energy.a_max:g} at t={state.t:.6g}; "
                "rerun with more exponent headroom", state=state)

        hm1, _ = hminus1_norm(grid, (rho_new - rho) / dt)
        vol = grid.cell_volume
        grad_q_sq = sum(float(np.sum(a * a)) for a in grad_q.axes) * vol
        grad_rho_sq = sum(float(np.sum(a * a)) for a in grad_rho.axes) * vol
        estar_q = cfg.energy.estar(q)
        e_rho_arr = cfg.energy.e(rho)
        if self.has_sources:
            mu_q = float(np.sum(mu * q)) * vol
            mu_int = float(np.sum(mu)) * vol
            mu_l2_sq = float(np.sum(mu * mu)) * vol
            mu_rho_sup = cfg.sources.mu_over_rho_sup(state.rho1, state.rho2,
                                                     der.p_eff, state.n)
        else:
            mu_q = mu_int = mu_l2_sq = mu_rho_sup = 0.0
        # rho, q, e(rho), e*(q), n are nonnegative, so L^1 norms are sums
        row = dict(
            t=state.t, dt=dt,
            grad_q_sq=grad_q_sq,
            estar_divV=float(np.sum(estar_q * self.div_v)) * vol if self.has_v else 0.0,
            mu_q=mu_q,
            e_rho=float(np.sum(e_rho_arr)) * vol,
            rho_l1=float(np.sum(rho)) * vol,
            rho_l2=math.sqrt(float(np.sum(rho * rho)) * vol),
            rho_linf=float(rho.max()),
            dt_rho_hm1=hm1,
            grad_q_l2=math.sqrt(grad_q_sq),
            estar_l1=float(np.sum(estar_q)) * vol,
            e_rho_l1=float(np.sum(e_rho_arr)) * vol,
            gamma_grad_rho_sq=gamma * grad_rho_sq,
            clipped_mass=clipped,
            mu_integral=mu_int,
            mu_l2_sq=mu_l2_sq,
            rho_v_face_sq=adv_sq * vol,
            mu_over_rho_sup=mu_rho_sup,
            grad_rho_sq=grad_rho_sq,
            estar_l2=math.sqrt(float(np.sum(estar_q * estar_q)) * vol),
            q_l2=math.sqrt(float(np.sum(q * q)) * vol),
            n_linf=float(state.n.max()),
        )

        self.state = SimState(state.t + dt, rho1_new, rho2_new, n_new)
        return row

    def terminal_row(self) -> dict:
        """State-only row with dt = 0, recorded at the final time."""
        cfg, grid, state = self.cfg, self.grid, self.state
        der = derived_fields(cfg, state)
        grad_q = gradient_faces(grid, der.q)
        grad_rho = gradient_faces(grid, der.rho)
        grad_q_sq = face_flux_l2(grid, grad_q) ** 2
        grad_rho_sq = face_flux_l2(grid, grad_rho) ** 2
        estar_q = cfg.energy.estar(der.q)
        e_rho_arr = cfg.energy.e(der.rho)
        vol = grid.cell_volume
        return dict(
            t=state.t, dt=0.0,
            grad_q_sq=grad_q_sq,
            estar_divV=float(np.sum(estar_q * self.div_v)) * vol,
            mu_q=float(np.sum(der.mu * der.q)) * vol,
            e_rho=integrate(grid, e_rho_arr),
            rho_l1=lp_norm(grid, der.rho, 1),
            rho_l2=lp_norm(grid, der.rho, 2),
            rho_linf=lp_norm(grid, der.rho, np.inf),
            dt_rho_hm1=0.0,
            grad_q_l2=math.sqrt(grad_q_sq),
            estar_l1=lp_norm(grid, estar_q, 1),
            e_rho_l1=lp_norm(grid, e_rho_arr, 1),
            gamma_grad_rho_sq=cfg.gamma * grad_rho_sq,
            clipped_mass=0.0,
            mu_integral=integrate(grid, der.mu),
            mu_l2_sq=lp_norm(grid, der.mu, 2) ** 2,
            rho_v_face_sq=0.0,
            mu_over_rho_sup=cfg.sources.mu_over_rho_sup(
                state.rho1, state.rho2, der.p_eff, state.n),
            grad_rho_sq=grad_rho_sq,
            estar_l2=lp_norm(grid, estar_q, 2),
            q_l2=lp_norm(grid, der.q, 2),
            n_linf=lp_norm(grid, state.n, np.inf),
        )


def _snapshot(state: SimState) -> dict:
    return {"t": state.t, "rho1": state.rho1.copy(),
            "rho2": state.rho2.copy(), "n": state.n.copy()}


def run(cfg: SimConfig, dt_override: float | None = None,
        on_step: Callable | None = None) -> Trajectory:
    """Advance from t = 0 to t_end with adaptive (or fixed) dt.

    Snapshots are taken at t = 0, every `snapshot_every` (when positive),
    and at t_end; the ledger gets one row per step plus a terminal row.
    On numerical abort the partial trajectory is attached to the raised
    :class:`NumericalAbort`.
    """
    stepper = Stepper(cfg)
    ledger = DissipationLedger()
    times = [0.0]
    snapshots = [_snapshot(stepper.state)]
    traj = Trajectory(config=cfg, times=times, snapshots=snapshots,
                      ledger=ledger, constants=stepper.constants())

    t_end = cfg.t_end
    stops = []
    if cfg.snapshot_every > 0:
        k, t = 1, cfg.snapshot_every
        while t < t_end - 1e-12 * max(t_end, 1.0):
            stops.append(t)
            k += 1
            t = k * cfg.snapshot_every
    if t_end > 0:
        stops.append(t_end)

    try:
        for stop in stops:
            while stepper.state.t < stop - 1e-12 * max(stop, 1.0):
                row = stepper.advance(dt_cap=stop - stepper.state.t,
                                      dt_override=dt_override)
                ledger.append(**row)
                if on_step is not None:
                    on_step(stepper, row)
            stepper.state.t = stop  # land exactly on the checkpoint
            times.append(stop)
            snapshots.append(_snapshot(stepper.state))
            if support_near_seam(cfg.grid, stepper.state.rho1 + stepper.state.rho2):
                warnings.warn("density support within 10% of the periodic seam",
                              stacklevel=2)
    except NumericalAbort as exc:
        try:
            ledger.append(**stepper.terminal_row())
        except ValueError:
            pass  # aborted state may carry NaNs; keep the rows we have
        traj.aborted = str(exc)
        exc.trajectory = traj
        raise

    ledger.append(**stepper.terminal_row())
    return traj

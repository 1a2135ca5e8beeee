"""Growth/death source models F_ij(p, n) for the two species.

The model assumptions are: every F_ij is continuous and uniformly bounded
on the sampled (p, n) box; the cross terms F_12, F_21 are nonnegative; and
optionally the column sums p -> F_11 + F_21 and p -> F_12 + F_22 are
nonincreasing (needed for the degenerate-coupling scenarios, e.g. the
m -> infinity sweeps).

The built-in "homeostatic" family grows species 1 at rate
g1 * n * max(0, 1 - p/p_H), converts species 1 into species 2 at rate d1,
and removes species 2 at rate d2:

    F11 = g1 n max(0, 1 - p/p_H) - d1,   F12 = 0,
    F21 = d1,                            F22 = -d2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["SourceModel", "zero_sources", "homeostatic_sources", "validate_sources"]


@dataclass(frozen=True)
class SourceModel:
    """Four vectorized evaluators (p, n) -> rate, plus structure flags.

    `bound_on(p_lo, p_hi, n_hi)` returns a uniform bound B for |F_ij| on
    the box [p_lo, p_hi] x [0, n_hi]; the time stepper uses it for its
    source CFL term.
    """

    name: str
    F11: Callable
    F12: Callable
    F21: Callable
    F22: Callable
    bound_on: Callable
    nonneg_cross: bool = True
    monotone_column_sums: bool = False

    @property
    def is_zero(self) -> bool:
        return self.name == "none"

    def species_rates(self, rho1, rho2, p, n):
        """Explicit source terms (S1, S2) with S1 + S2 = mu."""
        s1 = rho1 * self.F11(p, n) + rho2 * self.F12(p, n)
        s2 = rho1 * self.F21(p, n) + rho2 * self.F22(p, n)
        return s1, s2

    def mu(self, rho1, rho2, p, n):
        """Total growth rate mu = rho1 (F11 + F21) + rho2 (F12 + F22)."""
        return (rho1 * (self.F11(p, n) + self.F21(p, n))
                + rho2 * (self.F12(p, n) + self.F22(p, n)))

    def mu_over_rho_sup(self, rho1, rho2, p, n, rho_floor=0.0):
        """Cellwise sup of |mu / rho| over the support of rho.

        mu/rho is a convex combination of the column sums, so this is the
        constant entering the Gronwall estimates.
        """
        rho = rho1 + rho2
        mask = rho > rho_floor
        if not np.any(mask):
            return 0.0
        mu = self.mu(rho1, rho2, p, n)
        return float(np.max(np.abs(mu[mask] / rho[mask])))


def zero_sources() -> SourceModel:
    def zero(p, n):
        return np.zeros(np.broadcast(np.asarray(p), np.asarray(n)).shape)

    return SourceModel(
        name="none", F11=zero, F12=zero, F21=zero, F22=zero,
        bound_on=lambda p_lo, p_hi, n_hi: 0.0,
        nonneg_cross=True, monotone_column_sums=True,
    )


def homeostatic_sources(g1: float, p_H: float, d1: float, d2: float) -> SourceModel:
    if min(g1, p_H, d1, d2) < 0 or p_H == 0:
        raise ValueError("homeostatic parameters must be nonnegative with p_H > 0")

    def F11(p, n):
        return g1 * np.asarray(n) * np.maximum(0.0, 1.0 - np.asarray(p) / p_H) - d1

    def F12(p, n):
        return np.zeros(np.broadcast(np.asarray(p), np.asarray(n)).shape)

    def F21(p, n):
        return np.full(np.broadcast(np.asarray(p), np.asarray(n)).shape, float(d1))

    def F22(p, n):
        return np.full(np.broadcast(np.asarray(p), np.asarray(n)).shape, -float(d2))

    def bound_on(p_lo, p_hi, n_hi):
        growth = g1 * n_hi * max(0.0, 1.0 - p_lo / p_H)
        return max(growth + d1, d1, d2)

    return SourceModel(
        name="homeostatic", F11=F11, F12=F12, F21=F21, F22=F22,
        bound_on=bound_on, nonneg_cross=True, monotone_column_sums=True,
    )


def validate_sources(model: SourceModel, p_box=(-20.0, 20.0), n_box=(0.0, 4.0),
                     samples=64):
    """Check the structural assumptions on a sampled (p, n) box.

    Raises ValueError listing the first violated assumption; used at
    configuration time so bad models fail before stepping starts.
    """
    p = np.linspace(p_box[0], p_box[1], samples)
    n = np.linspace(n_box[0], n_box[1], samples)
    P, Nn = np.meshgrid(p, n, indexing="ij")
    B = model.bound_on(p_box[0], p_box[1], n_box[1])
    vals = {"F11": model.F11(P, Nn), "F12": model.F12(P, Nn),
            "F21": model.F21(P, Nn), "F22": model.F22(P, Nn)}
    for key, v in vals.items():
        if not np.isfinite(v).all():
            raise ValueError(f"{key} is not finite on the sampled box")
        if np.max(np.abs(v)) > B * (1 + 1e-12) + 1e-12:
            raise ValueError(f"{key} exceeds the declared bound B={B}")
    if model.nonneg_cross:
        if np.min(vals["F12"]) < 0 or np.min(vals["F21"]) < 0:
            raise ValueError("cross terms F12, F21 must be nonnegative")
    if model.monotone_column_sums:
        col1 = vals["F11"] + vals["F21"]
        col2 = vals["F12"] + vals["F22"]
        if np.max(np.diff(col1, axis=0)) > 1e-12 or np.max(np.diff(col2, axis=0)) > 1e-12:
            raise ValueError("column sums must be nonincreasing in p")
    return B

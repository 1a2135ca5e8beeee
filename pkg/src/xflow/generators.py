"""Canonical initial-data generators and the Barenblatt oracle.

The Barenblatt profile is the exact self-similar solution of the porous
medium equation d_t rho = Lap(rho^m),

    rho(t, x) = t^{-alpha} (C - kappa |x - c|^2 t^{-2 alpha/d})_+^{1/(m-1)},

with alpha = d/(d(m-1)+2) and kappa = alpha (m-1)/(2 d m); C is fixed by
the mass through a Beta-function identity.  It serves as an independent
validation oracle for the solver (single species, V = 0, sources off).
"""

from __future__ import annotations

import math

import numpy as np

from .grids import Grid

__all__ = [
    "gaussian_bump",
    "two_bumps",
    "uniform_disk",
    "barenblatt_constant",
    "barenblatt_profile",
    "barenblatt_field",
    "barenblatt_cell_averages",
]


def _radius_sq(grid: Grid, center):
    mesh = grid.meshgrid()
    if center is None:
        center = (grid.L / 2.0,) * grid.d
    r2 = np.zeros(grid.shape)
    for X, c in zip(mesh, center):
        r2 += (X - c) ** 2
    return r2


def gaussian_bump(grid: Grid, amplitude=0.8, width=0.1, center=None, floor=0.0):
    """floor + amplitude * exp(-|x - c|^2 / width^2) at cell centers."""
    if amplitude < 0 or width <= 0 or floor < 0:
        raise ValueError("amplitude and floor must be >= 0 and width > 0")
    return floor + amplitude * np.exp(-_radius_sq(grid, center) / width ** 2)


def two_bumps(grid: Grid, amplitude=0.5, width=0.08, separation=0.3, floor=0.0):
    """Two equal bumps straddling the domain center along the first axis."""
    c = grid.L / 2.0
    left = [c] * grid.d
    right = [c] * grid.d
    left[0] = c - separation / 2.0
    right[0] = c + separation / 2.0
    return (floor
            + amplitude * np.exp(-_radius_sq(grid, tuple(left)) / width ** 2)
            + amplitude * np.exp(-_radius_sq(grid, tuple(right)) / width ** 2))


def uniform_disk(grid: Grid, amplitude=0.8, radius=0.2, center=None):
    """amplitude on the ball |x - c| <= radius, zero outside."""
    return np.where(_radius_sq(grid, center) <= radius ** 2, amplitude, 0.0)


# ---------------------------------------------------------------------------
# Barenblatt


def _barenblatt_params(m: float, d: int):
    alpha = d / (d * (m - 1.0) + 2.0)
    kappa = alpha * (m - 1.0) / (2.0 * d * m)
    return alpha, kappa


def barenblatt_constant(m: float, d: int, mass: float) -> float:
    """C such that the profile carries the requested mass.

    mass = C^{1/(m-1) + d/2} kappa^{-d/2} I with
    I = pi^{d/2} Gamma(p+1)/Gamma(p+1+d/2), p = 1/(m-1).
    """
    if m <= 1:
        raise ValueError("Barenblatt requires m > 1")
    _, kappa = _barenblatt_params(m, d)
    p = 1.0 / (m - 1.0)
    I = math.pi ** (d / 2.0) * math.gamma(p + 1.0) / math.gamma(p + 1.0 + d / 2.0)
    expo = p + d / 2.0
    return (mass * kappa ** (d / 2.0) / I) ** (1.0 / expo)


def barenblatt_profile(m: float, d: int, t: float, r_sq, mass: float = 1.0):
    """Profile value at squared radius r_sq from the center, at time t."""
    if t <= 0:
        raise ValueError("profile time must be positive")
    alpha, kappa = _barenblatt_params(m, d)
    C = barenblatt_constant(m, d, mass)
    core = np.maximum(C - kappa * np.asarray(r_sq) * t ** (-2.0 * alpha / d), 0.0)
    return t ** (-alpha) * core ** (1.0 / (m - 1.0))


def barenblatt_support_radius(m: float, d: int, t: float, mass: float = 1.0) -> float:
    alpha, kappa = _barenblatt_params(m, d)
    C = barenblatt_constant(m, d, mass)
    return math.sqrt(C / kappa) * t ** (alpha / d)


def barenblatt_field(grid: Grid, m: float, t: float, mass: float = 1.0,
                     center=None) -> np.ndarray:
    """Cell-center samples of the profile; errors out if the support does
    not fit well inside the domain."""
    r_support = barenblatt_support_radius(m, grid.d, t, mass)
    if r_support > 0.45 * grid.L:
        raise ValueError(
            f"Barenblatt support radius {r_support:.3g} does not fit the "
            f"domain; need L > {r_support / 0.45:.3g}")
    return barenblatt_profile(m, grid.d, t, _radius_sq(grid, center), mass)


def barenblatt_cell_averages(grid: Grid, m: float, t: float, mass: float = 1.0,
                             center=None, npts: int = 5) -> np.ndarray:
    """Cell averages by tensor Gauss-Legendre quadrature (finite-volume
    reference; the numerical solution approximates these)."""
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    half = grid.h / 2.0
    if center is None:
        center = (grid.L / 2.0,) * grid.d
    out = np.zeros(grid.shape)
    if grid.d == 1:
        (x,) = grid.cell_centers()
        for xi, wi in zip(nodes, weights):
            r2 = (x + half * xi - center[0]) ** 2
            out += wi * barenblatt_profile(m, 1, t, r2, mass)
        return out / 2.0
    X, Y = grid.meshgrid()
    for xi, wi in zip(nodes, weights):
        for yj, wj in zip(nodes, weights):
            r2 = (X + half * xi - center[0]) ** 2 + (Y + half * yj - center[1]) ** 2
            out += wi * wj * barenblatt_profile(m, 2, t, r2, mass)
    return out / 4.0

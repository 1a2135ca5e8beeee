"""Convex energy pairs and the density/pressure duality maps.

A model couples the total cell density rho to two pressure variables:
the transport pressure p with rho*p = z(rho) + z*(p), and the transformed
pressure q = z*(p) with rho*q = e(rho) + e*(q).  The transformed energy is

    e(a) = a*z(a) - 2*Integral_0^a z(s) ds        (finite where z is finite)

which is the unique convex function with de(a) = z* o dz(a).  An
:class:`EnergyPair` bundles the four functions z, z*, e, e* together with
the pointwise pressure maps q = e'(rho) and p = (z*)^{-1}(q).

Infinite values are represented by ``np.inf``; all evaluators are
vectorized over numpy arrays and never mutate their inputs.  EnergyPair
instances are immutable and safe to share between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

__all__ = [
    "EnergyPair",
    "MultivaluedGradientError",
    "power_energy",
    "entropy_energy",
    "incompressible_energy",
    "tabulated_energy",
    "load_tabulated_energy",
    "e_transform",
    "conjugate",
    "beta",
    "young_gap",
    "conjugate_convergence_probe",
]


class MultivaluedGradientError(ValueError):
    """Raised when a single-valued pressure map is requested at a kink."""


def _as_array(x):
    return np.asarray(x, dtype=float)


def _fixed_power(exponent: float):
    """Specialized x -> x**exponent for the handful of exponents the
    closed-form families use in inner loops (generic np.power with a float
    exponent costs ~10x a multiply)."""
    if exponent == 1.0:
        return lambda x: x
    if exponent == 2.0:
        return np.square
    if exponent == 3.0:
        return lambda x: x * x * x
    if exponent == 4.0:
        return lambda x: np.square(np.square(x))
    if exponent == 0.5:
        return np.sqrt
    if exponent == 1.5:
        return lambda x: x * np.sqrt(x)
    return lambda x: np.power(x, exponent)


@dataclass(frozen=True)
class EnergyPair:
    """One energy model: z, z*, e, e* and the pressure maps.

    Attributes
    ----------
    family : str
        One of ``"power"``, ``"entropy"``, ``"incompressible"``,
        ``"tabulated"``.
    z, zstar, e, estar : callable
        Vectorized evaluators; infinite values are ``np.inf``.
    eprime : callable
        a -> e'(a) = q.  Raises :class:`MultivaluedGradientError` where the
        subdifferential is not a singleton.
    zstarinv : callable
        q -> p, the inverse of z* on z*(R) & (0, inf).  Where
        sup dz(0) > -inf the map extends continuously to q = 0; otherwise
        (entropy-type, p -> -inf) q <= 0 is rejected.
    a_max : float
        Right endpoint of the finite domain of z (sup of z^{-1}(R)).
    b_inf : float
        Right endpoint of the finite domain of z* (Lemma-A.2 threshold).
    m : float or None
        Exponent for the power family, None otherwise.
    single_valued_eprime : bool
        False iff eprime has a genuine kink (incompressible energy); the
        time stepper refuses such energies.
    """

    family: str
    z: Callable
    zstar: Callable
    e: Callable
    estar: Callable
    eprime: Callable
    zstarinv: Callable
    a_max: float
    b_inf: float
    m: float | None = None
    single_valued_eprime: bool = True
    e2max: Callable = field(default=None, compare=False)  # a -> max e'' on [0, a]
    label: str = field(default="", compare=False)

    def __repr__(self):
        tag = f"m={self.m:g}" if self.m is not None else self.family
        return f"EnergyPair({tag})"


# ---------------------------------------------------------------------------
# closed-form families


def power_energy(m: float) -> EnergyPair:
    """Porous-medium power family.

    z(a) = (a^m - a)/(m - 1),  z*(b) = max(((m-1)b + 1)/m, 0)^{m/(m-1)},
    e(a) = a^{m+1}/(m + 1),    e*(b) = (m/(m+1)) max(b, 0)^{(m+1)/m},
    with e'(a) = a^m and (z*)^{-1}(q) = (m q^{(m-1)/m} - 1)/(m - 1).
    """
    if not np.isfinite(m) or m <= 0:
        raise ValueError(f"power exponent must be finite and positive, got {m}")
    if m == 1:
        raise ValueError("m = 1 is the entropy family; use entropy_energy()")
    mm = float(m)
    pow_m = _fixed_power(mm)
    pow_m1 = _fixed_power(mm + 1)
    pow_dual = _fixed_power((mm + 1) / mm)
    pow_conj = _fixed_power(mm / (mm - 1))
    pow_inv = _fixed_power((mm - 1) / mm)

    def z(a):
        a = _as_array(a)
        with np.errstate(invalid="ignore"):
            out = np.where(a >= 0, (pow_m(np.abs(a)) - a) / (mm - 1), np.inf)
        return out

    def zstar(b):
        b = _as_array(b)
        base = np.maximum(((mm - 1) * b + 1) / mm, 0.0)
        with np.errstate(divide="ignore"):
            out = pow_conj(base)
        return out

    def e(a):
        a = _as_array(a)
        return np.where(a >= 0, pow_m1(np.abs(a)) / (mm + 1), np.inf)

    def estar(b):
        b = _as_array(b)
        return (mm / (mm + 1)) * pow_dual(np.maximum(b, 0.0))

    def eprime(a):
        a = _as_array(a)
        if np.any(a < 0):
            raise ValueError("density must be nonnegative")
        return pow_m(a)

    # For m > 1 sup dz(0) = -1/(m-1) is finite, so the inverse extends
    # continuously to q = 0.  For m < 1 the slope diverges and q <= 0 is
    # rejected, matching the entropy-type dichotomy.
    def zstarinv(q):
        q = _as_array(q)
        if mm > 1:
            if np.any(q < 0):
                raise ValueError("q must be nonnegative")
            return (mm * pow_inv(q) - 1) / (mm - 1)
        if np.any(q <= 0):
            raise ValueError("q must be positive for m < 1")
        return (mm * pow_inv(q) - 1) / (mm - 1)

    b_inf = math.inf if mm > 1 else 1.0 / (1.0 - mm)

    # e''(a) = m a^{m-1}: increasing on [0, a] for m > 1, singular at the
    # origin for m < 1 (fast diffusion; the explicit stepper rejects it)
    def e2max(amax):
        return mm * amax ** (mm - 1) if mm > 1 else math.inf

    return EnergyPair(
        family="power", z=z, zstar=zstar, e=e, estar=estar, eprime=eprime,
        zstarinv=zstarinv, a_max=math.inf, b_inf=b_inf, m=mm,
        e2max=e2max, label=f"power(m={mm:g})",
    )


def entropy_energy() -> EnergyPair:
    """The m -> 1 limit: z(a) = a log a - a, z*(b) = exp(b), e(a) = a^2/2."""

    def z(a):
        a = _as_array(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = a * np.log(np.abs(a)) - a
        val = np.where(a == 0, 0.0, val)
        return np.where(a >= 0, val, np.inf)

    def zstar(b):
        return np.exp(_as_array(b))

    def e(a):
        a = _as_array(a)
        return np.where(a >= 0, 0.5 * a * a, np.inf)

    def estar(b):
        b = _as_array(b)
        return 0.5 * np.square(np.maximum(b, 0.0))

    def eprime(a):
        a = _as_array(a)
        if np.any(a < 0):
            raise ValueError("density must be nonnegative")
        return a.copy()

    def zstarinv(q):
        q = _as_array(q)
        if np.any(q <= 0):
            raise ValueError("q must be positive for the entropy energy")
        return np.log(q)

    return EnergyPair(
        family="entropy", z=z, zstar=zstar, e=e, estar=estar, eprime=eprime,
        zstarinv=zstarinv, a_max=math.inf, b_inf=math.inf, m=None,
        e2max=lambda amax: 1.0, label="entropy",
    )


def incompressible_energy() -> EnergyPair:
    """The m -> infinity limit: z = indicator of [0, 1], z*(b) = max(b, 0).

    e is again the indicator of [0, 1] and e* = max(b, 0).  The pressure
    map e' is multivalued at a = 1, so this pair cannot be time-stepped
    directly; it serves as the limit object for the m -> infinity studies.
    """

    def indicator(a):
        a = _as_array(a)
        return np.where((a >= 0) & (a <= 1), 0.0, np.inf)

    def positive_part(b):
        return np.maximum(_as_array(b), 0.0)

    def eprime(a):
        a = _as_array(a)
        if np.any(a == 1):
            raise MultivaluedGradientError(
                "the incompressible energy has a multivalued gradient at a = 1"
            )
        if np.any((a < 0) | (a > 1)):
            raise ValueError("density outside [0, 1]")
        return np.zeros_like(a)

    def zstarinv(q):
        q = _as_array(q)
        if np.any(q < 0):
            raise ValueError("q must be nonnegative")
        return q.copy()

    return EnergyPair(
        family="incompressible", z=indicator, zstar=positive_part,
        e=indicator, estar=positive_part, eprime=eprime, zstarinv=zstarinv,
        a_max=1.0, b_inf=math.inf, m=None, single_valued_eprime=False,
        e2max=lambda amax: math.inf, label="incompressible",
    )


# ---------------------------------------------------------------------------
# sampled (tabulated) energies


def _check_convex_samples(a, f, tol=1e-10):
    """Return the first index violating discrete convexity, or -1.

    Convexity of samples means nondecreasing chord slopes; infinite tails
    are allowed (lsc convex functions carry +inf outside their domain).
    """
    finite = np.isfinite(f)
    idx = np.nonzero(finite)[0]
    if idx.size < 3:
        return -1
    a_f, f_f = a[idx], f[idx]
    slopes = np.diff(f_f) / np.diff(a_f)
    bad = np.nonzero(np.diff(slopes) < -tol)[0]
    return int(idx[bad[0] + 1]) if bad.size else -1


def e_transform(a_samples, z_samples):
    """Transform sampled z into sampled e via e = a z(a) - 2 Int_0^a z.

    The quadrature is cumulative Simpson, so closed-form families sampled
    on a few thousand points reproduce their e column to ~1e-10 in the
    smooth regime.  Input must be discretely convex with z(0) = 0; the
    +inf tail (if any) is carried over to e.
    """
    a = _as_array(a_samples)
    zv = _as_array(z_samples)
    if a.ndim != 1 or a.shape != zv.shape:
        raise ValueError("a_samples and z_samples must be matching 1-d arrays")
    if np.any(np.diff(a) <= 0):
        raise ValueError("sample grid must be strictly increasing")
    if a[0] != 0:
        raise ValueError("samples must start at a = 0")
    if zv[0] != 0:
        raise ValueError("z(0) must be 0")
    bad = _check_convex_samples(a, zv)
    if bad >= 0:
        raise ValueError(f"z samples are not convex (violation at index {bad})")

    finite = np.isfinite(zv)
    if not finite.all():
        cut = int(np.argmin(finite))  # first infinite entry
        if np.any(np.isfinite(zv[cut:])):
            raise ValueError("finite domain of z must be an interval from 0")
        a_fin, z_fin = a[:cut], zv[:cut]
    else:
        cut = a.size
        a_fin, z_fin = a, zv

    if a_fin.size >= 3:
        integral = cumulative_simpson(z_fin, x=a_fin, initial=0.0)
    else:
        integral = np.concatenate([[0.0], np.cumsum(np.diff(a_fin) * (z_fin[1:] + z_fin[:-1]) / 2)])
    e_fin = a_fin * z_fin - 2.0 * integral
    out = np.full_like(zv, np.inf)
    out[:cut] = e_fin
    out[0] = 0.0
    return out


def conjugate(a_samples, f_samples, b_query, chunk=512):
    """Discrete Legendre transform f*(b) = max_a (a b - f(a)).

    Exact for the piecewise-linear interpolant of the samples (a PWL
    function attains sup(ab - f) at a knot).  Infinite sample values mark
    points outside the domain and never attain the max.
    """
    a = _as_array(a_samples)
    fv = _as_array(f_samples)
    b = _as_array(b_query)
    finite = np.isfinite(fv)
    if not finite.any():
        raise ValueError("all sample values are infinite")
    a_f = a[finite]
    f_f = fv[finite]
    scalar = b.ndim == 0
    bq = np.atleast_1d(b)
    out = np.empty_like(bq)
    for lo in range(0, bq.size, chunk):
        blk = bq[lo:lo + chunk]
        out[lo:lo + chunk] = np.max(np.outer(blk, a_f) - f_f, axis=1)
    return out[0] if scalar else out


def beta(pair: EnergyPair, tol=1e-10) -> float:
    """The pressure scale beta = inf{b : e*(b) >= 1}, found by bisection.

    e* is continuous, nonnegative and nondecreasing with superlinear
    growth, so a bracket always exists and bisection is robust.
    """
    lo, hi = 0.0, 1.0
    while float(pair.estar(hi)) < 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("e* never reaches 1; not a valid energy pair")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(pair.estar(mid)) >= 1.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def young_gap(pair: EnergyPair, a, b):
    """Young's inequality gap e(a) + e*(b) - a b (>= 0, +inf off-domain)."""
    a = _as_array(a)
    b = _as_array(b)
    return pair.e(a) + pair.estar(b) - a * b


def tabulated_energy(a_samples, z_samples) -> EnergyPair:
    """Energy pair from sampled z, interpreted piecewise-linearly.

    Conjugation is exact for this class, so the derived z*, e, e* are the
    true transforms of the PWL interpolant (e up to quadrature).  e' uses
    knotwise centered-difference slopes interpolated linearly, giving a
    continuous single-valued pressure map with O(h) duality residual.
    """
    a = _as_array(a_samples).copy()
    zv = _as_array(z_samples).copy()
    e_vals = e_transform(a, zv)

    finite = np.isfinite(zv)
    a_f, z_f = a[finite], zv[finite]
    e_f = e_vals[finite]
    a_max = float(a_f[-1])

    def z(x):
        x = _as_array(x)
        out = np.interp(x, a_f, z_f)
        return np.where((x < 0) | (x > a_max), np.inf, out)

    def e(x):
        x = _as_array(x)
        out = np.interp(x, a_f, e_f)
        return np.where((x < 0) | (x > a_max), np.inf, out)

    # Conjugates of a PWL function are PWL in b with knots at the sample
    # slopes; precomputing values there makes later evaluation exact.
    def _pwl_conjugate(knots_a, knots_f):
        slopes = np.diff(knots_f) / np.diff(knots_a)
        bk = np.unique(np.concatenate([[min(slopes[0], 0.0) - 1.0], slopes]))
        fk = conjugate(knots_a, knots_f, bk)
        last_slope = knots_a[-1]  # growth rate of f* beyond the last knot

        def fstar(b):
            b = _as_array(b)
            inside = np.interp(b, bk, fk)
            above = fk[-1] + last_slope * (b - bk[-1])
            # left of the smallest slope the sup sits at a = 0, value -f(0)
            return np.where(b <= bk[0], fk[0], np.where(b >= bk[-1], above, inside))

        return fstar, bk

    zstar, _ = _pwl_conjugate(a_f, z_f)
    estar, _ = _pwl_conjugate(a_f, e_f)

    slopes_e = np.gradient(e_f, a_f)

    def eprime(x):
        x = _as_array(x)
        if np.any((x < 0) | (x > a_max)):
            raise ValueError("density outside tabulated domain")
        return np.interp(x, a_f, slopes_e)

    pos = a_f > 0

    def zstarinv(q):
        q = _as_array(q)
        if np.any(q < 0):
            raise ValueError("q must be nonnegative")
        cand = (q[..., None] + z_f[pos]) / a_f[pos]
        return np.min(cand, axis=-1)

    eprime_slopes = np.abs(np.diff(slopes_e) / np.diff(a_f))

    def e2max(amax):
        within = a_f[1:] <= amax + 1e-15
        return float(np.max(eprime_slopes[within[: eprime_slopes.size]], initial=0.0))

    # z* of a sampled energy is finite everywhere (the sup runs over a
    # bounded knot set and grows linearly with rate a_max), so b_inf = +inf.
    return EnergyPair(
        family="tabulated", z=z, zstar=zstar, e=e, estar=estar,
        eprime=eprime, zstarinv=zstarinv, a_max=a_max, b_inf=math.inf,
        m=None, e2max=e2max, label="tabulated",
    )


def load_tabulated_energy(path) -> EnergyPair:
    """Load a tabulated energy from a two-column text file (a, z(a)).

    Lines starting with '#' are comments; the token ``inf`` marks +inf.
    The a column must be strictly increasing and start at 0.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise ValueError(f"expected two columns, got: {line!r}")
            rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 3:
        raise ValueError("tabulated energy needs at least 3 samples")
    arr = np.array(rows)
    return tabulated_energy(arr[:, 0], arr[:, 1])


# ---------------------------------------------------------------------------
# conjugate-convergence probes (m -> infinity against the incompressible pair)


def conjugate_convergence_probe(m_values, b_points, q_interval=(0.1, 2.0), n_q=256):
    """Gaps between the power family and its incompressible limit.

    Returns a dict with, per m, the pointwise gaps |z*_m(b) - max(b, 0)|
    at the requested b points and the uniform gap of (z*_m)^{-1} against
    the identity on a compact q interval inside (0, z*(b_inf)).
    """
    limit = incompressible_energy()
    b = _as_array(b_points)
    q = np.linspace(q_interval[0], q_interval[1], n_q)
    rows = []
    for m in m_values:
        pm = power_energy(m)
        gap_b = np.abs(pm.zstar(b) - limit.zstar(b))
        gap_inv = float(np.max(np.abs(pm.zstarinv(q) - limit.zstarinv(q))))
        rows.append({"m": float(m), "zstar_gaps": gap_b, "inv_uniform_gap": gap_inv})
    return {"b_points": b, "q_interval": tuple(q_interval), "rows": rows}

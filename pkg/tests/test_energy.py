"""Closed-form oracles and convex-analysis properties of energy pairs."""

import math

import numpy as np
import pytest

from xflow.energy import (
    EnergyPair,
    MultivaluedGradientError,
    beta,
    conjugate,
    conjugate_convergence_probe,
    e_transform,
    entropy_energy,
    incompressible_energy,
    load_tabulated_energy,
    power_energy,
    tabulated_energy,
    young_gap,
)

A_GRID = np.linspace(0.0, 4.0, 4097)


def second_differences(values):
    return values[2:] - 2.0 * values[1:-1] + values[:-2]


# ---------------------------------------------------------------------------
# Table-1 closed forms


def test_power_m2_table_values():
    p = power_energy(2.0)
    assert p.z(2.0) == pytest.approx(2.0, abs=1e-12)
    assert p.e(2.0) == pytest.approx(8.0 / 3.0, abs=1e-12)
    assert p.estar(4.0) == pytest.approx(16.0 / 3.0, abs=1e-12)


def test_power_m2_zero_and_negative_part():
    p = power_energy(2.0)
    assert p.z(0.0) == 0.0
    assert p.e(0.0) == 0.0
    assert p.estar(-1.0) == 0.0


def test_power_m2_zstarinv_matches_zprime():
    # invert z*(b) = max((b+1)/2, 0)^2 by hand: b = 2 sqrt(q) - 1, and
    # z'(a) = 2a - 1, so q = 4 must map to p = 3 = z'(2)
    p = power_energy(2.0)
    assert p.zstarinv(4.0) == pytest.approx(3.0, abs=1e-12)


def test_power_rejects_bad_exponent():
    with pytest.raises(ValueError):
        power_energy(1.0)
    with pytest.raises(ValueError):
        power_energy(0.0)
    with pytest.raises(ValueError):
        power_energy(-2.0)


def test_entropy_table_values():
    p = entropy_energy()
    assert p.z(1.0) == pytest.approx(-1.0, abs=1e-12)
    assert p.e(1.0) == pytest.approx(0.5, abs=1e-12)
    assert p.zstar(0.0) == pytest.approx(1.0, abs=1e-12)
    assert p.estar(0.0) == 0.0


def test_entropy_log_exp_inversion():
    p = entropy_energy()
    assert p.zstarinv(math.e) == pytest.approx(1.0, abs=1e-12)
    assert p.zstar(1.0) == pytest.approx(math.e, abs=1e-12)
    with pytest.raises(ValueError):
        p.zstarinv(0.0)


def test_incompressible_pair():
    p = incompressible_energy()
    assert p.zstar(0.5) == 0.5
    assert p.estar(-3.0) == 0.0
    assert p.e(1.1) == math.inf
    assert p.a_max == 1.0
    assert not p.single_valued_eprime
    with pytest.raises(MultivaluedGradientError):
        p.eprime(1.0)


# ---------------------------------------------------------------------------
# e-transform against the Table-1 columns


@pytest.mark.parametrize("m", [1.5, 2.0, 3.0, 5.0])
def test_e_transform_power_oracle(m):
    p = power_energy(m)
    e_num = e_transform(A_GRID, p.z(A_GRID))
    assert np.max(np.abs(e_num - p.e(A_GRID))) <= 1e-6


def test_e_transform_entropy_oracle():
    p = entropy_energy()
    e_num = e_transform(A_GRID, p.z(A_GRID))
    assert np.max(np.abs(e_num - p.e(A_GRID))) <= 1e-6


def test_e_transform_zero_is_zero():
    out = e_transform(A_GRID, np.zeros_like(A_GRID))
    assert np.all(out == 0.0)


def test_e_transform_rejects_nonconvex():
    z = np.square(A_GRID - 1.0)  # convex but z(0) != 0
    with pytest.raises(ValueError):
        e_transform(A_GRID, z)
    z = np.sin(A_GRID)
    z[0] = 0.0
    with pytest.raises(ValueError, match="index"):
        e_transform(A_GRID, z)


def test_e_transform_output_convex():
    for pair in (power_energy(3.0), entropy_energy()):
        e_num = e_transform(A_GRID, pair.z(A_GRID))
        h = A_GRID[1] - A_GRID[0]
        assert np.min(second_differences(e_num)) >= -1e-10 * max(1.0, np.max(np.abs(e_num))) - 1e-12 * h


# ---------------------------------------------------------------------------
# discrete Legendre transform


def test_conjugate_quadratic():
    a = np.linspace(0.0, 10.0, 20001)
    fstar = conjugate(a, 0.5 * a * a, 3.0)
    assert fstar == pytest.approx(4.5, abs=1e-6)


def test_conjugate_indicator_support_function():
    a = np.linspace(0.0, 1.0, 101)
    assert conjugate(a, np.zeros_like(a), 2.0) == pytest.approx(2.0, abs=1e-14)


def test_conjugate_rejects_all_infinite():
    a = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        conjugate(a, np.full_like(a, np.inf), 1.0)


def test_biconjugation_identity():
    # brute-force oracle: for convex PWL samples, querying the second
    # transform on a b-grid containing every chord slope recovers f exactly
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = rng.integers(5, 40)
        a = np.sort(rng.uniform(0.0, 3.0, size=n))
        a[0] = 0.0
        slopes = np.sort(rng.uniform(-2.0, 5.0, size=n - 1))
        f = np.concatenate([[0.0], np.cumsum(slopes * np.diff(a))])
        b_grid = np.unique(np.concatenate([slopes, np.linspace(-3.0, 6.0, 257)]))
        fstar = conjugate(a, f, b_grid)
        fstarstar = conjugate(b_grid, fstar, a)
        scale = 1.0 + np.max(np.abs(f))
        assert np.max(np.abs(fstarstar - f)) <= 1e-9 * scale


# ---------------------------------------------------------------------------
# beta and Young's inequality


def test_beta_values():
    assert beta(incompressible_energy()) == pytest.approx(1.0, abs=1e-10)
    assert beta(entropy_energy()) == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert beta(power_energy(2.0)) == pytest.approx(1.5 ** (2.0 / 3.0), abs=1e-10)


def test_young_gap_equality_and_values():
    p = power_energy(2.0)
    assert abs(young_gap(p, 2.0, 4.0)) <= 1e-10
    assert young_gap(p, 0.0, -5.0) == 0.0
    assert young_gap(p, 1.0, 0.0) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_young_gap_outside_domain_is_inf():
    assert young_gap(incompressible_energy(), 2.0, 1.0) == math.inf


def test_young_gap_nonnegative_bulk():
    rng = np.random.default_rng(13)
    a = rng.uniform(0.0, 5.0, size=100_000)
    b = rng.uniform(-5.0, 5.0, size=100_000)
    for pair in (power_energy(2.0), power_energy(1.5), entropy_energy()):
        assert np.min(young_gap(pair, a, b)) >= -1e-12


def test_young_gap_tight_at_eprime():
    rng = np.random.default_rng(99)
    a = rng.uniform(1e-6, 5.0, size=10_000)
    for pair in (power_energy(2.0), power_energy(3.0), entropy_energy()):
        gaps = young_gap(pair, a, pair.eprime(a))
        assert np.max(np.abs(gaps)) <= 1e-10 * (1.0 + np.max(pair.e(a)))


# ---------------------------------------------------------------------------
# structural invariants


@pytest.mark.parametrize("pair", [power_energy(1.5), power_energy(2.0),
                                  power_energy(3.0), entropy_energy()])
def test_sampled_convexity(pair):
    a = np.linspace(0.0, 4.0, 2049)
    b = np.linspace(-3.0, 3.0, 2049)
    for vals in (pair.z(a), pair.e(a), pair.zstar(b), pair.estar(b)):
        scale = max(1.0, float(np.max(np.abs(vals[np.isfinite(vals)]))))
        assert np.min(second_differences(vals)) >= -1e-10 * scale


def test_conjugates_monotone():
    rng = np.random.default_rng(5)
    b = np.sort(rng.uniform(-10.0, 10.0, size=200_000))
    for pair in (power_energy(2.0), power_energy(1.5), entropy_energy()):
        zs = pair.zstar(b)
        es = pair.estar(b)
        assert np.all(np.diff(zs) >= -1e-12 * np.maximum(1.0, np.abs(zs[:-1])))
        assert np.all(np.diff(es) >= -1e-12 * np.maximum(1.0, np.abs(es[:-1])))
        assert np.min(zs) >= 0.0
        assert np.min(es) >= 0.0


@pytest.mark.parametrize("m", [2.0, 3.0])
def test_subgradient_consistency(m):
    # defining property of the transform: de(a) = z*(dz(a))
    pair = power_energy(m)
    rng = np.random.default_rng(int(m))
    a = rng.uniform(1e-3, 4.0, size=1000)
    zprime = (m * np.power(a, m - 1) - 1.0) / (m - 1.0)
    lhs = pair.zstar(zprime)
    rhs = pair.eprime(a)
    assert np.max(np.abs(lhs - rhs) / np.abs(rhs)) <= 1e-9


@pytest.mark.parametrize("pair", [power_energy(2.0), power_energy(3.0)])
def test_zstarinv_left_inverse(pair):
    q = np.linspace(1e-6, 50.0, 4001)
    back = pair.zstar(pair.zstarinv(q))
    assert np.max(np.abs(back - q) / q) <= 1e-10


def test_entropy_zstarinv_left_inverse():
    pair = entropy_energy()
    q = np.geomspace(1e-8, 1e4, 2001)
    back = pair.zstar(pair.zstarinv(q))
    assert np.max(np.abs(back - q) / q) <= 1e-10


# ---------------------------------------------------------------------------
# conjugate convergence probes (appendix limits)


def test_probe_gap_at_half_for_large_m():
    probe = conjugate_convergence_probe([256], [0.5])
    gap = probe["rows"][0]["zstar_gaps"][0]
    closed = abs(((256 + 1) / (2 * 256)) ** (256 / 255) - 0.5)
    assert gap == pytest.approx(closed, rel=1e-12)
    assert gap <= 0.02


def test_probe_negative_b_converges_to_zero():
    probe = conjugate_convergence_probe([4, 16, 64, 256], [-1.0])
    gaps = [row["zstar_gaps"][0] for row in probe["rows"]]
    assert gaps[-1] <= 1e-12
    assert all(x >= y - 1e-15 for x, y in zip(gaps, gaps[1:]))


def test_probe_gaps_monotone_in_m():
    probe = conjugate_convergence_probe([4, 16, 64, 256], [0.25, 0.5, 0.75])
    table = np.array([row["zstar_gaps"] for row in probe["rows"]])
    for col in table.T:
        increases = np.diff(col) > 1e-12
        assert increases.sum() <= 1  # one rounding inversion allowed


def test_probe_inverse_uniform_gap_shrinks():
    probe = conjugate_convergence_probe([4, 16, 64, 256], [0.5])
    ginv = [row["inv_uniform_gap"] for row in probe["rows"]]
    assert all(x > y for x, y in zip(ginv, ginv[1:]))
    # (z*_m)^{-1}(q) = (m q^{(m-1)/m} - 1)/(m-1) pinned to identity at q = 1
    pm = power_energy(4.0)
    assert pm.zstarinv(1.0) == pytest.approx(1.0, abs=1e-14)


# ---------------------------------------------------------------------------
# tabulated energies


def test_tabulated_matches_power_closed_form():
    src = power_energy(2.0)
    a = np.linspace(0.0, 4.0, 4097)
    tab = tabulated_energy(a, src.z(a))
    x = np.linspace(0.0, 4.0, 333)
    # PWL interpolation gap is h^2 z''/8 = 2.4e-7 on this grid
    assert np.max(np.abs(tab.z(x) - src.z(x))) <= 3e-7
    assert np.max(np.abs(tab.e(x) - src.e(x))) <= 1e-6
    b = np.linspace(-2.0, 3.0, 333)
    assert np.max(np.abs(tab.zstar(b) - src.zstar(b))) <= 1e-6
    assert np.max(np.abs(tab.estar(b) - src.estar(b))) <= 1e-5


def test_tabulated_zstarinv_left_inverse():
    src = power_energy(2.0)
    a = np.linspace(0.0, 4.0, 4097)
    tab = tabulated_energy(a, src.z(a))
    q = np.linspace(0.05, tab.zstar(3.0) * 0.9, 200)
    back = tab.zstar(tab.zstarinv(q))
    assert np.max(np.abs(back - q) / q) <= 1e-10


def test_tabulated_loads_from_file(tmp_path):
    path = tmp_path / "energy.txt"
    a = np.linspace(0.0, 2.0, 401)
    z = (a ** 2 - a)
    lines = ["# tabulated m=2-like energy (scaled)"]
    lines += [f"{ai:.17g} {zi:.17g}" for ai, zi in zip(a, z)]
    lines.append("2.5 inf")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    pair = load_tabulated_energy(path)
    assert pair.family == "tabulated"
    assert pair.a_max == 2.0
    assert pair.z(2.4) == math.inf
    assert pair.z(1.0) == pytest.approx(0.0, abs=1e-12)


def test_tabulated_rejects_bad_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 0 0\n1 1 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_tabulated_energy(path)


def test_energy_pair_is_frozen():
    pair = power_energy(2.0)
    with pytest.raises(Exception):
        pair.m = 3.0
    assert isinstance(pair, EnergyPair)

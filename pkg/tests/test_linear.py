import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsk.acceptance import green_exactness, random_params, random_wavevector
from nsk.errors import ConfigurationError
from nsk.grid import Grid, SpectralField, State, gradient, helmholtz_project, random_field
from nsk.linear import (
    CRITICAL,
    OVERDAMPED,
    UNDERDAMPED,
    LinearParams,
    Propagator,
    apply_semigroup,
    characteristic_roots,
    duhamel_convolve,
    green_matrix,
    longitudinal_factors,
    ode_residual,
    pointwise_bound_fit,
    weighted_norms,
)

T_GRID = np.geomspace(1e-3, 1e2, 200)
XI_GRID = np.linspace(0.05, 4.0, 120)


def test_params_validation_and_regimes():
    with pytest.raises(ConfigurationError):
        LinearParams(0.0, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        LinearParams(1.0, -2.5, 1.0)
    with pytest.raises(ConfigurationError):
        LinearParams(1.0, 0.0, 0.0)
    assert LinearParams.from_nu(1, 1).regime == UNDERDAMPED
    assert LinearParams.from_nu(2, 1).regime == CRITICAL
    assert LinearParams.from_nu(3, 2).regime == OVERDAMPED


def test_root_examples():
    lp, lm = characteristic_roots(1.0, LinearParams.from_nu(2, 1))
    assert abs(lp + 1) < 1e-15 and abs(lm + 1) < 1e-15
    lp, lm = characteristic_roots(1.0, LinearParams.from_nu(3, 2))
    assert abs(lp + 2) < 1e-15 and abs(lm + 1) < 1e-15
    lp, lm = characteristic_roots(1.0, LinearParams.from_nu(1, 1))
    # oracle: quadratic formula for lambda^2 + lambda + 1
    roots = sorted([(-1 + cmath.sqrt(-3)) / 2, (-1 - cmath.sqrt(-3)) / 2], key=lambda z: z.imag)
    assert min(abs(lp - r) for r in roots) < 1e-15 and min(abs(lm - r) for r in roots) < 1e-15
    assert abs(lp.real + 0.5) < 1e-15


def test_green_matrix_examples():
    e1 = np.array([1.0, 0.0, 0.0])
    G = green_matrix(1.0, e1, LinearParams.from_nu(3, 2))
    assert abs(G[0, 0] - (2 * math.exp(-1) - math.exp(-2))) < 1e-14
    assert abs(G[0, 0].real - 0.600424) < 5e-7
    G = green_matrix(1.0, e1, LinearParams.from_nu(2, 1))
    assert abs(G[0, 0] - 2 * math.exp(-1)) < 1e-14
    assert abs(G[0, 0].real - 0.735759) < 5e-7
    assert abs(e1 @ G[1:, 1:] @ e1) < 1e-15
    p = LinearParams.from_nu(1.3, 0.9)
    assert np.array_equal(green_matrix(0.0, e1 * 2, p), np.eye(4))
    with pytest.raises(ValueError):
        green_matrix(-1.0, e1, p)


def test_green_exactness_all_regimes():
    res = green_exactness(samples=100)
    for regime, r in res.items():
        assert r["identity"] <= 1e-14, regime
        assert r["semigroup"] <= 1e-10, regime
        assert r["ode_residual"] <= 1e-6, regime


@given(st.sampled_from([UNDERDAMPED, CRITICAL, OVERDAMPED]), st.integers(0, 2**31),
       st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_semigroup_law_property(regime, seed, s, t):
    rng = np.random.default_rng(seed)
    p = random_params(regime, rng)
    xi = random_wavevector(rng)
    lhs = green_matrix(s + t, xi, p)
    assert np.abs(lhs - green_matrix(s, xi, p) @ green_matrix(t, xi, p)).max() <= 1e-10 * max(1, np.abs(lhs).max())
    assert ode_residual(t, xi, p) <= 1e-6


@given(st.floats(0.3, 3.0), st.floats(0.01, 10.0), st.floats(0.05, 3.0))
def test_critical_branch_continuous(nu, t, k):
    """The near-critical branch agrees with the generic formulas just outside the band."""
    kappa = nu**2 / 4 * (1 + 1e-4)
    p = LinearParams.from_nu(nu, kappa, eps_deg=1e-3)
    assert p.regime == CRITICAL
    gen = longitudinal_factors(t, k * k, p, "generic")
    crit = longitudinal_factors(t, k * k, p, "critical")
    for a, b in zip(gen, crit):
        assert abs(a - b) <= 1e-7 * max(1.0, abs(a))


def test_apply_semigroup_examples(rng):
    g = Grid.cube(3, 8, 2 * np.pi)
    p = LinearParams(0.8, 0.3, 1.7)
    s = State(random_field(g, rng), tuple(random_field(g, rng) for _ in range(3)))
    same = apply_semigroup(s, 0.0, p)
    assert np.array_equal(same.stacked(), s.stacked())
    # transverse data evolves by the heat semigroup alone
    sol, _ = helmholtz_project([random_field(g, rng) for _ in range(3)])
    s2 = State(SpectralField.zeros(g), sol)
    out = apply_semigroup(s2, 0.7, p)
    heat = np.exp(-0.8 * g.dxi_sq * 0.7)
    for mj, m0 in zip(out.m, sol):
        assert np.abs(mj.coeffs - heat * m0.coeffs).max() <= 1e-14
    assert out.a.max_abs() <= 1e-14
    one = apply_semigroup(s, 1.0, p).stacked()
    two = apply_semigroup(apply_semigroup(s, 0.5, p), 0.5, p).stacked()
    assert np.abs(one - two).max() <= 1e-10


def test_propagator_matches_green_matrix(rng):
    g = Grid.cube(2, 8, 3.0)
    p = LinearParams.from_nu(1.5, 0.9)
    s = State(random_field(g, rng), tuple(random_field(g, rng) for _ in range(2)))
    out = apply_semigroup(s, 0.4, p).stacked()
    U = s.stacked()
    for idx in [(1, 2), (3, 5), (0, 1), (2, 0)]:
        xi = np.array([g.dxi[i].ravel()[idx[i]] for i in range(2)])
        ref = green_matrix(0.4, xi, p) @ U[(slice(None),) + idx]
        assert np.abs(out[(slice(None),) + idx] - ref).max() <= 1e-13


def test_pointwise_fit_examples():
    heat = pointwise_bound_fit(LinearParams(1.3, 0.0, 1.0), T_GRID, XI_GRID, block="transverse")
    assert heat.c0 >= 1.3 - 1e-9 and heat.C <= 1 + 1e-9
    crit = pointwise_bound_fit(LinearParams.from_nu(2, 1), T_GRID, XI_GRID)
    assert 0 < crit.c0 < 1.0
    over = pointwise_bound_fit(LinearParams.from_nu(3, 2), T_GRID, XI_GRID, block="longitudinal")
    assert over.c0 >= 0.99
    for nu, kappa in [(1, 1), (2, 1), (3, 2)]:
        f = pointwise_bound_fit(LinearParams.from_nu(nu, kappa), T_GRID, XI_GRID)
        assert f.c0 > 0 and math.isfinite(f.C) and f.C >= 1


def test_pointwise_fit_is_a_bound():
    p = LinearParams.from_nu(2, 1)
    f = pointwise_bound_fit(p, T_GRID, XI_GRID)
    tau = np.geomspace(1e-3, 50, 400)
    assert np.all(weighted_norms(tau, p) <= f.C * np.exp(-f.c0 * tau) * (1 + 1e-12))


def _transverse_mode_grid():
    g = Grid.cube(2, 8, 2 * np.pi)
    F = np.zeros((3,) + g.shape, dtype=complex)
    F[2][1, 0] = 1.0          # momentum along e2, mode along e1: transverse
    F[1][0, 0] = 2.0          # zero mode
    return g, F


def test_duhamel_examples():
    g, F = _transverse_mode_grid()
    p = LinearParams(1.0, 0.0, 1.0)
    assert np.abs(duhamel_convolve(g.dxi, p, [0, 0.1], [0 * F, 0 * F], 0.1)).max() == 0
    dt = 0.1
    inc = duhamel_convolve(g.dxi, p, [0, dt], [F, F], dt)
    assert abs(inc[1][0, 0] - dt * 2.0) < 1e-15
    errs = []
    for h in (0.2, 0.1, 0.05):
        inc = duhamel_convolve(g.dxi, p, [0, h], [F, F], h)
        exact = (1 - math.exp(-h)) / 1.0
        errs.append(abs(inc[2][1, 0] - exact))
    # one trapezoid panel: local error O(h^3)
    assert 7.0 < errs[0] / errs[1] < 9.0 and 7.0 < errs[1] / errs[2] < 9.0


def test_propagator_rejects_negative_time():
    with pytest.raises(ValueError):
        Propagator(Grid.cube(1, 8).dxi, LinearParams(1, 0, 1), -0.1)

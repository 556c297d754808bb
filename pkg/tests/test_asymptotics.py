import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsk.asymptotics import (
    AsymptoticMoments,
    asymptotic_error_series,
    check_comparator_indices,
    decay_fit,
    density_decay_exponent,
    density_profile,
    final_decade_verdict,
    momentum_decay_exponent,
    momentum_profiles,
    profile_symbol,
)
from nsk.errors import ConfigurationError
from nsk.grid import Grid, SpectralField, State, divergence
from nsk.linear import LinearParams, apply_semigroup, green_matrix
from nsk.solver import InitialDataSpec, build_initial_data

UNDER = LinearParams.from_nu(1.0, 1.0)
CRIT = LinearParams.from_nu(2.0, 1.0)
OVER = LinearParams.from_nu(3.0, 2.0)
X1 = (np.array([1.0]), np.array([0.0]), np.array([0.0]))


@pytest.mark.parametrize("params", [UNDER, CRIT, OVER])
def test_symbols_at_time_zero(params):
    xi = (np.array([0.3, 1.7]), np.array([-0.4, 0.2]))
    assert np.allclose(profile_symbol("G1", 0.0, xi, params), 1.0, atol=1e-14)
    assert np.allclose(profile_symbol("G2", 0.0, xi, params), 0.0, atol=1e-14)
    assert np.allclose(profile_symbol("G3", 0.0, xi, params), 1.0, atol=1e-14)


def test_reference_symbol_values():
    assert abs(profile_symbol("G2", 1.0, X1, OVER)[0] - (math.exp(-1) - math.exp(-2))) <= 1e-12
    assert abs(profile_symbol("G2", 1.0, X1, OVER)[0] - 0.232544) <= 5e-7
    assert abs(profile_symbol("G1", 1.0, X1, CRIT)[0] - 0.735759) <= 5e-7
    assert abs(profile_symbol("G3", 1.0, X1, CRIT)[0]) <= 1e-15


def test_unknown_symbol_and_negative_time():
    with pytest.raises(ValueError):
        profile_symbol("G4", 1.0, X1, CRIT)
    with pytest.raises(ValueError):
        profile_symbol("G1", -1.0, X1, CRIT)


@given(st.sampled_from([UNDER, CRIT, OVER]), st.floats(0.01, 5.0),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_symbols_match_green_matrix(params, t, v):
    xi = np.array(v)
    if xi @ xi < 1e-4:
        return
    G = green_matrix(t, xi, params)
    comps = tuple(np.array([x]) for x in xi)
    e = xi / np.linalg.norm(xi)
    g1, g2, g3 = (profile_symbol(n, t, comps, params)[0] for n in ("G1", "G2", "G3"))
    assert abs(g1 - G[0, 0]) <= 1e-10
    assert abs(g2 - G[0, 1:] @ (1j * xi)) <= 1e-10
    assert abs(g3 - e @ G[1:, 1:] @ e) <= 1e-10


@given(st.floats(0.0, 5.0), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_transverse_symbol_annihilates_xi(t, v):
    xi = np.array(v)
    S = profile_symbol("S", t, tuple(np.array([x]) for x in xi), UNDER)[..., 0]
    assert np.abs(S @ xi).max() <= 1e-12 * max(1.0, np.linalg.norm(xi))
    assert np.allclose(S, S.T)


def test_moments_validation():
    with pytest.raises(ValueError):
        AsymptoticMoments(1.0, 0.0, 0.0, np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        AsymptoticMoments(math.nan, 0.0, 0.0, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        AsymptoticMoments(1.0, 0.0, 0.0, np.zeros(3))


def test_profiles_zero_and_point_mass():
    g = Grid.cube(2, 16, 10.0)
    z = AsymptoticMoments.zero(2)
    assert density_profile(1.0, z, g, UNDER).max_abs() == 0
    sol, pot = momentum_profiles(1.0, z, g, UNDER)
    assert all(f.max_abs() == 0 for f in sol + pot)
    one = AsymptoticMoments(1.0, 0.0, 0.0, np.zeros((2, 2)))
    c = density_profile(2.0, one, g, UNDER).coeffs
    ref = profile_symbol("G1", 2.0, g.xi, UNDER) / g.cell_volume
    assert np.abs(c - ref).max() <= 1e-15 * np.abs(ref).max()
    # a unit point mass: the profile integrates to one at t = 0
    assert abs(density_profile(0.0, one, g, UNDER).coeffs.flat[0] * g.cell_volume - 1) <= 1e-14


def test_identity_stress_moment_has_no_solenoidal_part():
    g = Grid.cube(3, 12, 8.0)
    m = AsymptoticMoments(0.0, 0.0, 0.0, np.eye(3))
    sol, pot = momentum_profiles(1.5, m, g, UNDER)
    assert max(f.max_abs() for f in sol) <= 1e-14 * max(f.max_abs() for f in pot)
    assert divergence(sol).max_abs() <= 1e-14


def test_general_stress_gives_divergence_free_solenoidal_part(rng):
    g = Grid.cube(3, 12, 8.0)
    A = rng.normal(size=(3, 3))
    m = AsymptoticMoments(0.0, 0.0, 0.0, A + A.T)
    sol, _ = momentum_profiles(1.5, m, g, UNDER)
    scale = max(f.max_abs() for f in sol)
    assert scale > 0
    assert divergence(sol).max_abs() <= 1e-12 * scale * max(g.xi_abs.max(), 1)


def test_potential_profile_from_beta():
    g = Grid.cube(2, 16, 10.0)
    m = AsymptoticMoments(0.0, 1.0, 0.0, np.zeros((2, 2)))
    _, pot = momentum_profiles(1.0, m, g, OVER)
    G3 = profile_symbol("G3", 1.0, g.xi, OVER)
    for j in range(2):
        ref = 1j * g.dxi[j] * G3 / g.cell_volume
        assert np.abs(pot[j].coeffs - ref).max() <= 1e-15 * max(np.abs(ref).max(), 1e-300)


def test_pressure_moment_enters_like_minus_beta():
    g = Grid.cube(2, 16, 10.0)
    a = density_profile(1.0, AsymptoticMoments(0.0, 0.7, 0.0, np.zeros((2, 2))), g, UNDER)
    b = density_profile(1.0, AsymptoticMoments(0.0, 0.0, -0.7, np.zeros((2, 2))), g, UNDER)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_comparator_index_checks():
    check_comparator_indices(0.0, 2.0, 3)
    with pytest.raises(ConfigurationError):
        check_comparator_indices(-1.5, 2.0, 3)   # s = -d/p'
    with pytest.raises(ConfigurationError):
        check_comparator_indices(0.0, 2.5, 3)
    with pytest.raises(ConfigurationError):
        check_comparator_indices(0.0, 1.0, 3)


def test_profile_trajectory_has_zero_error():
    g = Grid.cube(2, 32, 40.0)
    m = AsymptoticMoments(1e-3, 2e-3, 0.0, np.zeros((2, 2)))
    states = []
    for t in np.geomspace(1.0, 100.0, 12):
        a = density_profile(t, m, g, UNDER)
        states.append(State(a, (SpectralField.zeros(g), SpectralField.zeros(g))).with_time(t))
    es = asymptotic_error_series(states, m, 0.0, 2.0, UNDER)
    assert np.all(es.values == 0)


def test_linear_evolution_approaches_profile():
    g = Grid.cube(2, 64, 100.0)
    st0, mt = build_initial_data(g, InitialDataSpec(amplitude=1e-3, width=1.0))
    m = AsymptoticMoments.from_data(st0, mt)
    states = [apply_semigroup(st0, t, UNDER).with_time(t) for t in np.geomspace(1.0, 100.0, 24)]
    for s in (0.0, 0.5):
        es = asymptotic_error_series(states, m, s, 2.0, UNDER)
        assert es.passed and es.monotone, es.to_json()


def test_final_decade_verdict():
    t = np.geomspace(1, 100, 30)
    r, ok, mono = final_decade_verdict(t, t**-0.5)
    first = t[t >= 10 * (1 - 1e-12)][0]
    assert ok and mono and abs(r - (100 / first) ** -0.5) < 1e-12
    r, ok, mono = final_decade_verdict(t, np.ones_like(t))
    assert not ok and mono
    v = t**-0.5
    v[-5] *= 1.2
    assert not final_decade_verdict(t, v)[2]


@given(st.floats(-3, 0.5), st.floats(-5, 5), st.floats(1.0, 50.0))
def test_decay_fit_recovers_planted_slope(slope, logc, t0):
    t = np.geomspace(t0, 20 * t0, 16)
    f = decay_fit(t, math.exp(logc) * t**slope)
    assert abs(f.slope - slope) <= 1e-6 and abs(f.intercept - logc) <= 1e-6
    assert f.residual <= 1e-9 and f.n_points == 16


def test_decay_fit_window_and_errors():
    t = np.geomspace(0.1, 1000, 81)   # 20 points per decade, endpoints on the grid
    f = decay_fit(t, t**-0.75, window=(10, 100))
    assert abs(f.slope + 0.75) <= 1e-12
    with pytest.raises(ValueError, match="decade"):
        decay_fit(t, t**-1, window=(1, 5))
    with pytest.raises(ValueError, match="8 points"):
        decay_fit(t[:5], t[:5] ** -1)
    with pytest.raises(ValueError):
        decay_fit(t, -(t**-1))
    with pytest.raises(ValueError):
        decay_fit(t, t[:-1])


def test_decay_exponents():
    assert density_decay_exponent(3, 2.0) == -0.75
    assert momentum_decay_exponent(3, 2.0) == -1.25
    assert density_decay_exponent(2, 2.0) == -0.5
    assert momentum_decay_exponent(2, 2.0) == -1.0
    assert density_decay_exponent(3, 1.0) == 0.0

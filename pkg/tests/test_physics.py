import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsk.acceptance import physics_identities
from nsk.errors import ConfigurationError, GuardViolation
from nsk.grid import (
    FullLayout,
    Grid,
    HalfLayout,
    SpectralField,
    State,
    random_field,
    transform_forward,
)
from nsk.linear import LinearParams
from nsk.physics import (
    NonlinearOperator,
    PressureModel,
    compose_I,
    compose_IP,
    compose_tilde_IP,
    korteweg_stress,
    korteweg_tensor,
    ktilde_stress,
    ktilde_tensor,
    nonlinearity,
)


def const(grid, v):
    return transform_forward(grid, np.full(grid.shape, float(v)))


def band_limited(grid, rng, amp, frac=1 / 8):
    k0 = 2 * np.pi / max(grid.L)
    f = random_field(grid, rng, band=(k0, min(grid.n) * frac * k0), dealiased=False)
    return f * (amp / np.abs(f.physical()).max())


def test_pressure_model():
    P = PressureModel((1.0,))
    assert P.derivative(0.0) == 0 and P.tilde(0.0) == 1.0
    assert math.isclose(float(P.derivative(0.1)), 0.2, rel_tol=1e-15)
    P3 = PressureModel((2.0, -1.0, 0.5))
    b = np.linspace(-0.4, 0.4, 9)
    # oracle: the series written out term by term
    assert np.allclose(P3.potential(b), 2 * b**2 - b**3 + 0.5 * b**4, rtol=1e-14)
    assert np.allclose(P3.derivative(b), 4 * b - 3 * b**2 + 2 * b**3, rtol=1e-14)
    with pytest.raises(ConfigurationError):
        PressureModel(tuple([1.0] * 16))
    with pytest.raises(ConfigurationError):
        PressureModel((1.0,), radius=0.0)
    assert PressureModel(()).is_zero


def test_compose_examples():
    g = Grid.cube(2, 8, 1.0)
    assert compose_I(const(g, 0)).max_abs() == 0
    assert np.allclose(compose_I(const(g, 1.0)).physical(), 0.5)
    assert np.allclose(compose_I(const(g, -0.5)).physical(), -1.0)
    P = PressureModel((1.0,))
    assert compose_IP(const(g, 0), P).max_abs() == 0
    assert np.allclose(compose_IP(const(g, 0.1), P).physical(), 0.2)
    assert np.allclose(compose_tilde_IP(const(g, 0.0), PressureModel((3.5, 1.0))).physical(), 3.5)


def test_guards():
    g = Grid.cube(1, 8, 1.0)
    with pytest.raises(GuardViolation) as e:
        compose_I(const(g, -0.95))
    assert e.value.guard == "vacuum"
    with pytest.raises(GuardViolation) as e:
        compose_IP(const(g, 0.6), PressureModel((1.0,), radius=1.0))
    assert e.value.guard == "pressure_radius"


def test_korteweg_pointwise_example():
    kappa = 1.7
    grad = [np.array([1.0]), np.array([0.0]), np.array([0.0])]
    K = korteweg_stress(grad, np.array([2.0]), kappa)
    expect = np.diag([-kappa / 2, kappa / 2, kappa / 2])
    for j in range(3):
        for k in range(j, 3):
            assert math.isclose(K[(j, k)][0], expect[j, k], abs_tol=1e-15)


def test_ktilde_pointwise_example():
    grad = [np.array([1.0]), np.array([2.0]), np.array([0.0])]
    Kt = ktilde_stress(grad, 1.0)
    assert Kt[(0, 1)][0] == 2.0 and Kt[(0, 0)][0] == 3.5


@given(st.integers(0, 2**31), st.integers(1, 3), st.floats(0.1, 3.0))
def test_ktilde_trace_property(seed, d, kappa):
    rng = np.random.default_rng(seed)
    grad = [rng.normal(size=5) for _ in range(d)]
    Kt = ktilde_stress(grad, kappa)
    tr = sum(Kt[(j, j)] for j in range(d))
    g2 = sum(x * x for x in grad)
    assert np.allclose(tr, (d / 2 + 1) * kappa * g2, rtol=1e-13)


def test_tensors_constant_and_linear_in_kappa(rng):
    g = Grid.cube(2, 16, 2 * np.pi)
    c = const(g, 0.3)
    assert korteweg_tensor(c, 1.0).max_abs() < 1e-13
    assert ktilde_tensor(c, 1.0).max_abs() < 1e-13
    a = band_limited(g, rng, 0.1)
    K1, K2 = korteweg_tensor(a, 1.0), korteweg_tensor(a, 2.0)
    for j in range(2):
        for k in range(2):
            assert np.allclose(K2[j, k].coeffs, 2 * K1[j, k].coeffs, atol=1e-15)


def test_physics_identities_criterion():
    res = physics_identities()
    assert all(v["pass"] for v in res.values()), res


@given(st.integers(0, 2**31), st.floats(0.01, 0.3))
def test_gradient_identity_property(seed, amp):
    rng = np.random.default_rng(seed)
    g = Grid.cube(2, 32, 2 * np.pi)
    a = band_limited(g, rng, amp)
    P = PressureModel((1.0, 0.4))
    x = a.physical()
    # physical-space oracle with analytic derivatives of the band-limited field
    lhs = [P.derivative(x) * np.real(np.fft.ifftn(1j * k * a.coeffs)) for k in g.dxi]
    rhs = [np.real(np.fft.ifftn(1j * k * np.fft.fftn(P.potential(x)))) for k in g.dxi]
    scale = max(np.abs(r).max() for r in rhs)
    assert max(np.abs(l - r).max() for l, r in zip(lhs, rhs)) <= 1e-8 * scale


def _oracle_nonlinearity(a, m, params, P):
    """Direct physical-space evaluation of the forcing, masked at the end."""
    g = a.grid
    d = g.d
    k = g.dxi
    D = lambda f, j: np.real(np.fft.ifftn(1j * k[j] * np.fft.fftn(f)))
    x = a.physical()
    mm = [mj.physical() for mj in m]
    rho = 1 + x
    I = x / rho
    ga = [D(x, j) for j in range(d)]
    out = []
    lap_a2 = sum(D(D(x * x, j), j) for j in range(d))
    g2 = sum(v * v for v in ga)
    Im = [I * mj for mj in mm]
    div_Im = sum(D(Im[j], j) for j in range(d))
    for j in range(d):
        conv = sum(D(-mm[j] * mm[kk] / rho, kk) for kk in range(d))
        press = -P.derivative(x) * ga[j]
        lame = params.mu * sum(D(D(Im[j], kk), kk) for kk in range(d)) + (params.lam + params.mu) * D(div_Im, j)
        # nonlinear part of div K: (kappa/2) grad(Lap a^2 - |grad a|^2) - kappa div(grad a grad a)
        kort = 0.5 * params.kappa * D(lap_a2 - g2, j) - params.kappa * sum(D(ga[j] * ga[kk], kk) for kk in range(d))
        out.append(np.where(g.dealias_mask, np.fft.fftn(conv + press - lame + kort), 0.0))
    return out


@given(st.integers(0, 2**31))
def test_nonlinearity_matches_direct_oracle(seed):
    rng = np.random.default_rng(seed)
    g = Grid.cube(2, 32, 2 * np.pi)
    params = LinearParams(0.9, 0.4, 1.3)
    P = PressureModel((1.0, -0.3))
    a = band_limited(g, rng, 0.05)
    m = tuple(band_limited(g, rng, 0.05) for _ in range(2))
    got = nonlinearity(State(a, m), params, P)
    ref = _oracle_nonlinearity(a, m, params, P)
    scale = max(np.abs(r).max() for r in ref)
    assert max(np.abs(x.coeffs - r).max() for x, r in zip(got, ref)) <= 1e-11 * scale


def test_nonlinearity_examples(rng):
    g = Grid.cube(2, 32, 2 * np.pi)
    params = LinearParams(1.0, 0.0, 1.0)
    P = PressureModel((1.0,))
    z = State.zeros(g)
    assert all(f.max_abs() == 0 for f in nonlinearity(z, params, P))
    m = tuple(band_limited(g, rng, 0.1) for _ in range(2))
    out = nonlinearity(State(SpectralField.zeros(g), m), params, P)
    for j in range(2):
        ref = -sum(1j * g.dxi[k] * np.fft.fftn(m[j].physical() * m[k].physical()) for k in range(2))
        ref = np.where(g.dealias_mask, ref, 0.0)
        assert np.abs(out[j].coeffs - ref).max() <= 1e-12 * np.abs(ref).max()


def test_quadratic_scaling_single_mode():
    g = Grid.cube(2, 32, 2 * np.pi)
    x, _ = g.coordinates()
    params = LinearParams(1.0, 0.0, 1.0)
    P = PressureModel((1.0,))
    norms = []
    for amp in (1e-3, 5e-4):
        a = transform_forward(g, amp * np.cos(2 * x) * np.ones(g.shape))
        N = nonlinearity(State(a, (SpectralField.zeros(g),) * 2), params, P)
        norms.append(max(f.max_abs() for f in N))
    assert 3.8 <= norms[0] / norms[1] <= 4.2


@given(st.integers(0, 2**31))
def test_half_and_full_layouts_agree(seed):
    rng = np.random.default_rng(seed)
    g = Grid((16, 12), (5.0, 4.0))
    params = LinearParams(1.0, 0.2, 0.8)
    P = PressureModel((1.0, 0.5))
    a = band_limited(g, rng, 0.1)
    m = [band_limited(g, rng, 0.1) for _ in range(2)]
    full = FullLayout(g)
    half = HalfLayout(g)
    U = np.stack([a.coeffs] + [x.coeffs for x in m])
    nf, df = NonlinearOperator(full, params, P)(U, diagnostics=True)
    nh, dh = NonlinearOperator(half, params, P)(np.stack([half.from_full(u) for u in U]), diagnostics=True)
    assert np.abs(np.stack([half.to_full(c) for c in nh]) - nf).max() <= 1e-13 * np.abs(nf).max()
    assert math.isclose(df.pressure_moment, dh.pressure_moment, rel_tol=1e-12)
    assert np.allclose(df.stress_moment, dh.stress_moment, rtol=1e-12, atol=0)

"""Constitutive relations and the nonlinear forcing of the momentum equation.

Everything here works with the density perturbation ``a = rho - 1``.
Compositions such as ``a / (1 + a)`` are evaluated pointwise on the
collocation grid, transformed back and cut by the 2/3 rule.

The forcing is

    N(a, m) = div((I(a) - 1) m (x) m) - grad(a^2 Itilde_P(a))
              - Lame(I(a) m) + div K(a)

where ``K(a)`` is the capillarity stress with its linear part ``kappa
Lap a Id`` removed (that part lives in the linear propagator).  The
pressure term uses ``I_P(a) grad a = grad(a^2 Itilde_P(a))`` so it is an
exact gradient and has no mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GuardViolation
from .grid import (
    FullLayout,
    Grid,
    SpectralField,
    State,
    dealias,
    gradient,
    laplacian,
    transform_forward,
)
from .linear import LinearParams

DEFAULT_VACUUM_GUARD = 0.1
MAX_ORDER = 16


@dataclass(frozen=True)
class PressureModel:
    """Taylor data of P about rho = 1; ``coeffs[0]`` is a_2 (no linear term)."""

    coeffs: tuple[float, ...] = (1.0,)
    radius: float = 1.0

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) == 0:
            c = (0.0,)
        if len(c) > MAX_ORDER - 1:
            raise ConfigurationError(f"pressure.coeffs: at most {MAX_ORDER - 1} terms (orders 2..{MAX_ORDER})")
        if not all(np.isfinite(c)):
            raise ConfigurationError("pressure.coeffs: must be finite")
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ConfigurationError("pressure.radius: must be positive")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n_max(self) -> int:
        return len(self.coeffs) + 1

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def tilde(self, b):
        """sum_{n>=2} a_n b^(n-2)."""
        b = np.asarray(b, dtype=float)
        out = np.zeros_like(b)
        for c in reversed(self.coeffs):
            out = out * b + c
        return out

    def derivative(self, b):
        """I_P(b) = P'(1+b) = sum n a_n b^(n-1)."""
        b = np.asarray(b, dtype=float)
        out = np.zeros_like(b)
        for n, c in reversed(list(enumerate(self.coeffs, start=2))):
            out = out * b + n * c
        return out * b

    def potential(self, b):
        """a^2 Itilde_P(a) = P(1+b) - P(1)."""
        b = np.asarray(b, dtype=float)
        return b * b * self.tilde(b)

    def to_json(self) -> dict:
        return {"coeffs": list(self.coeffs), "radius": self.radius}


def check_vacuum(a_phys: np.ndarray, guard: float = DEFAULT_VACUUM_GUARD):
    rho_min = 1.0 + float(np.min(a_phys))
    if rho_min < guard:
        raise GuardViolation("vacuum", f"min density {rho_min:.6g} below vacuum guard {guard:g}")


def check_radius(a_phys: np.ndarray, pressure: PressureModel):
    sup = float(np.max(np.abs(a_phys)))
    if sup > pressure.radius / 2:
        raise GuardViolation(
            "pressure_radius",
            f"sup|a| = {sup:.6g} exceeds half the pressure series radius ({pressure.radius / 2:g})",
        )


def _compose(a: SpectralField, fn) -> SpectralField:
    return dealias(transform_forward(a.grid, fn(a.physical())))


def compose_I(a: SpectralField, vacuum_guard: float = DEFAULT_VACUUM_GUARD) -> SpectralField:
    x = a.physical()
    check_vacuum(x, vacuum_guard)
    return dealias(transform_forward(a.grid, x / (1.0 + x)))


def compose_IP(a: SpectralField, pressure: PressureModel) -> SpectralField:
    x = a.physical()
    check_radius(x, pressure)
    return dealias(transform_forward(a.grid, pressure.derivative(x)))


def compose_tilde_IP(a: SpectralField, pressure: PressureModel) -> SpectralField:
    x = a.physical()
    check_radius(x, pressure)
    return dealias(transform_forward(a.grid, pressure.tilde(x)))


# --- symmetric tensors ----------------------------------------------------

class TensorField:
    """Symmetric d x d tensor of SpectralFields; only j <= k is stored."""

    def __init__(self, grid: Grid, upper: dict[tuple[int, int], SpectralField]):
        d = grid.d
        store = {}
        for j in range(d):
            for k in range(j, d):
                f = upper.get((j, k))
                if f is None:
                    f = upper.get((k, j), SpectralField.zeros(grid))
                store[(j, k)] = f
        self.grid = grid
        self._store = store

    @property
    def d(self) -> int:
        return self.grid.d

    def __getitem__(self, idx) -> SpectralField:
        j, k = idx
        return self._store[(min(j, k), max(j, k))]

    def trace(self) -> SpectralField:
        out = SpectralField.zeros(self.grid)
        for j in range(self.d):
            out = out + self[j, j]
        return out

    def divergence(self) -> tuple[SpectralField, ...]:
        """Row divergence: (div T)_j = sum_k d_k T_jk."""
        out = []
        for j in range(self.d):
            c = np.zeros(self.grid.shape, dtype=complex)
            for k, xk in enumerate(self.grid.dxi):
                c += 1j * xk * self[j, k].coeffs
            out.append(SpectralField(self.grid, c))
        return tuple(out)

    def to_array(self) -> np.ndarray:
        return np.stack([np.stack([self[j, k].coeffs for k in range(self.d)]) for j in range(self.d)])

    def max_abs(self) -> float:
        return max(f.max_abs() for f in self._store.values())


# pointwise kernels on physical samples

def korteweg_stress(grad_rho: Sequence[np.ndarray], lap_rho_sq: np.ndarray, kappa: float) -> dict:
    """(kappa/2)(Lap rho^2 - |grad rho|^2) Id - kappa grad rho (x) grad rho."""
    g2 = sum(g * g for g in grad_rho)
    iso = 0.5 * kappa * (lap_rho_sq - g2)
    d = len(grad_rho)
    out = {}
    for j in range(d):
        for k in range(j, d):
            v = -kappa * grad_rho[j] * grad_rho[k]
            out[(j, k)] = v + iso if j == k else v
    return out


def ktilde_stress(grad_a: Sequence[np.ndarray], kappa: float) -> dict:
    """kappa d_j a d_k a + (kappa/2)|grad a|^2 delta_jk."""
    g2 = sum(g * g for g in grad_a)
    d = len(grad_a)
    out = {}
    for j in range(d):
        for k in range(j, d):
            v = kappa * grad_a[j] * grad_a[k]
            out[(j, k)] = v + 0.5 * kappa * g2 if j == k else v
    return out


def _tensor_from_physical(grid: Grid, comps: dict, dealiased: bool = True) -> TensorField:
    up = {}
    for key, v in comps.items():
        f = transform_forward(grid, v)
        up[key] = dealias(f) if dealiased else f
    return TensorField(grid, up)


def korteweg_tensor(a: SpectralField, kappa: float) -> TensorField:
    """Full capillarity stress of rho = 1 + a."""
    grid = a.grid
    grad = [g.physical() for g in gradient(a)]
    # Lap (1+a)^2 = 2 Lap a + Lap a^2
    a2 = transform_forward(grid, a.physical() ** 2)
    lap = (laplacian(a) * 2.0 + laplacian(dealias(a2))).physical()
    return _tensor_from_physical(grid, korteweg_stress(grad, lap, kappa))


def ktilde_tensor(a: SpectralField, kappa: float) -> TensorField:
    grad = [g.physical() for g in gradient(a)]
    return _tensor_from_physical(a.grid, ktilde_stress(grad, kappa))


# --- the forcing ------------------------------------------------------------

@dataclass
class NonlinearDiagnostics:
    pressure_moment: float
    stress_moment: np.ndarray  # d x d, integral of m_j m_k/(1+a) + Ktilde_jk
    min_density: float
    sup_a: float


class NonlinearOperator:
    """Evaluates N on stacked coefficient arrays in a given array layout.

    The solver uses the half-spectrum layout; the field-level
    :func:`nonlinearity` uses the full one.  ``linear_only`` switches the
    forcing off, which is how linear-consistency runs are made.
    """

    def __init__(self, layout, params: LinearParams, pressure: PressureModel,
                 vacuum_guard: float = DEFAULT_VACUUM_GUARD, linear_only: bool = False,
                 dealiased: bool = True):
        self.layout = layout
        self.grid = layout.grid
        self.params = params
        self.pressure = pressure
        self.vacuum_guard = vacuum_guard
        self.linear_only = linear_only
        self.dealiased = dealiased

    def _fwd(self, x: np.ndarray) -> np.ndarray:
        c = self.layout.forward(x)
        if self.dealiased:
            c *= self.layout.mask
        return c

    def __call__(self, U: np.ndarray, diagnostics: bool = False):
        lay = self.layout
        d = self.grid.d
        if self.linear_only:
            out = np.zeros((d,) + U.shape[1:], dtype=complex)
            return (out, None) if diagnostics else out
        mu, lam, kappa = self.params.mu, self.params.lam, self.params.kappa
        dxi = lay.dxi
        a = lay.inverse(U[0])
        m = [lay.inverse(U[j + 1]) for j in range(d)]
        ga = [lay.inverse(1j * k * U[0]) for k in dxi]

        rho = 1.0 + a
        rho_min = float(rho.min())
        if rho_min < self.vacuum_guard:
            raise GuardViolation("vacuum", f"min density {rho_min:.6g} below vacuum guard {self.vacuum_guard:g}")
        sup_a = float(np.abs(a).max())
        if not self.pressure.is_zero and sup_a > self.pressure.radius / 2:
            raise GuardViolation("pressure_radius",
                                 f"sup|a| = {sup_a:.6g} exceeds half the pressure series radius")
        inv_rho = 1.0 / rho
        I = a * inv_rho
        g2 = sum(g * g for g in ga)

        # isotropic scalar: -a^2 Itilde_P(a) - (kappa/2)|grad a|^2 (+ (kappa/2) Lap a^2 below)
        q_phys = -self.pressure.potential(a) - 0.5 * kappa * g2
        q = self._fwd(q_phys)
        if kappa != 0.0:
            q = q - 0.5 * kappa * lay.dxi_sq * self._fwd(a * a)

        S = {}
        for j in range(d):
            for k in range(j, d):
                S[(j, k)] = self._fwd(-m[j] * m[k] * inv_rho - kappa * ga[j] * ga[k])
        Im = [self._fwd(I * mj) for mj in m]
        div_Im = sum(1j * k * v for k, v in zip(dxi, Im))

        out = np.empty((d,) + U.shape[1:], dtype=complex)
        for j in range(d):
            acc = 1j * dxi[j] * q
            for k in range(d):
                acc = acc + 1j * dxi[k] * S[(min(j, k), max(j, k))]
            # - Lame(I m) = mu |xi|^2 Im_j - (lam + mu) i xi_j (i xi . Im)
            acc = acc + mu * lay.dxi_sq * Im[j] - (lam + mu) * 1j * dxi[j] * div_Im
            out[j] = acc
        if not diagnostics:
            return out
        vol = self.grid.cell_volume
        kt = ktilde_stress(ga, kappa)
        M = np.zeros((d, d))
        for j in range(d):
            for k in range(j, d):
                M[j, k] = M[k, j] = vol * float(np.sum(m[j] * m[k] * inv_rho + kt[(j, k)]))
        diag = NonlinearDiagnostics(
            pressure_moment=vol * float(np.sum(self.pressure.potential(a))),
            stress_moment=M,
            min_density=rho_min,
            sup_a=sup_a,
        )
        return out, diag


def nonlinearity(state: State, params: LinearParams, pressure: PressureModel,
                 vacuum_guard: float = DEFAULT_VACUUM_GUARD) -> tuple[SpectralField, ...]:
    grid = state.grid
    op = NonlinearOperator(FullLayout(grid), params, pressure, vacuum_guard)
    out = op(state.stacked())
    return tuple(SpectralField(grid, c) for c in out)

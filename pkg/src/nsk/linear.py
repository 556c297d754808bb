"""Exact solution operator of the linearised system.

In Fourier variables the homogeneous problem reads

    a'  = -i xi . m
    m'  = -mu |xi|^2 m - (lam + mu) xi (xi . m) - i kappa xi |xi|^2 a

Splitting ``m`` into its component along ``e = xi/|xi|`` and the transverse
rest, the transverse part is pure heat flow ``H = exp(-mu |xi|^2 t)`` and
the longitudinal pair ``(a, e.m)`` is the 2x2 system with characteristic
roots ``lambda_+-``.  Its fundamental matrix is written through

    D = (exp(lambda_+ t) - exp(lambda_- t)) / (lambda_+ - lambda_-)
    A = exp(lambda_- t) - lambda_- D        (a <- a)
    L = exp(lambda_+ t) + lambda_- D        (e.m <- e.m)

with ``a <- e.m`` equal to ``-i|xi| D`` and ``e.m <- a`` equal to
``-i kappa |xi|^3 D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, SpectralField, State

UNDERDAMPED = "underdamped"
CRITICAL = "critical"
OVERDAMPED = "overdamped"


@dataclass(frozen=True)
class LinearParams:
    mu: float
    lam: float
    kappa: float
    rho_star: float = 1.0
    eps_deg: float = 1e-6

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not self.nu > 0:
            raise ConfigurationError(f"nu = lam + 2 mu must be positive, got {self.nu}")
        if not self.kappa > 0:
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")
        if self.rho_star != 1.0:
            raise ConfigurationError("only the normalised reference density rho* = 1 is supported")
        if not 0 <= self.eps_deg < 1:
            raise ConfigurationError("eps_deg must lie in [0, 1)")

    @classmethod
    def from_nu(cls, nu: float, kappa: float, mu: float = 1.0, **kw) -> "LinearParams":
        return cls(mu=mu, lam=nu - 2 * mu, kappa=kappa, **kw)

    @property
    def nu(self) -> float:
        return self.lam + 2 * self.mu

    @property
    def discriminant(self) -> float:
        return self.nu**2 - 4 * self.kappa

    @property
    def regime(self) -> str:
        if abs(self.discriminant) < self.eps_deg * self.nu**2:
            return CRITICAL
        return UNDERDAMPED if self.discriminant < 0 else OVERDAMPED

    def to_json(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam, "kappa": self.kappa, "nu": self.nu,
                "regime": self.regime}


def characteristic_roots(xi_sq, params: LinearParams):
    """Roots of lambda^2 + nu|xi|^2 lambda + kappa|xi|^4 = 0, as (lambda_+, lambda_-)."""
    xi_sq = np.asarray(xi_sq, dtype=float)
    delta = np.sqrt(complex(1.0 - 4.0 * params.kappa / params.nu**2))
    half = -0.5 * params.nu * xi_sq
    return half * (1 + delta), half * (1 - delta)


def _expm1c(z):
    """expm1 for complex arguments without cancellation near zero."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


def _phi1(z):
    """(exp(z) - 1)/z with the removable singularity filled in."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, _expm1c(safe) / safe)


def _generic_factors(t, xi_sq, params):
    lp, lm = characteristic_roots(xi_sq, params)
    em = np.exp(lm * t)
    D = t * em * _phi1((lp - lm) * t)
    A = em - lm * D
    L = np.exp(lp * t) + lm * D
    return A, D, L


def _critical_factors(t, xi_sq, params):
    """Double-root formulas plus the first-order correction in nu^2 - 4 kappa."""
    lbar = -0.5 * params.nu * xi_sq
    h2t2 = 0.25 * xi_sq**2 * params.discriminant * t * t
    e = np.exp(lbar * t)
    cosh_ = 1.0 + 0.5 * h2t2
    sinhc = 1.0 + h2t2 / 6.0
    D = t * e * sinhc
    A = e * (cosh_ - lbar * t * sinhc)
    L = e * (cosh_ + lbar * t * sinhc)
    return (np.asarray(A, dtype=complex), np.asarray(D, dtype=complex),
            np.asarray(L, dtype=complex))


def longitudinal_factors(t, xi_sq, params: LinearParams, branch: str = "auto"):
    """(A, D, L) of the longitudinal 2x2 fundamental matrix, vectorised."""
    xi_sq = np.asarray(xi_sq, dtype=float)
    if branch == "auto":
        branch = "critical" if params.regime == CRITICAL else "generic"
    if branch == "generic":
        return _generic_factors(t, xi_sq, params)
    if branch == "critical":
        return _critical_factors(t, xi_sq, params)
    raise ValueError(f"unknown branch {branch!r}")


def transverse_factor(t, xi_sq, params: LinearParams):
    return np.exp(-params.mu * np.asarray(xi_sq, dtype=float) * t)


def green_matrix(t: float, xi, params: LinearParams, branch: str = "auto") -> np.ndarray:
    """(1+d)x(1+d) Green matrix at one wavevector."""
    if t < 0:
        raise ValueError("Green matrix requested for negative time")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    d = xi.size
    k2 = float(xi @ xi)
    G = np.zeros((d + 1, d + 1), dtype=complex)
    if k2 == 0.0:
        return np.eye(d + 1, dtype=complex)
    A, D, L = (complex(v) for v in longitudinal_factors(t, k2, params, branch))
    H = float(transverse_factor(t, k2, params))
    P = np.outer(xi, xi) / k2
    G[0, 0] = A
    G[0, 1:] = -1j * xi * D
    G[1:, 0] = -1j * params.kappa * xi * k2 * D
    G[1:, 1:] = L * P + H * (np.eye(d) - P)
    return G


def generator_matrix(xi, params: LinearParams) -> np.ndarray:
    """Right-hand side matrix M of U' = M U for one wavevector."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    d = xi.size
    k2 = float(xi @ xi)
    M = np.zeros((d + 1, d + 1), dtype=complex)
    M[0, 1:] = -1j * xi
    M[1:, 0] = -1j * params.kappa * xi * k2
    M[1:, 1:] = -params.mu * k2 * np.eye(d) - (params.lam + params.mu) * np.outer(xi, xi)
    return M


def ode_residual(t: float, xi, params: LinearParams) -> float:
    """Relative residual of d/dt G = M G by a central difference.

    The step is scaled to the fastest rate so stiff modes are resolved.
    """
    M = generator_matrix(xi, params)
    nM = float(np.linalg.norm(M, 2))
    h = min(1e-4 * t, 1e-3 / max(nM, 1e-300))
    G = green_matrix(t, xi, params)
    dG = (green_matrix(t + h, xi, params) - green_matrix(t - h, xi, params)) / (2 * h)
    scale = nM * float(np.linalg.norm(G, 2))
    return float(np.abs(dG - M @ G).max() / scale) if scale > 0 else 0.0


class Propagator:
    """Per-mode Green-matrix factors for a fixed step, over a set of wavevectors.

    ``xi`` is a sequence of broadcastable component arrays (the grid's
    Nyquist-safe ``dxi`` in practice).  ``apply`` acts on a stacked array
    ``[a, m_1, ..., m_d]`` of coefficients laid out like those arrays.
    """

    def __init__(self, xi: Sequence[np.ndarray], params: LinearParams, t: float):
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        self.params = params
        self.t = float(t)
        self.xi = tuple(xi)
        k2 = sum(k**2 for k in self.xi)
        self.k2 = np.asarray(k2, dtype=float)
        self.kabs = np.sqrt(self.k2)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.kabs, 1.0), 0.0)
        self.unit = tuple(k * inv for k in self.xi)
        self.A, self.D, self.L = longitudinal_factors(self.t, self.k2, params)
        self.H = transverse_factor(self.t, self.k2, params)
        # off-diagonal entries of the longitudinal block
        self.a_from_mpar = -1j * self.kabs * self.D
        self.mpar_from_a = -1j * params.kappa * self.kabs**3 * self.D

    def apply(self, U: np.ndarray) -> np.ndarray:
        a, m = U[0], U[1:]
        mpar = sum(e * mj for e, mj in zip(self.unit, m))
        a_new = self.A * a + self.a_from_mpar * mpar
        mpar_new = self.mpar_from_a * a + self.L * mpar
        out = np.empty_like(U)
        out[0] = a_new
        for j, (e, mj) in enumerate(zip(self.unit, m)):
            out[j + 1] = self.H * (mj - e * mpar) + e * mpar_new
        return out

    def apply_momentum_forcing(self, F: np.ndarray) -> np.ndarray:
        """G(t) applied to (0, F) for a stacked momentum forcing F."""
        fpar = sum(e * fj for e, fj in zip(self.unit, F))
        out = np.empty((len(F) + 1,) + F.shape[1:], dtype=complex)
        out[0] = self.a_from_mpar * fpar
        for j, (e, fj) in enumerate(zip(self.unit, F)):
            out[j + 1] = self.H * (fj - e * fpar) + e * (self.L * fpar)
        return out


def apply_semigroup(state: State, t: float, params: LinearParams) -> State:
    if t == 0:
        return state
    prop = Propagator(state.grid.dxi, params, t)
    U = prop.apply(state.stacked())
    return State.from_arrays(state.grid, U[0], U[1:], state.t + t)


# --- pointwise decay fit --------------------------------------------------

@dataclass(frozen=True)
class PointwiseFit:
    c0: float
    C: float
    feasible: bool
    tau_max: float


def _scaled_longitudinal(tau, params: LinearParams):
    """(A, D, L) at |xi| = 1 divided by exp(shift), and the real shift itself.

    Every entry is a combination of exp(lambda_+ tau) and exp(lambda_- tau)
    with tau-independent coefficients, so both exponentials can be
    rescaled by the slower one without underflow at large tau.
    """
    tau = np.asarray(tau, dtype=float)
    if params.regime == CRITICAL:
        lbar = -0.5 * params.nu
        h2t2 = 0.25 * params.discriminant * tau * tau
        cosh_ = 1.0 + 0.5 * h2t2
        sinhc = 1.0 + h2t2 / 6.0
        D = tau * sinhc
        A = cosh_ - lbar * tau * sinhc
        L = cosh_ + lbar * tau * sinhc
        return A.astype(complex), D.astype(complex), L.astype(complex), lbar * tau
    lp, lm = characteristic_roots(1.0, params)
    shift = float(np.real(lm))
    em = np.exp((lm - shift) * tau)
    D = tau * em * _phi1((lp - lm) * tau)
    A = em - lm * D
    L = np.exp((lp - shift) * tau) + lm * D
    return A, D, L, shift * tau


def weighted_log_norms(tau, params: LinearParams, block: str = "full") -> np.ndarray:
    """log of :func:`weighted_norms`, finite for arbitrarily large tau."""
    tau = np.asarray(tau, dtype=float)
    logH = -params.mu * tau
    if block == "transverse":
        return logH
    A, D, L, shift = _scaled_longitudinal(tau, params)
    W = np.empty(tau.shape + (2, 2), dtype=complex)
    W[..., 0, 0] = A
    W[..., 0, 1] = -1j * D
    W[..., 1, 0] = -1j * params.kappa * D
    W[..., 1, 1] = L
    with np.errstate(divide="ignore"):
        long = np.log(np.linalg.norm(W, ord=2, axis=(-2, -1))) + shift
    if block == "longitudinal":
        return long
    if block == "full":
        return np.maximum(long, logH)
    raise ValueError(f"unknown block {block!r}")


def weighted_norms(tau, params: LinearParams, block: str = "full") -> np.ndarray:
    """Spectral norm of diag(|xi|,1) G diag(1/|xi|,1) as a function of tau = |xi|^2 t.

    The weighted Green matrix depends on (t, xi) only through tau.
    """
    return np.exp(weighted_log_norms(tau, params, block))


def _envelope_ok(tau, lognorm, c0):
    g = lognorm + c0 * tau
    cut = int(np.ceil(2 * tau.size / 3))
    return g[cut:].max() <= g[:cut].max() + 1e-12


def pointwise_bound_fit(params: LinearParams, t_grid, xi_grid, block: str = "full",
                        tol: float = 1e-13) -> PointwiseFit:
    """Largest c0 (and matching smallest C) with |W(t, xi)| <= C exp(-c0 |xi|^2 t).

    ``xi_grid`` holds wavenumber magnitudes.  A rate c0 is accepted when the
    envelope log|W| + c0 tau stops growing over the last third of the sorted
    samples, so the bound extends past the sampled range instead of being
    absorbed into C.
    """
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    xi_grid = np.abs(np.asarray(xi_grid, dtype=float).ravel())
    if t_grid.size == 0 or xi_grid.size == 0:
        raise ValueError("sampling grids must be nonempty")
    tau = np.unique((t_grid[:, None] * xi_grid[None, :] ** 2).ravel())
    tau = tau[tau > 0]
    if tau.size < 3:
        raise ValueError("need at least three distinct positive |xi|^2 t samples")
    lognorm = weighted_log_norms(tau, params, block)
    lo, hi = 0.0, 1.0
    while _envelope_ok(tau, lognorm, hi):
        hi *= 2.0
        if hi > 1e6:
            break
    if not _envelope_ok(tau, lognorm, tol):
        return PointwiseFit(0.0, math.inf, False, float(tau.max()))
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _envelope_ok(tau, lognorm, mid):
            lo = mid
        else:
            hi = mid
    C = float(np.exp(np.max(lognorm + lo * tau)))
    C = max(C, 1.0)  # W(0) = Id
    return PointwiseFit(lo, C, True, float(tau.max()))


# --- Duhamel quadrature ---------------------------------------------------

def duhamel_convolve(xi: Sequence[np.ndarray], params: LinearParams, times, forcings, t: float):
    """Composite-trapezoid approximation of int_0^t G(t - s) F(s) ds.

    ``forcings[i]`` is a stacked (1+d) array ``[f, g_1, ..., g_d]`` sampled
    at ``times[i]``; nodes must cover [0, t].
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0 or len(forcings) == 0:
        raise ValueError("empty forcing history")
    if len(forcings) != times.size:
        raise ValueError("one forcing sample per node")
    if times.size == 1:
        if t != times[0]:
            raise ValueError("a single node only integrates over a zero-length interval")
        return np.zeros_like(np.asarray(forcings[0], dtype=complex))
    w = np.zeros(times.size)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    total = np.zeros_like(np.asarray(forcings[0], dtype=complex))
    for wi, si, Fi in zip(w, times, forcings):
        total += wi * Propagator(xi, params, t - si).apply(np.asarray(Fi, dtype=complex))
    return total

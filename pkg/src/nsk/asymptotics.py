"""Large-time profiles, moment bookkeeping, the profile comparator and decay fits.

Profile symbols are built from their own definitions (the kernels
``G_+-`` with ``exp(lambda_+- t) / sqrt(nu^2 - 4 kappa)``, or the heat
kernel at the critical damping) rather than from the Green-matrix code,
so the cross-identities against :mod:`nsk.linear` are real checks.

Radial factors on a grid are evaluated at the true lattice |xi| and
directional ones (Riesz pairs, ``i xi``) at the Nyquist-safe wavevector,
so every profile mode decays, including those on the Nyquist planes.

Grid profiles use DFT coefficients: a point mass ``alpha`` at the origin
has coefficients ``alpha / cell_volume``, so a symbol times a moment is
divided by the cell volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .besov import conjugate_index, fourier_lebesgue_norm, riesz_potential
from .errors import ConfigurationError
from .grid import Grid, SpectralField, State, moment
from .linear import CRITICAL, LinearParams

SCALAR_SYMBOLS = ("G1", "G2", "G3")
TENSOR_SYMBOLS = ("G2tilde", "G3tilde", "S")


# --- symbols ------------------------------------------------------------------

def _as_components(xi) -> tuple[np.ndarray, ...]:
    return tuple(np.asarray(k, dtype=float) for k in xi)


def _scalar_symbols(t: float, k2, params: LinearParams):
    """(G1, G2, G3) at |xi|^2 = k2."""
    nu, kappa = params.nu, params.kappa
    k2 = np.asarray(k2, dtype=float)
    if params.regime == CRITICAL:
        tau = t * k2
        heat = np.exp(-0.5 * nu * tau)
        return (1 + 0.5 * nu * tau) * heat, tau * heat, (1 - 0.5 * nu * tau) * heat
    s = np.sqrt(complex(nu * nu - 4 * kappa))
    lam_p = -0.5 * (nu + s) * k2
    lam_m = -0.5 * (nu - s) * k2
    Gp = np.exp(lam_p * t) / s
    Gm = np.exp(lam_m * t) / s
    G1 = 0.5 * (nu + s) * Gm - 0.5 * (nu - s) * Gp
    G2 = Gm - Gp
    G3 = 0.5 * (nu + s) * Gp - 0.5 * (nu - s) * Gm
    return G1.real, G2.real, G3.real


def _riesz_pair(xi: Sequence[np.ndarray]):
    """-xi_j xi_k / |xi|^2 (zero at xi = 0)."""
    k2 = sum(k**2 for k in xi)
    safe = np.where(k2 > 0, k2, 1.0)
    d = len(xi)
    out = np.empty((d, d) + np.broadcast(*xi).shape)
    for j in range(d):
        for k in range(d):
            out[j, k] = np.where(k2 > 0, -xi[j] * xi[k] / safe, 0.0)
    return out


def profile_symbol(name: str, t: float, xi, params: LinearParams):
    """Evaluate one profile symbol at time ``t`` and wavevector components ``xi``.

    Scalar names give an array shaped like the broadcast of ``xi``; the
    tensor names give a (d, d, ...) block.
    """
    if t < 0:
        raise ValueError("profile symbols need t >= 0")
    xi = _as_components(xi)
    k2 = sum(k**2 for k in xi)
    if name in SCALAR_SYMBOLS:
        return _scalar_symbols(t, k2, params)[SCALAR_SYMBOLS.index(name)]
    if name == "G2tilde":
        return _riesz_pair(xi) * _scalar_symbols(t, k2, params)[1]
    if name == "G3tilde":
        return _riesz_pair(xi) * _scalar_symbols(t, k2, params)[2]
    if name == "S":
        d = len(xi)
        proj = _riesz_pair(xi)
        for j in range(d):
            proj[j, j] += 1.0
        return proj * np.exp(-params.mu * k2 * t)
    raise ValueError(f"unknown profile symbol {name!r}")


# --- moments ------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticMoments:
    alpha: float
    beta: float
    pi_P: float
    M: np.ndarray
    tail_estimable: bool = True
    tail_pi: float = 0.0
    tail_M: np.ndarray | None = None

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("M must be a square matrix")
        if not np.allclose(M, M.T, rtol=0, atol=1e-14 * max(1.0, np.abs(M).max())):
            raise ValueError("M must be symmetric")
        vals = [self.alpha, self.beta, self.pi_P, *M.ravel()]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("moments must be finite")
        object.__setattr__(self, "M", 0.5 * (M + M.T))

    @classmethod
    def zero(cls, d: int) -> "AsymptoticMoments":
        return cls(0.0, 0.0, 0.0, np.zeros((d, d)))

    @classmethod
    def from_data(cls, initial: State, mtilde: SpectralField, nonlinear=None,
                  include_tail: bool = True) -> "AsymptoticMoments":
        d = initial.grid.d
        alpha = moment(initial.a)
        beta = moment(mtilde)
        if nonlinear is None:
            return cls(alpha, beta, 0.0, np.zeros((d, d)))
        pi, M = nonlinear.total(include_tail)
        return cls(alpha, beta, pi, M, nonlinear.tail_estimable, nonlinear.tail_pi, nonlinear.tail_M)

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "pi_P": self.pi_P,
            "M": self.M.tolist(), "tail_estimable": self.tail_estimable,
            "tail_pi": self.tail_pi,
            "tail_M": None if self.tail_M is None else np.asarray(self.tail_M).tolist(),
        }


# --- profiles on a grid ---------------------------------------------------

def density_profile(t: float, moments: AsymptoticMoments, grid: Grid, params: LinearParams) -> SpectralField:
    xi = grid.dxi
    G1, G2, _ = _scalar_symbols(t, grid.xi_sq, params)
    c = moments.alpha * G1 + (moments.beta - moments.pi_P) * G2
    if np.any(moments.M):
        R = _riesz_pair(xi)
        for j in range(grid.d):
            for k in range(grid.d):
                if moments.M[j, k]:
                    c = c + R[j, k] * G2 * moments.M[j, k]
    return SpectralField(grid, c / grid.cell_volume)


def momentum_profiles(t: float, moments: AsymptoticMoments, grid: Grid,
                      params: LinearParams) -> tuple[tuple[SpectralField, ...], tuple[SpectralField, ...]]:
    """(solenoidal, potential) momentum profiles."""
    d = grid.d
    xi = grid.dxi
    vol = grid.cell_volume
    _, G2, G3 = _scalar_symbols(t, grid.xi_sq, params)
    R = _riesz_pair(xi)
    scal = -params.kappa * G2 * moments.alpha + G3 * (moments.beta - moments.pi_P)
    for l in range(d):
        for k in range(d):
            if moments.M[l, k]:
                scal = scal + R[l, k] * G3 * moments.M[l, k]
    pot = tuple(SpectralField(grid, 1j * xi[j] * scal / vol) for j in range(d))
    S = _riesz_pair(xi) * np.exp(-params.mu * grid.xi_sq * t)
    for j in range(d):
        S[j, j] += np.exp(-params.mu * grid.xi_sq * t)
    sol = []
    for j in range(d):
        c = np.zeros(grid.shape, dtype=complex)
        for l in range(d):
            for k in range(d):
                if moments.M[l, k]:
                    c -= 1j * xi[k] * S[j, l] * moments.M[l, k]
        sol.append(SpectralField(grid, c / vol))
    return tuple(sol), pot


# --- comparator -----------------------------------------------------------

def check_comparator_indices(s: float, p: float, d: int):
    if not (1 < p <= 2):
        raise ConfigurationError(f"p={p} outside the theorem range 1 < p <= 2")
    bound = -d / conjugate_index(p)
    if not s > bound:
        raise ConfigurationError(f"s={s} must exceed -d/p' = {bound:.6g} (theorem hypothesis)")


def weighted_exponent(d: int, p: float, s: float) -> float:
    return 0.5 * d * (1 - 1 / p) + 0.5 * s


@dataclass
class ErrorSeries:
    times: np.ndarray
    values: np.ndarray
    s: float
    p: float
    decrease: float = math.nan   # last / first over the final decade
    passed: bool = False
    monotone: bool = False

    def to_json(self) -> dict:
        return {
            "s": self.s, "p": self.p, "times": self.times.tolist(), "values": self.values.tolist(),
            "final_decade_ratio": self.decrease, "pass": self.passed, "monotone": self.monotone,
        }


def final_decade_verdict(times: np.ndarray, values: np.ndarray, required: float = 0.3,
                         uptick: float = 0.05):
    """(ratio, passed, monotone) over [T/10, T]."""
    if times.size < 2:
        return math.nan, False, False
    T = times[-1]
    sel = times >= T / 10 * (1 - 1e-12)
    v = values[sel]
    if v.size < 2 or v[0] == 0:
        return math.nan, bool(v.size and v[-1] == 0), True
    ratio = float(v[-1] / v[0])
    monotone = bool(np.all(v[1:] <= v[:-1] * (1 + uptick)))
    return ratio, ratio <= 1 - required, monotone


def asymptotic_error_series(states: Sequence[State], moments: AsymptoticMoments, s: float, p: float,
                            params: LinearParams, t0: float = 0.0) -> ErrorSeries:
    if not states:
        raise ValueError("no states to compare")
    grid = states[0].grid
    check_comparator_indices(s, p, grid.d)
    ts, vals = [], []
    for st in states:
        t = st.t - t0
        if t <= 0:
            continue
        prof = density_profile(t, moments, grid, params)
        diff = riesz_potential(st.a - prof, s)
        vals.append(t ** weighted_exponent(grid.d, p, s) * fourier_lebesgue_norm(diff, p))
        ts.append(t)
    times, values = np.array(ts), np.array(vals)
    ratio, ok, mono = final_decade_verdict(times, values)
    return ErrorSeries(times, values, s, p, ratio, ok, mono)


def asymptotic_error(trajectory, moments: AsymptoticMoments, s: float, p: float,
                     params: LinearParams | None = None) -> ErrorSeries:
    """Weighted distance between the density and its profile along a trajectory."""
    params = params or trajectory.params
    snaps = trajectory.snapshots
    return asymptotic_error_series(snaps, moments, s, p, params, t0=snaps[0].t if snaps else 0.0)


# --- decay regression -----------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual: float
    n_points: int

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "n_points": self.n_points}


def decay_fit(times, norms, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares slope of log(norm) against log(t) inside ``window``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.shape != y.shape:
        raise ValueError("times and norms must have equal length")
    if window is not None:
        lo, hi = window
        sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
        t, y = t[sel], y[sel]
    if t.size < 8:
        raise ValueError(f"decay fit needs at least 8 points in the window, got {t.size}")
    if np.any(t <= 0):
        raise ValueError("times in the window must be positive")
    if t.max() < 10 * t.min() * (1 - 1e-9):
        raise ValueError("window must span at least one decade")
    if np.any(y <= 0):
        raise ValueError("non-positive norm values in the fit window")
    X, Y = np.log(t), np.log(y)
    (slope, intercept), res, *_ = np.polyfit(X, Y, 1, full=True)
    rms = float(np.sqrt(np.mean((Y - (slope * X + intercept)) ** 2)))
    return DecayFit(float(slope), float(intercept), rms, int(t.size))


def density_decay_exponent(d: int, p: float, s1: float = 0.0) -> float:
    return -0.5 * d * (1 - 1 / p) - 0.5 * s1


def momentum_decay_exponent(d: int, p: float, s2: float = 0.0) -> float:
    return -0.5 * d * (1 - 1 / p) - 0.5 * (s2 + 1)

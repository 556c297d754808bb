"""Littlewood-Paley blocks and Fourier-side function-space norms.

The radial cutoff ``chi`` equals 1 on [0, 1.1], 0 on [1.9, inf) and is a
quintic smoothstep in between.  The dyadic bump is
``phi(xi) = chi(|xi|/2) - chi(|xi|)`` with support in 1.1 <= |xi| <= 3.8,
so block ``j`` lives on 1.1*2^j <= |xi| <= 3.8*2^j and every nonzero
wavevector meets at most two blocks.  Blocks telescope, so the sum over
the active range is exactly one on every nonzero lattice mode.

All norms act on the continuous-transform values ``SpectralField.hat()``
and discretise the xi-integral with the dual-lattice cell volume.
Homogeneous norms never see the zero mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GevreyOverflowError
from .grid import Grid, SpectralField, fftn, ifftn

CHI_INNER = 1.1
CHI_OUTER = 1.9
GEVREY_EXPONENT_LIMIT = 700.0


def chi(r):
    r = np.asarray(r, dtype=float)
    x = np.clip((r - CHI_INNER) / (CHI_OUTER - CHI_INNER), 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def phi_hat(r):
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


def conjugate_index(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _check_index(name, v):
    if not (v >= 1):
        raise ConfigurationError(f"{name} must lie in [1, inf], got {v}")


@dataclass(frozen=True)
class NormSpec:
    s: float
    p: float = 2.0
    sigma: float = 1.0
    r: float | None = None

    def __post_init__(self):
        _check_index("p", self.p)
        _check_index("sigma", self.sigma)
        if self.r is not None:
            _check_index("r", self.r)

    @property
    def p_conj(self) -> float:
        return conjugate_index(self.p)


class DyadicPartition:
    """Active block range of a grid plus cached block multipliers."""

    def __init__(self, grid: Grid, check: bool = True):
        self.grid = grid
        kmin, kmax = grid.xi_min, grid.xi_max
        # block j is nonzero on (1.1*2^j, 3.8*2^j)
        self.j_min = math.floor(math.log2(kmin / (2 * CHI_OUTER))) + 1
        self.j_max = math.ceil(math.log2(kmax / CHI_INNER)) - 1
        self._cache: dict[int, np.ndarray] = {}
        if check:
            err = self.unity_error()
            if err > 1e-12:
                raise AssertionError(f"partition of unity fails on this grid (error {err:.2e})")

    @property
    def blocks(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def multiplier(self, j: int) -> np.ndarray:
        if j not in self._cache:
            if self.j_min <= j <= self.j_max:
                self._cache[j] = phi_hat(self.grid.xi_abs * 2.0 ** (-j))
            else:
                self._cache[j] = np.zeros(self.grid.shape)
        return self._cache[j]

    def low_pass(self, j: int) -> np.ndarray:
        """Multiplier of S_j = sum_{k <= j-1} Delta_k (zero mode excluded)."""
        out = np.zeros(self.grid.shape)
        for k in self.blocks:
            if k <= j - 1:
                out = out + self.multiplier(k)
        return out

    def unity_error(self) -> float:
        total = sum(self.multiplier(j) for j in self.blocks)
        nz = self.grid.xi_sq > 0
        return float(np.abs(total[nz] - 1.0).max())

    def max_overlap(self) -> int:
        count = sum((self.multiplier(j) > 0).astype(int) for j in self.blocks)
        return int(count.max())


@lru_cache(maxsize=16)
def partition(grid: Grid) -> DyadicPartition:
    return DyadicPartition(grid)


def dyadic_block(f: SpectralField, j: int) -> SpectralField:
    """Delta_j f; blocks outside the active range are the zero field."""
    return f.multiply(partition(f.grid).multiplier(j))


def _lq(values: np.ndarray, q: float, weight: float) -> float:
    v = np.abs(values)
    if v.size == 0:
        return 0.0
    if math.isinf(q):
        return float(v.max())
    if q == 1:
        return float(v.sum() * weight)
    peak = v.max()
    if peak == 0:
        return 0.0
    return float(peak * (np.sum((v / peak) ** q) * weight) ** (1.0 / q))


def _ell(seq: Sequence[float], sigma: float) -> float:
    a = np.abs(np.asarray(seq, dtype=float))
    if a.size == 0:
        return 0.0
    if math.isinf(sigma):
        return float(a.max())
    peak = a.max()
    if peak == 0:
        return 0.0
    return float(peak * np.sum((a / peak) ** sigma) ** (1.0 / sigma))


def lebesgue_hat(values: np.ndarray, p: float, grid: Grid) -> float:
    """||f||_{L^p hat} from continuous-transform values on the lattice."""
    return _lq(values, conjugate_index(p), grid.dxi_volume)


def fourier_lebesgue_norm(f: SpectralField, p: float) -> float:
    _check_index("p", p)
    return lebesgue_hat(f.hat(), p, f.grid)


def block_norms(f: SpectralField, p: float) -> dict[int, float]:
    part = partition(f.grid)
    h = np.abs(f.hat())
    return {j: lebesgue_hat(h * part.multiplier(j), p, f.grid) for j in part.blocks}


def besov_norm(f: SpectralField, spec: NormSpec) -> float:
    bn = block_norms(f, spec.p)
    return _ell([2.0 ** (spec.s * j) * v for j, v in bn.items()], spec.sigma)


def besov_norm_multi(fields: Sequence[SpectralField], spec: NormSpec) -> float:
    """Euclidean combination of component norms, as used for vector fields."""
    return float(math.sqrt(sum(besov_norm(f, spec) ** 2 for f in fields)))


def fourier_sobolev_norm(f: SpectralField, s: float, p: float) -> float:
    _check_index("p", p)
    h = f.hat()
    if s < 0:
        dc = abs(f.coeffs.flat[0])
        if dc > 1e-14 * max(f.max_abs(), 1e-300):
            raise ValueError("homogeneous norm undefined at xi=0 (nonzero mean with s<0)")
        k = f.grid.xi_abs.copy()
        k.flat[0] = 1.0
        w = k**s
        w.flat[0] = 0.0
    elif s == 0:
        w = 1.0
    else:
        w = f.grid.xi_abs**s
    return lebesgue_hat(w * h, p, f.grid)


def riesz_potential(f: SpectralField, s: float) -> SpectralField:
    """|nabla|^s f; the zero mode is dropped for s != 0."""
    if s == 0:
        return f
    k = f.grid.xi_abs.copy()
    k.flat[0] = 1.0
    w = k**s
    w.flat[0] = 0.0
    return f.multiply(w)


# --- time-dependent norms -------------------------------------------------

def _time_norm(times: np.ndarray, values: np.ndarray, r: float) -> float:
    """L^r(I) norm of samples by the trapezoid rule (max for r = inf)."""
    if math.isinf(r):
        return float(np.max(np.abs(values)))
    if times.size < 2:
        raise ValueError("a finite time index needs at least two samples")
    return float(np.trapezoid(np.abs(values) ** r, times) ** (1.0 / r))


def chemin_lerner_norm(times: Sequence[float], series: Sequence[SpectralField], r: float,
                       spec: NormSpec) -> float:
    """Block-first space-time norm: time norm inside, l^sigma over blocks outside."""
    _check_index("r", r)
    times = np.asarray(times, dtype=float)
    if len(series) != times.size:
        raise ValueError("one field per time sample required")
    if not math.isinf(r) and times.size < 2:
        raise ValueError("a finite time index needs at least two samples")
    per_time = [block_norms(f, spec.p) for f in series]
    blocks = list(per_time[0])
    vals = []
    for j in blocks:
        col = np.array([bn[j] for bn in per_time])
        vals.append(2.0 ** (spec.s * j) * _time_norm(times, col, r))
    return _ell(vals, spec.sigma)


def bochner_norm(times: Sequence[float], series: Sequence[SpectralField], r: float,
                 spec: NormSpec) -> float:
    """Time norm of the Besov norm (the swapped order)."""
    times = np.asarray(times, dtype=float)
    vals = np.array([besov_norm(f, spec) for f in series])
    return _time_norm(times, vals, r)


# --- analytic weights and the bilinear operator B_t -----------------------

def gevrey_radius(t: float, c0: float) -> float:
    if t < 0:
        raise ValueError("time must be non-negative")
    if not c0 > 0:
        raise ConfigurationError("c0 must be positive")
    return math.sqrt(c0 * t)


def check_gevrey_overflow(grid: Grid, t: float, c0: float):
    rad = gevrey_radius(t, c0)
    kmax = grid.xi_max
    if rad * kmax > GEVREY_EXPONENT_LIMIT:
        t_max = (GEVREY_EXPONENT_LIMIT / kmax) ** 2 / c0
        raise GevreyOverflowError(
            f"analytic weight exp({rad * kmax:.1f}) overflows; max admissible t is {t_max:.6g}",
            t_max,
        )
    return rad


def gevrey_weight(f: SpectralField, t: float, c0: float, inverse: bool = False) -> SpectralField:
    """exp(+-sqrt(c0 t)|xi|) applied to the coefficients."""
    rad = check_gevrey_overflow(f.grid, t, c0)
    if rad == 0:
        return f
    sign = -1.0 if inverse else 1.0
    return f.multiply(np.exp(sign * rad * f.grid.xi_abs))


def bilinear_Bt(f: SpectralField, g: SpectralField, t: float, c0: float,
                dealiased: bool = True) -> SpectralField:
    """exp(r|D|)(exp(-r|D|)f * exp(-r|D|)g) with r = sqrt(c0 t)."""
    check_gevrey_overflow(f.grid, t, c0)
    fw = gevrey_weight(f, t, c0, inverse=True)
    gw = gevrey_weight(g, t, c0, inverse=True)
    prod = fftn(ifftn(fw.coeffs) * ifftn(gw.coeffs))
    if dealiased:
        prod = np.where(f.grid.dealias_mask, prod, 0.0)
    return gevrey_weight(SpectralField(f.grid, prod), t, c0)


# --- Bony paraproduct -----------------------------------------------------

def bony_split(f: SpectralField, g: SpectralField):
    """Paraproduct split fg = T_f g + T_g f + R(f, g).

    ``T_f g = sum_k S_{k-1}f g_k``, ``T_g f = sum_k f_k S_{k-1}g`` and
    ``R = sum_k f_k g~_k``.  The zero modes are carried as an extra lowest
    block: they enter every low-pass ``S_j`` and their mutual product goes
    to ``R``, so the three parts add up to the full product.  Products are
    formed in physical space without truncation.
    """
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    grid = f.grid
    part = partition(grid)
    blocks = list(part.blocks)
    fm, gm = np.zeros(grid.shape, complex), np.zeros(grid.shape, complex)
    fm.flat[0], gm.flat[0] = f.coeffs.flat[0], g.coeffs.flat[0]
    fk = {j: ifftn(f.coeffs * part.multiplier(j)) for j in blocks}
    gk = {j: ifftn(g.coeffs * part.multiplier(j)) for j in blocks}
    f_mean, g_mean = ifftn(fm), ifftn(gm)

    t_fg = np.zeros(grid.shape, complex)
    t_gf = np.zeros(grid.shape, complex)
    rem = f_mean * g_mean
    s_f, s_g = f_mean.copy(), g_mean.copy()  # S_{k-1} for the current k
    for i, k in enumerate(blocks):
        if i >= 2:
            s_f = s_f + fk[blocks[i - 2]]
            s_g = s_g + gk[blocks[i - 2]]
        t_fg += s_f * gk[k]
        t_gf += fk[k] * s_g
        g_tilde = sum(gk[l] for l in (k - 1, k, k + 1) if l in gk)
        rem += fk[k] * g_tilde

    to = lambda x: SpectralField(grid, fftn(x))
    return to(t_fg), to(t_gf), to(rem)


# --- dyadic heat sums --------------------------------------------------------

def dyadic_heat_sum(t: float, sigma: float, delta0: float, j_range=range(-60, 61)) -> float:
    """sum_j (t^{1/2} 2^j)^sigma exp(-t delta0 4^j)."""
    if t == 0:
        return 0.0
    total = 0.0
    for j in j_range:
        x = math.sqrt(t) * 2.0**j
        total += x**sigma * math.exp(-delta0 * x * x)
    return total

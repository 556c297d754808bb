"""Periodic grids, spectral fields and Fourier multipliers.

Fields store plain (unnormalised) DFT coefficients in the standard FFT
ordering, so ``fftn`` / ``ifftn`` are used without any scaling.  The
continuous transform with the symmetric ``(2*pi)**(-d/2)`` convention is
recovered by :meth:`SpectralField.hat`, which multiplies by the single
per-grid constant ``Grid.hat_factor = cell_volume / (2*pi)**(d/2)``.

Wavevectors come in two flavours:

* ``Grid.xi`` -- the physical lattice, with the Nyquist index mapped to
  ``+n/2``.  Radial multipliers (norm weights, dyadic blocks, analytic
  weights) use ``|xi|``.
* ``Grid.dxi`` -- the same lattice with the Nyquist component zeroed.
  Every directional symbol (``i xi``, ``xi xi^T / |xi|^2``) and the linear
  propagator use it, otherwise real fields would stop being real on the
  Nyquist planes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError

FFT_WORKERS = -1


def fftn(x: np.ndarray) -> np.ndarray:
    return sfft.fftn(x, workers=FFT_WORKERS)


def ifftn(x: np.ndarray) -> np.ndarray:
    return sfft.ifftn(x, workers=FFT_WORKERS)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice with per-axis mode counts ``n`` and periods ``L``."""

    n: tuple[int, ...]
    L: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        L = tuple(float(v) for v in np.atleast_1d(self.L))
        if len(L) == 1 and len(n) > 1:
            L = L * len(n)
        if len(n) not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {len(n)}")
        if len(L) != len(n):
            raise ConfigurationError("n and L must have the same length")
        for v in n:
            if v % 2 or v < 8:
                raise ConfigurationError(f"mode counts must be even and >= 8, got {v}")
        for v in L:
            if not v > 0 or not np.isfinite(v):
                raise ConfigurationError(f"periods must be positive, got {v}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", L)

    @classmethod
    def cube(cls, d: int, n: int, L: float = 2 * np.pi) -> "Grid":
        return cls((n,) * d, (L,) * d)

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([L / n for L, n in zip(self.L, self.n)]))

    @property
    def dxi_volume(self) -> float:
        """Volume of one cell of the dual lattice, prod(2*pi/L)."""
        return float(np.prod([2 * np.pi / L for L in self.L]))

    @property
    def hat_factor(self) -> float:
        """DFT coefficient -> continuous (2*pi)^(-d/2) transform."""
        return self.cell_volume / (2 * np.pi) ** (self.d / 2)

    @property
    def outside_theorem_hypotheses(self) -> bool:
        return self.d < 3

    def axis_wavenumbers(self, axis: int, derivative: bool = False) -> np.ndarray:
        n, L = self.n[axis], self.L[axis]
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = n // 2 if not derivative else 0.0
        return k * (2 * np.pi / L)

    def axis_indices(self, axis: int) -> np.ndarray:
        n = self.n[axis]
        k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        k[n // 2] = n // 2
        return k

    def _broadcast(self, arrays: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
        out = []
        for axis, a in enumerate(arrays):
            shape = [1] * self.d
            shape[axis] = a.size
            out.append(a.reshape(shape))
        return tuple(out)

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return self._broadcast([self.axis_wavenumbers(i) for i in range(self.d)])

    @cached_property
    def dxi(self) -> tuple[np.ndarray, ...]:
        return self._broadcast([self.axis_wavenumbers(i, True) for i in range(self.d)])

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return sum(k**2 for k in self.xi) * np.ones(self.shape)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def dxi_sq(self) -> np.ndarray:
        return sum(k**2 for k in self.dxi) * np.ones(self.shape)

    @property
    def xi_max(self) -> float:
        return float(self.xi_abs.max())

    @property
    def xi_min(self) -> float:
        """Smallest nonzero lattice wavenumber."""
        return float(min(2 * np.pi / L for L in self.L))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes whose every axis index satisfies |k| <= n/3."""
        keep = np.ones(self.shape, dtype=bool)
        for axis, idx in enumerate(self._broadcast([self.axis_indices(i) for i in range(self.d)])):
            keep = keep & (np.abs(idx) <= self.n[axis] / 3)
        return keep

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Physical sample positions, wrapped to [-L/2, L/2) with index 0 at the origin."""
        axes = []
        for n, L in zip(self.n, self.L):
            j = np.arange(n)
            x = j * (L / n)
            x[j >= n // 2] -= L
            axes.append(x)
        return self._broadcast(axes)

    def wavevector(self, flat_index: int) -> np.ndarray:
        if not 0 <= flat_index < self.size:
            raise IndexError(f"flat index {flat_index} out of range [0, {self.size})")
        idx = np.unravel_index(int(flat_index), self.shape)
        return np.array([self.axis_wavenumbers(a)[i] for a, i in enumerate(idx)])

    def to_json(self) -> dict:
        return {"d": self.d, "n": list(self.n), "L": list(self.L),
                "outside_theorem_hypotheses": self.outside_theorem_hypotheses}


def wavevector(grid: Grid, flat_index: int) -> np.ndarray:
    return grid.wavevector(flat_index)


class SpectralField:
    """DFT coefficients of one scalar field on a grid.  Treated as immutable."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: Grid, coeffs):
        arr = np.array(coeffs, dtype=np.complex128)
        if arr.shape != grid.shape:
            if arr.size != grid.size:
                raise ValueError(
                    f"coefficient count {arr.size} does not match grid mode count {grid.size}"
                )
            arr = arr.reshape(grid.shape)
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, grid: Grid, samples) -> "SpectralField":
        return transform_forward(grid, samples)

    def physical(self, real: bool = True) -> np.ndarray:
        return transform_inverse(self, real=real)

    def hat(self) -> np.ndarray:
        """Approximation of the continuous transform at the lattice points."""
        return self.coeffs * self.grid.hat_factor

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            raise TypeError("use product() for field products")
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.coeffs / scalar)

    def multiply(self, symbol) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * symbol)

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0

    def hermitian_error(self) -> float:
        """max |f(-xi) - conj f(xi)| relative to max |f|."""
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        return float(np.abs(reflect(self.coeffs) - np.conj(self.coeffs)).max() / scale)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermitian_error() <= tol

    def __repr__(self):
        return f"SpectralField(grid={self.grid}, max|c|={self.max_abs():.3e})"


def reflect(c: np.ndarray) -> np.ndarray:
    """c[-k] in FFT ordering."""
    axes = tuple(range(c.ndim))
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


@dataclass(frozen=True)
class State:
    """Density perturbation ``a`` and momentum ``m`` at time ``t``."""

    a: SpectralField
    m: tuple[SpectralField, ...]
    t: float = 0.0

    def __post_init__(self):
        m = tuple(self.m)
        object.__setattr__(self, "m", m)
        grid = self.a.grid
        if len(m) != grid.d:
            raise ValueError(f"momentum needs {grid.d} components, got {len(m)}")
        if any(mj.grid != grid for mj in m):
            raise ValueError("all state fields must share one grid")

    @property
    def grid(self) -> Grid:
        return self.a.grid

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "State":
        return cls(SpectralField.zeros(grid), tuple(SpectralField.zeros(grid) for _ in range(grid.d)), t)

    @classmethod
    def from_arrays(cls, grid: Grid, a: np.ndarray, m: Sequence[np.ndarray], t: float = 0.0) -> "State":
        return cls(SpectralField(grid, a), tuple(SpectralField(grid, mj) for mj in m), t)

    def fields(self) -> tuple[SpectralField, ...]:
        return (self.a,) + self.m

    def stacked(self) -> np.ndarray:
        return np.stack([f.coeffs for f in self.fields()])

    def with_time(self, t: float) -> "State":
        return State(self.a, self.m, t)

    def hermitian_error(self) -> float:
        return max(f.hermitian_error() for f in self.fields())


def transform_forward(grid: Grid, samples) -> SpectralField:
    x = np.asarray(samples)
    if x.size != grid.size:
        raise ValueError(f"sample count {x.size} does not match mode count {grid.size}")
    return SpectralField(grid, fftn(x.reshape(grid.shape)))


def transform_inverse(f: SpectralField, real: bool = True) -> np.ndarray:
    x = ifftn(f.coeffs)
    return x.real if real else x


def parseval_constant(grid: Grid) -> float:
    """sum|x|^2 * cell_volume == parseval_constant * sum|c|^2."""
    return grid.cell_volume / grid.size


def gradient(f: SpectralField) -> tuple[SpectralField, ...]:
    return tuple(SpectralField(f.grid, 1j * k * f.coeffs) for k in f.grid.dxi)


def divergence(v: Sequence[SpectralField]) -> SpectralField:
    grid = v[0].grid
    if len(v) != grid.d:
        raise ValueError(f"divergence needs {grid.d} components, got {len(v)}")
    out = np.zeros(grid.shape, dtype=np.complex128)
    for k, vj in zip(grid.dxi, v):
        out += 1j * k * vj.coeffs
    return SpectralField(grid, out)


def laplacian(f: SpectralField) -> SpectralField:
    return divergence(gradient(f))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def product(f: SpectralField, g: SpectralField, dealiased: bool = True) -> SpectralField:
    """Pointwise product formed in physical space."""
    p = transform_forward(f.grid, f.physical(real=False) * g.physical(real=False))
    return dealias(p) if dealiased else p


def _longitudinal_projector(grid: Grid):
    k2 = grid.dxi_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    return inv


def helmholtz_project(v: Sequence[SpectralField]) -> tuple[tuple[SpectralField, ...], tuple[SpectralField, ...]]:
    """Split ``v`` into solenoidal and potential parts.

    The zero mode has no longitudinal direction and stays in the solenoidal
    part; in one dimension the solenoidal part is zero by convention.
    """
    grid = v[0].grid
    if grid.d == 1:
        return (SpectralField.zeros(grid),), (v[0],)
    inv = _longitudinal_projector(grid)
    xdotv = sum(k * vj.coeffs for k, vj in zip(grid.dxi, v))
    pot = tuple(SpectralField(grid, k * xdotv * inv) for k in grid.dxi)
    sol = tuple(vj - pj for vj, pj in zip(v, pot))
    return sol, pot


def check_viscosities(mu: float, lam: float):
    if not mu > 0:
        raise ConfigurationError(f"shear viscosity must be positive, got mu={mu}")
    if not lam + 2 * mu > 0:
        raise ConfigurationError(f"lambda + 2 mu must be positive, got {lam + 2 * mu}")


def lame_apply(v: Sequence[SpectralField], mu: float, lam: float) -> tuple[SpectralField, ...]:
    """mu*Lap(v) + (lam + mu)*grad div v, applied mode by mode."""
    check_viscosities(mu, lam)
    grid = v[0].grid
    k2 = grid.dxi_sq
    xdotv = sum(k * vj.coeffs for k, vj in zip(grid.dxi, v))
    return tuple(
        SpectralField(grid, -mu * k2 * vj.coeffs - (lam + mu) * k * xdotv)
        for k, vj in zip(grid.dxi, v)
    )


def moment(f: SpectralField) -> float:
    """Integral of the field over one period cell."""
    return float(f.coeffs.flat[0].real * f.grid.cell_volume)


def random_field(grid: Grid, rng: np.random.Generator, band: tuple[float, float] | None = None,
                 amplitude: float = 1.0, dealiased: bool = True) -> SpectralField:
    """Random real-valued field, optionally restricted to a shell of |xi|."""
    c = fftn(rng.standard_normal(grid.shape))
    keep = np.ones(grid.shape, dtype=bool)
    if dealiased:
        keep &= grid.dealias_mask
    if band is not None:
        keep &= (grid.xi_abs >= band[0]) & (grid.xi_abs <= band[1])
    c = np.where(keep, c, 0.0)
    # removes the odd imaginary residue left by masking a Hermitian array
    c = 0.5 * (c + np.conj(reflect(c)))
    peak = np.abs(c).max()
    if peak > 0:
        c *= amplitude / peak
    return SpectralField(grid, c)


# --- snapshot files -------------------------------------------------------

SNAPSHOT_MAGIC = b"NSKFLD01"


def save_snapshot(path, grid: Grid, t: float, components: dict[str, SpectralField]):
    """Write the binary snapshot format: magic, u64 header length, JSON, data."""
    names = list(components)
    header = json.dumps(
        {"d": grid.d, "n": list(grid.n), "L": list(grid.L), "t": float(t), "components": names},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for name in names:
            c = components[name].coeffs
            inter = np.empty(c.size * 2, dtype="<f8")
            inter[0::2] = c.real.ravel()
            inter[1::2] = c.imag.ravel()
            fh.write(inter.tobytes())


def load_snapshot(path) -> tuple[Grid, float, dict[str, SpectralField]]:
    raw = Path(path).read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    grid = Grid(tuple(header["n"]), tuple(header["L"]))
    if header["d"] != grid.d:
        raise ValueError(f"{path}: header dimension does not match n[]")
    data = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    per = 2 * grid.size
    names = header["components"]
    if data.size != per * len(names):
        raise ValueError(f"{path}: truncated payload")
    out = {}
    for i, name in enumerate(names):
        chunk = data[i * per:(i + 1) * per]
        out[name] = SpectralField(grid, (chunk[0::2] + 1j * chunk[1::2]).reshape(grid.shape))
    return grid, float(header["t"]), out


def state_components(state: State) -> dict[str, SpectralField]:
    comps = {"a": state.a}
    for j, mj in enumerate(state.m):
        comps[f"m{j + 1}"] = mj
    return comps


def state_from_components(grid: Grid, t: float, comps: dict[str, SpectralField]) -> State:
    return State(comps["a"], tuple(comps[f"m{j + 1}"] for j in range(grid.d)), t)


# --- array layouts used by the time stepper -------------------------------

class FullLayout:
    """Full complex spectrum in FFT ordering (the SpectralField layout)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.shape = grid.shape
        self.dxi = grid.dxi
        self.dxi_sq = grid.dxi_sq
        self.mask = grid.dealias_mask

    def forward(self, x: np.ndarray) -> np.ndarray:
        return fftn(x)

    def inverse(self, c: np.ndarray) -> np.ndarray:
        return ifftn(c).real

    def to_full(self, c: np.ndarray) -> np.ndarray:
        return np.array(c, dtype=np.complex128)

    def from_full(self, c: np.ndarray) -> np.ndarray:
        return np.array(c, dtype=np.complex128)


class HalfLayout:
    """Real-to-complex layout: last axis keeps indices 0..n/2 only."""

    def __init__(self, grid: Grid):
        self.grid = grid
        nlast = grid.n[-1]
        self.shape = grid.shape[:-1] + (nlast // 2 + 1,)
        sl = (slice(None),) * (grid.d - 1) + (slice(0, nlast // 2 + 1),)
        self._sl = sl
        self.dxi = tuple(np.ascontiguousarray(k[sl]) if k.shape[-1] > 1 else k for k in grid.dxi)
        self.dxi_sq = np.ascontiguousarray(grid.dxi_sq[sl])
        self.mask = np.ascontiguousarray(grid.dealias_mask[sl])

    def forward(self, x: np.ndarray) -> np.ndarray:
        return sfft.rfftn(x, workers=FFT_WORKERS)

    def inverse(self, c: np.ndarray) -> np.ndarray:
        return sfft.irfftn(c, s=self.grid.shape, workers=FFT_WORKERS)

    def to_full(self, c: np.ndarray) -> np.ndarray:
        return fftn(self.inverse(c))

    def from_full(self, c: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.asarray(c, dtype=np.complex128)[self._sl])

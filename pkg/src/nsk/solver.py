"""Exponential time stepping of the full nonlinear system.

The linear part is propagated exactly by the Green matrix; the forcing
enters through the per-mode trapezoid weight ``(dt/2)(G(dt) + Id)``:

    ETD1:     U+ = G U + (dt/2) (G F(U) + F(U))
    ETD-RK2:  U~ = ETD1 predictor
              U+ = G U + (dt/2) (G F(U) + F(U~))

with ``F = (0, N)``.  The hot loop works on real-to-complex coefficient
arrays; snapshots are converted back to full ``State`` objects.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .besov import NormSpec, besov_norm, besov_norm_multi, check_gevrey_overflow
from .errors import ConfigurationError, GuardViolation
from .grid import FullLayout, Grid, HalfLayout, SpectralField, State, gradient
from .linear import LinearParams, Propagator, pointwise_bound_fit
from .physics import DEFAULT_VACUUM_GUARD, NonlinearOperator, PressureModel

log = logging.getLogger(__name__)

SCHEMES = ("ETD1", "ETD-RK2")


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_final: float
    scheme: str = "ETD-RK2"
    n_snapshots: int = 16
    snapshot_times: tuple[float, ...] | None = None
    dealias: str = "2/3"
    vacuum_guard: float = DEFAULT_VACUUM_GUARD
    wrap_tolerance: float = 1e-6
    linear_only: bool = False
    track_moments: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError("time.dt: must be positive")
        if self.t_final < 0 or not math.isfinite(self.t_final):
            raise ConfigurationError("time.t_final: must be non-negative")
        if 0 < self.t_final < self.dt:
            raise ConfigurationError("time.t_final: must be at least dt")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"time.scheme: expected one of {SCHEMES}, got {self.scheme!r}")
        if self.dealias not in ("2/3", "none"):
            raise ConfigurationError("time.dealias: expected '2/3' or 'none'")
        if not self.vacuum_guard > 0:
            raise ConfigurationError("guards.vacuum: must be positive")
        if not self.wrap_tolerance > 0:
            raise ConfigurationError("guards.wrap: must be positive")
        if self.n_snapshots < 1:
            raise ConfigurationError("time.n_snapshots: must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def to_json(self) -> dict:
        return {
            "dt": self.dt, "t_final": self.t_final, "scheme": self.scheme,
            "n_snapshots": self.n_snapshots,
            "snapshot_times": None if self.snapshot_times is None else list(self.snapshot_times),
            "dealias": self.dealias, "vacuum_guard": self.vacuum_guard,
            "wrap_tolerance": self.wrap_tolerance, "linear_only": self.linear_only,
        }


def geometric_steps(n_steps: int, count: int) -> list[int]:
    """Step indices 0, ..., n_steps spaced geometrically (dense early)."""
    if n_steps <= 0:
        return [0]
    k = np.unique(np.round(np.geomspace(1, n_steps, max(count, 2))).astype(int))
    return sorted({0, *k.tolist(), n_steps})


# --- initial data -----------------------------------------------------------

@dataclass(frozen=True)
class InitialDataSpec:
    amplitude: float = 1e-3
    family: str = "gaussian"  # or "random"
    width: float = 1.0
    mtilde_scale: float = 1.0
    seed: int = 0
    band: tuple[float, float] | None = None


def gaussian_coeffs(grid: Grid, amplitude: float, width: float) -> np.ndarray:
    """DFT coefficients of amplitude*exp(-|x|^2/(2 w^2)), cut by the 2/3 rule."""
    d = grid.d
    c = amplitude * (2 * np.pi) ** (d / 2) * width**d * np.exp(-0.5 * width**2 * grid.xi_sq)
    c = c / grid.cell_volume
    return np.where(grid.dealias_mask, c, 0.0).astype(complex)


def build_initial_data(grid: Grid, spec: InitialDataSpec) -> tuple[State, SpectralField]:
    """Return (a0, m0 = grad mtilde0) and the potential mtilde0."""
    if spec.family == "gaussian":
        a0 = SpectralField(grid, gaussian_coeffs(grid, spec.amplitude, spec.width))
        mt = SpectralField(grid, gaussian_coeffs(grid, spec.amplitude * spec.mtilde_scale, spec.width))
    elif spec.family == "random":
        from .grid import random_field
        rng = np.random.default_rng(spec.seed)
        a0 = random_field(grid, rng, band=spec.band, amplitude=spec.amplitude)
        mt = random_field(grid, rng, band=spec.band, amplitude=spec.amplitude * spec.mtilde_scale)
    else:
        raise ConfigurationError(f"initial.family: unknown family {spec.family!r}")
    return State(a0, gradient(mt), 0.0), mt


def initial_data_norms(state: State, p: float = 2.0, sigma: float = 1.0) -> dict:
    """Norms of the data in the global existence class."""
    d = state.grid.d
    a, m = state.a, state.m
    out = {
        "a_low": besov_norm(a, NormSpec(-2 + d / p, p, sigma)),
        "a_high": besov_norm(a, NormSpec(d / p, p, 1)),
        "m_low": besov_norm_multi(m, NormSpec(-3 + d / p, p, sigma)),
        "m_high": besov_norm_multi(m, NormSpec(-1 + d / p, p, 1)),
    }
    out["total"] = out["a_low"] + out["a_high"] + out["m_low"] + out["m_high"]
    return out


# --- stepping -----------------------------------------------------------------

class Stepper:
    """Owns the layout, the fixed-step propagator and the forcing evaluator."""

    def __init__(self, grid: Grid, config: StepperConfig, params: LinearParams,
                 pressure: PressureModel, half: bool = True):
        self.grid = grid
        self.config = config
        self.params = params
        self.layout = HalfLayout(grid) if half else FullLayout(grid)
        self.prop = Propagator(self.layout.dxi, params, config.dt)
        self.op = NonlinearOperator(self.layout, params, pressure, config.vacuum_guard,
                                    linear_only=config.linear_only,
                                    dealiased=config.dealias == "2/3")

    def pack(self, state: State) -> np.ndarray:
        return np.stack([self.layout.from_full(f.coeffs) for f in state.fields()])

    def unpack(self, U: np.ndarray, t: float) -> State:
        full = [self.layout.to_full(c) for c in U]
        return State.from_arrays(self.grid, full[0], full[1:], t)

    def advance(self, U: np.ndarray, diagnostics: bool = False):
        dt = self.config.dt
        half = 0.5 * dt
        if self.config.linear_only:
            out = self.prop.apply(U)
            return (out, None) if diagnostics else out
        N0, diag = self.op(U, diagnostics=True) if diagnostics else (self.op(U), None)
        GU = self.prop.apply(U)
        GF = self.prop.apply_momentum_forcing(N0)
        base = GU + half * GF
        pred = base.copy()
        pred[1:] += half * N0
        if self.config.scheme == "ETD1":
            out = pred
        else:
            N1 = self.op(pred)
            out = base
            out[1:] += half * N1
        return (out, diag) if diagnostics else out


def step(state: State, config: StepperConfig, params: LinearParams, pressure: PressureModel) -> State:
    st = Stepper(state.grid, config, params, pressure)
    try:
        U = st.advance(st.pack(state))
    except GuardViolation as exc:
        exc.snapshot = state
        raise
    return st.unpack(U, state.t + config.dt)


# --- instrumentation --------------------------------------------------------

Probe = Callable[[State], float]


def wrap_fraction(state: State, shell: float = 0.05) -> float:
    """Share of the squared L^2 mass of (a, m) within ``shell*L`` of the cell faces."""
    grid = state.grid
    near = np.zeros(grid.shape, dtype=bool)
    for x, L in zip(grid.coordinates(), grid.L):
        near = near | (np.abs(x) >= (0.5 - shell) * L)
    dens = sum(f.physical() ** 2 for f in state.fields())
    total = float(dens.sum())
    if total == 0:
        return 0.0
    return float(dens[near].sum() / total)


def default_probes(p: float = 2.0) -> dict[str, Probe]:
    spec = NormSpec(0.0, p, 1.0)
    return {
        "a_B0": lambda s: besov_norm(s.a, spec),
        "m_B0": lambda s: besov_norm_multi(s.m, spec),
        "wrap": wrap_fraction,
    }


@dataclass
class Instrumentation:
    probes: dict[str, Probe] = field(default_factory=default_probes)
    n_records: int = 64
    record_times: tuple[float, ...] | None = None


@dataclass
class Trajectory:
    grid: Grid
    params: LinearParams
    pressure: PressureModel
    config: StepperConfig
    times: np.ndarray                  # every accepted step
    mass: np.ndarray
    pressure_moment: np.ndarray | None  # spatial integral of a^2 Itilde_P(a), per step
    stress_moment: np.ndarray | None    # (steps, d, d)
    snapshots: list[State]
    record_times: np.ndarray
    records: dict[str, np.ndarray]
    aborted: str | None = None

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def wrap_max(self) -> float:
        w = self.records.get("wrap")
        return float(np.max(w)) if w is not None and w.size else 0.0

    @property
    def wrap_flag(self) -> bool:
        return self.wrap_max > self.config.wrap_tolerance

    def snapshot_at(self, t: float) -> State:
        ts = self.snapshot_times
        i = int(np.argmin(np.abs(ts - t)))
        return self.snapshots[i]

    def diagnostics_table(self) -> tuple[list[str], np.ndarray]:
        """Rows at the record times: t, mass, probes..."""
        names = ["t", "mass"] + list(self.records)
        idx = np.searchsorted(self.times, self.record_times)
        cols = [self.record_times, self.mass[idx]] + [self.records[k] for k in self.records]
        return names, np.column_stack(cols) if len(cols[0]) else np.zeros((0, len(names)))


def _step_indices(times: Sequence[float] | None, count: int, cfg: StepperConfig) -> list[int]:
    n = cfg.n_steps
    if times is None:
        return geometric_steps(n, count)
    idx = {0, n}
    for t in times:
        if t < 0 or t > cfg.t_final + 1e-12:
            raise ConfigurationError(f"requested time {t} outside [0, t_final]")
        idx.add(int(round(t / cfg.dt)))
    return sorted(idx)


def simulate(initial: State, config: StepperConfig, params: LinearParams, pressure: PressureModel,
             instrumentation: Instrumentation | None = None, progress: bool = False) -> Trajectory:
    inst = instrumentation or Instrumentation()
    grid = initial.grid
    st = Stepper(grid, config, params, pressure)
    n = config.n_steps
    snap_idx = set(_step_indices(config.snapshot_times, config.n_snapshots, config))
    rec_idx = set(_step_indices(inst.record_times, inst.n_records, config))
    t0 = initial.t
    times = t0 + config.dt * np.arange(n + 1)
    mass = np.zeros(n + 1)
    track = config.track_moments
    pmom = np.zeros(n + 1) if track else None
    smom = np.zeros((n + 1, grid.d, grid.d)) if track else None
    snapshots: list[State] = []
    rec_t: list[float] = []
    recs: dict[str, list[float]] = {k: [] for k in inst.probes}
    moment_op = NonlinearOperator(st.layout, params, pressure, config.vacuum_guard,
                                  dealiased=config.dealias == "2/3")

    def observe(i: int, U: np.ndarray, state: State | None):
        if i in snap_idx or i in rec_idx:
            state = state or st.unpack(U, times[i])
            if i in snap_idx:
                snapshots.append(state)
            if i in rec_idx:
                rec_t.append(times[i])
                for k, fn in inst.probes.items():
                    recs[k].append(float(fn(state)))

    def finish(aborted=None, upto=n):
        sl = slice(0, upto + 1)
        return Trajectory(
            grid, params, pressure, config, times[sl], mass[sl],
            None if pmom is None else pmom[sl], None if smom is None else smom[sl],
            snapshots, np.array(rec_t), {k: np.array(v) for k, v in recs.items()}, aborted,
        )

    U = st.pack(initial)
    vol = grid.cell_volume
    i = 0
    try:
        for i in range(n + 1):
            mass[i] = vol * U[0].flat[0].real
            observe(i, U, initial if i == 0 else None)
            if i == n:
                if track:
                    _, diag = moment_op(U, diagnostics=True)
                    pmom[i], smom[i] = diag.pressure_moment, diag.stress_moment
                break
            if track and not config.linear_only:
                U_next, diag = st.advance(U, diagnostics=True)
            else:
                if track:
                    _, diag = moment_op(U, diagnostics=True)
                U_next = st.advance(U)
            if track:
                pmom[i], smom[i] = diag.pressure_moment, diag.stress_moment
            if not np.all(np.isfinite(U_next)):
                raise GuardViolation("overflow", f"non-finite coefficients at t={times[i + 1]:.6g}")
            U = U_next
            if progress and i % max(1, n // 20) == 0:
                log.info("t=%.4g mass=%.6g", times[i], mass[i])
    except GuardViolation as exc:
        exc.snapshot = st.unpack(U, times[i])
        exc.trajectory = finish(aborted=exc.guard, upto=max(i - 1, 0))
        raise
    traj = finish()
    if traj.wrap_flag:
        log.warning("wrap-around monitor %.3g exceeds tolerance %.3g", traj.wrap_max, config.wrap_tolerance)
    return traj


# --- nonlinear moments ----------------------------------------------------

@dataclass(frozen=True)
class NonlinearMoments:
    """Time integrals of the spatial nonlinear moments over [0, T] plus tail estimates."""

    pi_P: float
    M: np.ndarray
    T: float
    tail_pi: float
    tail_M: np.ndarray
    tail_estimable: bool
    tail_slope: float

    def total(self, include_tail: bool = True) -> tuple[float, np.ndarray]:
        if include_tail and self.tail_estimable:
            return self.pi_P + self.tail_pi, self.M + self.tail_M
        return self.pi_P, self.M


def _tail(times: np.ndarray, values: np.ndarray):
    """Integral from T to infinity of the power-law fit on the last decade."""
    T = times[-1]
    sel = (times >= T / 10) & (times > 0)
    mag = np.abs(values[sel])
    if sel.sum() < 4 or np.any(mag <= 0):
        return 0.0, math.nan, False
    slope = float(np.polyfit(np.log(times[sel]), np.log(mag), 1)[0])
    if not slope < -1:
        return 0.0, slope, False
    return float(values[-1] * T / (-slope - 1)), slope, True


def accumulate_nonlinear_moments(trajectory: Trajectory, pressure: PressureModel | None = None,
                                 kappa: float | None = None) -> NonlinearMoments:
    """Trapezoid in time of the spatial moments recorded by the stepper.

    When the run kept no per-step moments they are recomputed from the
    snapshots, which then must be no sparser than 5 steps apart.
    """
    d = trajectory.grid.d
    if trajectory.pressure_moment is not None:
        t = trajectory.times
        pm = trajectory.pressure_moment
        sm = trajectory.stress_moment
    else:
        t = trajectory.snapshot_times
        if t.size < 2 or np.max(np.diff(t)) > 5 * trajectory.config.dt + 1e-12:
            raise ValueError("insufficient snapshots: spacing must not exceed 5 dt")
        params = trajectory.params if kappa is None else LinearParams(
            trajectory.params.mu, trajectory.params.lam, kappa)
        op = NonlinearOperator(FullLayout(trajectory.grid), params, pressure or trajectory.pressure)
        pm = np.zeros(t.size)
        sm = np.zeros((t.size, d, d))
        for i, s in enumerate(trajectory.snapshots):
            _, diag = op(s.stacked(), diagnostics=True)
            pm[i], sm[i] = diag.pressure_moment, diag.stress_moment
    if t.size < 2:
        return NonlinearMoments(0.0, np.zeros((d, d)), float(t[-1]) if t.size else 0.0,
                                0.0, np.zeros((d, d)), False, math.nan)
    pi = float(np.trapezoid(pm, t))
    M = np.trapezoid(sm, t, axis=0)
    M = 0.5 * (M + M.T)
    ok = True
    tp, slope, good = _tail(t, pm) if np.any(pm) else (0.0, math.nan, True)
    ok &= good
    tM = np.zeros((d, d))
    slopes = [slope]
    floor = 1e-10 * float(np.abs(sm).max()) if sm.size else 0.0
    for j in range(d):
        for k in range(j, d):
            # entries that vanish by symmetry only carry round-off
            if np.abs(sm[:, j, k]).max() > floor:
                v, s, good = _tail(t, sm[:, j, k])
                ok &= good
                slopes.append(s)
                tM[j, k] = tM[k, j] = v
    fin = [s for s in slopes if math.isfinite(s)]
    return NonlinearMoments(pi, M, float(t[-1]), tp, tM, bool(ok), max(fin) if fin else math.nan)


# --- analytic-weight tracking ---------------------------------------------

@dataclass
class GevreyTrack:
    times: np.ndarray
    c0: float
    low: np.ndarray        # weighted (|D|a, m) in B^{-3+d/p}_{p,sigma}
    high: np.ndarray       # weighted (|D|a, m) in B^{-1+d/p}_{p,1}
    radius: np.ndarray     # fitted Fourier decay rate r(t)
    initial_norm: float

    @property
    def total(self) -> np.ndarray:
        return self.low + self.high

    @property
    def radius_sq_over_t(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.times > 0, self.radius**2 / self.times, np.nan)


def linear_c0(params: LinearParams) -> float:
    """Rate c0 of the pointwise Green-matrix bound, fitted on a fixed sample grid."""
    fit = pointwise_bound_fit(params, np.geomspace(1e-3, 1e2, 200), np.linspace(0.05, 4.0, 120))
    return fit.c0


def _weighted_U(state: State) -> list[SpectralField]:
    return [state.a.multiply(state.grid.xi_abs)] + list(state.m)


def mode_amplitude(state: State) -> np.ndarray:
    """|(|xi| a, m)| per lattice mode."""
    return np.sqrt(sum(np.abs(f.coeffs) ** 2 for f in _weighted_U(state)))


def fitted_decay_rate(state: State, reference: State | None = None,
                      window: tuple[float, float] = (1.0, 3.0)) -> float:
    """Least-squares rate r in |U(xi)| ~ exp(-r |xi|) over |xi| sqrt(t) in ``window``.

    Every resolved lattice mode in the scaled window is one sample.  With
    a reference (the initial data) the amplitude is taken relative to it,
    so the profile of the data does not enter the rate.
    """
    t = state.t
    if t <= 0:
        return 0.0
    grid = state.grid
    amp = mode_amplitude(state)
    k = grid.xi_abs
    sel = grid.dealias_mask & (k >= window[0] / math.sqrt(t)) & (k <= window[1] / math.sqrt(t))
    if reference is not None:
        amp0 = mode_amplitude(reference)
        sel &= amp0 > 1e-300
        amp = np.where(sel, amp / np.where(sel, amp0, 1.0), 0.0)
    sel &= amp > 0
    if np.unique(k[sel]).size < 2:
        return math.nan
    slope = np.polyfit(k[sel], np.log(amp[sel]), 1)[0]
    return float(-slope)


def gevrey_track(trajectory: Trajectory, c0: float, p: float = 2.0, sigma: float = 1.0,
                 c0_limit: float | None = None) -> GevreyTrack:
    """Analytically weighted norms of every snapshot and the fitted decay rate."""
    if not c0 > 0:
        raise ConfigurationError("c0 must be positive")
    limit = linear_c0(trajectory.params) if c0_limit is None else c0_limit
    if c0 > limit * (1 + 1e-12):
        raise ConfigurationError(f"c0={c0:.6g} exceeds the linear-stage bound {limit:.6g}")
    snaps = trajectory.snapshots
    for s in snaps:
        check_gevrey_overflow(trajectory.grid, s.t - snaps[0].t, c0)
    d = trajectory.grid.d
    lo_spec = NormSpec(-3 + d / p, p, sigma)
    hi_spec = NormSpec(-1 + d / p, p, 1.0)
    ref = snaps[0]
    t0 = ref.t
    lows, highs, radii = [], [], []
    for s in snaps:
        tau = s.t - t0
        w = np.exp(math.sqrt(c0 * tau) * s.grid.xi_abs)
        comps = [f.multiply(w) for f in _weighted_U(s)]
        lows.append(besov_norm_multi(comps, lo_spec))
        highs.append(besov_norm_multi(comps, hi_spec))
        radii.append(fitted_decay_rate(s.with_time(tau), ref))
    init = lows[0] + highs[0]
    return GevreyTrack(np.array([s.t - t0 for s in snaps]), c0, np.array(lows), np.array(highs),
                       np.array(radii), init)

"""Acceptance suite: the ten numbered criteria as machine-readable verdicts.

``fast`` runs every symbol-level check plus the simulation criteria on a
d=2 smoke grid (targets rescaled to d=2).  ``full`` runs the d=3 reference
experiments.  Failures are verdicts, never exceptions.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .asymptotics import (
    AsymptoticMoments,
    asymptotic_error,
    asymptotic_error_series,
    decay_fit,
    density_decay_exponent,
    momentum_decay_exponent,
    profile_symbol,
)
from .besov import NormSpec, besov_norm
from .grid import (FullLayout, Grid, SpectralField, State, dealias, gradient, laplacian, product,
                   random_field, transform_forward)
from .harness import inequality_harness
from .linear import (
    CRITICAL,
    OVERDAMPED,
    UNDERDAMPED,
    LinearParams,
    apply_semigroup,
    green_matrix,
    ode_residual,
    pointwise_bound_fit,
)
from .physics import (
    NonlinearOperator,
    PressureModel,
    compose_IP,
    korteweg_tensor,
    ktilde_tensor,
)
from .solver import (
    InitialDataSpec,
    StepperConfig,
    accumulate_nonlinear_moments,
    build_initial_data,
    gevrey_track,
    linear_c0,
    simulate,
)

log = logging.getLogger(__name__)

LEVELS = ("fast", "full")
REGIME_PARAMS = {
    # (nu, kappa) for the pointwise-estimate check
    UNDERDAMPED: (1.0, 1.0),
    CRITICAL: (2.0, 1.0),
    OVERDAMPED: (3.0, 2.0),
}
REFERENCE_KAPPAS = (0.5, 1.0, 2.0)   # mu=1, lam=0: overdamped, critical, underdamped
REFERENCE_DT = 0.1
REFERENCE_WIDTH = 1.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {"criterion": self.number, "name": self.name,
                "verdict": "PASS" if self.passed else "FAIL", "details": _jsonable(self.details)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


# --- random parameter draws ------------------------------------------------

def random_params(regime: str, rng: np.random.Generator) -> LinearParams:
    mu = rng.uniform(0.2, 1.5)
    lam = rng.uniform(-mu, 1.0)
    nu = lam + 2 * mu
    if regime == CRITICAL:
        kappa = nu**2 / 4
    elif regime == UNDERDAMPED:
        kappa = nu**2 / 4 * rng.uniform(1.2, 4.0)
    else:
        kappa = nu**2 / 4 * rng.uniform(0.2, 0.8)
    return LinearParams(mu, lam, kappa)


def random_wavevector(rng: np.random.Generator, d: int = 3, kmin=0.1, kmax=3.0) -> np.ndarray:
    v = rng.normal(size=d)
    return v / np.linalg.norm(v) * rng.uniform(kmin, kmax)


# --- criterion 1 -------------------------------------------------------------

def green_exactness(samples: int = 100, seed: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    for regime in (UNDERDAMPED, CRITICAL, OVERDAMPED):
        e_id = e_semi = e_ode = 0.0
        for _ in range(samples):
            prm = random_params(regime, rng)
            xi = random_wavevector(rng)
            s, t = rng.uniform(0.01, 3.0, size=2)
            e_id = max(e_id, np.abs(green_matrix(0.0, xi, prm) - np.eye(4)).max())
            Gs, Gt, Gst = (green_matrix(x, xi, prm) for x in (s, t, s + t))
            e_semi = max(e_semi, np.abs(Gst - Gs @ Gt).max() / max(1.0, np.abs(Gst).max()))
            e_ode = max(e_ode, ode_residual(t, xi, prm))
        out[regime] = {"identity": e_id, "semigroup": e_semi, "ode_residual": e_ode,
                       "pass": e_id <= 1e-14 and e_semi <= 1e-10 and e_ode <= 1e-6}
    return out


def criterion_1() -> tuple[bool, dict]:
    d = green_exactness()
    return all(v["pass"] for v in d.values()), d


# --- criterion 2 -------------------------------------------------------------

def criterion_2() -> tuple[bool, dict]:
    det = {}
    ok = True
    t_grid = np.geomspace(1e-3, 1e2, 200)
    xi_grid = np.linspace(0.05, 4.0, 120)
    for regime, (nu, kappa) in REGIME_PARAMS.items():
        prm = LinearParams.from_nu(nu, kappa)
        fit = pointwise_bound_fit(prm, t_grid, xi_grid)
        good = prm.regime == regime and fit.c0 > 0 and math.isfinite(fit.C)
        det[regime] = {"c0": fit.c0, "C": fit.C, "pass": good}
        ok &= good
    spot = green_matrix(1.0, np.array([1.0, 0.0, 0.0]), LinearParams.from_nu(2.0, 1.0))[0, 0].real
    err = abs(spot - 2 * math.exp(-1))
    det["critical_spot"] = {"value": spot, "error": err, "pass": err <= 1e-12}
    return bool(ok and err <= 1e-12), det


# --- criterion 3: brute-force oracle ----------------------------------------

def _oracle_cutoff(r):
    if r <= 1.1:
        return 1.0
    if r >= 1.9:
        return 0.0
    x = (r - 1.1) / 0.8
    return 1.0 - (10 * x**3 - 15 * x**4 + 6 * x**5)


def oracle_besov(field_coeffs, n, L, s, p, sigma) -> float:
    """Direct summation: loop over blocks, then over every lattice mode."""
    shape = field_coeffs.shape
    d = len(shape)
    vol = 1.0
    for k in range(d):
        vol *= L[k] / n[k]
    dual = 1.0
    for k in range(d):
        dual *= 2 * math.pi / L[k]
    pc = math.inf if p == 1 else (1.0 if math.isinf(p) else p / (p - 1))
    modes = []
    for idx in np.ndindex(*shape):
        xi2 = 0.0
        for k in range(d):
            m = idx[k] if idx[k] <= n[k] // 2 else idx[k] - n[k]
            xi2 += (2 * math.pi * m / L[k]) ** 2
        val = abs(complex(field_coeffs[idx])) * vol / (2 * math.pi) ** (d / 2)
        modes.append((math.sqrt(xi2), val))
    kmin = min(r for r, _ in modes if r > 0)
    kmax = max(r for r, _ in modes)
    terms = []
    j = math.floor(math.log2(kmin / 3.8)) - 1
    while 1.1 * 2.0**j <= kmax:
        acc = []
        for r, v in modes:
            if r == 0:
                continue
            w = _oracle_cutoff(r / 2.0 ** (j + 1)) - _oracle_cutoff(r / 2.0**j)
            acc.append(w * v)
        if math.isinf(pc):
            bn = max(acc)
        else:
            bn = (sum(a**pc for a in acc) * dual) ** (1 / pc)
        terms.append(2.0 ** (s * j) * bn)
        j += 1
    if math.isinf(sigma):
        return max(terms)
    return sum(t**sigma for t in terms) ** (1 / sigma)


NORM_MATRIX = [NormSpec(s, p, sig) for s in (-1.0, 0.0, 0.5, 1.5) for p in (1.0, 1.5, 2.0, math.inf)
               for sig in (1.0, 2.0, math.inf)]


def criterion_3(fields: int = 50, seed: int = 3) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    grids = [Grid.cube(1, 32, 2 * np.pi), Grid((12, 10), (2 * np.pi, 5.0))]
    worst = 0.0
    for i in range(fields):
        g = grids[i % len(grids)]
        f = random_field(g, rng, dealiased=False)
        f = SpectralField(g, np.where(g.xi_sq > 0, f.coeffs, 0.0))
        for spec in NORM_MATRIX:
            a = besov_norm(f, spec)
            b = oracle_besov(f.coeffs, g.n, g.L, spec.s, spec.p, spec.sigma)
            err = abs(a - b) / max(abs(b), 1e-300)
            worst = err if not err <= worst else worst  # NaN propagates
    return worst <= 1e-12, {"fields": fields, "specs": len(NORM_MATRIX), "max_rel_error": worst}


# --- criterion 4 -------------------------------------------------------------

def criterion_4(trials: int = 200) -> tuple[bool, dict]:
    det = {}
    for name in ("bernstein", "banach_ring", "bilinear_neg"):
        det[name] = inequality_harness(name, trials=trials, seed=0).to_json()
    return all(v["pass"] for v in det.values()), det


# --- criterion 5 -------------------------------------------------------------

def _order_run(dt: float):
    g = Grid.cube(2, 16, 2 * np.pi)
    prm = LinearParams(1.0, 0.0, 1.0)
    st, _ = build_initial_data(g, InitialDataSpec(amplitude=0.3, width=0.6))
    cfg = StepperConfig(dt=dt, t_final=0.8, n_snapshots=1, track_moments=False)
    tr = simulate(st, cfg, prm, PressureModel((1.0,)))
    return tr.snapshots[-1].stacked()


def etd_rk2_order() -> list[float]:
    sols = [_order_run(0.02 / 2**k) for k in range(4)]
    diffs = [np.abs(sols[k] - sols[k + 1]).max() for k in range(3)]
    return [math.log2(diffs[k] / diffs[k + 1]) for k in range(2)]


def criterion_5() -> tuple[bool, dict]:
    g = Grid.cube(3, 16, 20.0)
    prm = LinearParams(1.0, 0.0, 2.0)
    st, _ = build_initial_data(g, InitialDataSpec(amplitude=1e-2, width=1.5))
    cfg = StepperConfig(dt=0.1, t_final=10.0, n_snapshots=4, linear_only=True, track_moments=False)
    tr = simulate(st, cfg, prm, PressureModel((1.0,)))
    scale = np.abs(st.stacked()).max()
    lin_err = max(np.abs(s.stacked() - apply_semigroup(st, s.t, prm).stacked()).max()
                  for s in tr.snapshots) / scale
    orders = etd_rk2_order()
    st2, _ = build_initial_data(g, InitialDataSpec(amplitude=0.05, width=1.5))
    tr2 = simulate(st2, StepperConfig(dt=0.1, t_final=10.0, n_snapshots=2, track_moments=False),
                   prm, PressureModel((1.0,)))
    drift = float(np.abs(tr2.mass - tr2.mass[0]).max())
    ok = lin_err <= 1e-10 and all(1.9 <= o <= 2.3 for o in orders) and drift <= 1e-10
    return ok, {"linear_vs_semigroup": lin_err, "orders": orders, "mass_drift": drift}


# --- reference runs (criteria 6-8) -----------------------------------------

@dataclass
class ReferenceRun:
    kappa: float
    level: str
    trajectory: object
    initial: State
    mtilde: SpectralField
    params: LinearParams
    seconds: float


@lru_cache(maxsize=8)
def reference_run(kappa: float, level: str = "full") -> ReferenceRun:
    """d=3 n=48 L=100 (full) or d=2 n=64 L=100 (fast smoke) small-data run to T=100."""
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    d, n = (3, 48) if level == "full" else (2, 64)
    g = Grid.cube(d, n, 100.0)
    prm = LinearParams(1.0, 0.0, kappa)
    st, mt = build_initial_data(g, InitialDataSpec(amplitude=1e-3, width=REFERENCE_WIDTH))
    cfg = StepperConfig(dt=REFERENCE_DT, t_final=100.0, n_snapshots=24)
    t0 = time.perf_counter()
    tr = simulate(st, cfg, prm, PressureModel((1.0,)))
    return ReferenceRun(kappa, level, tr, st, mt, prm, time.perf_counter() - t0)


def decay_check(run: ReferenceRun) -> dict:
    tr = run.trajectory
    d = tr.grid.d
    out = {}
    for name, target in (("a_B0", density_decay_exponent(d, 2.0)),
                         ("m_B0", momentum_decay_exponent(d, 2.0))):
        f = decay_fit(tr.record_times, tr.records[name], (10.0, 100.0))
        out[name] = {"slope": f.slope, "target": target, "residual": f.residual,
                     "pass": abs(f.slope - target) <= 0.15}
    return out


def comparator_check(run: ReferenceRun) -> dict:
    tr = run.trajectory
    nm = accumulate_nonlinear_moments(tr)
    mo = AsymptoticMoments.from_data(run.initial, run.mtilde, nm)
    out = {"moments": mo.to_json()}
    for s in (0.0, 0.5):
        e = asymptotic_error(tr, mo, s, 2.0)
        out[f"s={s}"] = {"final_decade_ratio": e.decrease, "pass": e.passed}
    lin_states = [apply_semigroup(run.initial, t, run.params) for t in tr.snapshot_times]
    e = asymptotic_error_series(lin_states, AsymptoticMoments.from_data(run.initial, run.mtilde),
                                0.0, 2.0, run.params)
    out["linear_only"] = {"final_decade_ratio": e.decrease, "monotone": e.monotone, "pass": e.monotone}
    out["pass"] = all(out[k]["pass"] for k in ("s=0.0", "s=0.5", "linear_only"))
    return out


def gevrey_check(run: ReferenceRun) -> dict:
    c0_fit = linear_c0(run.params)
    gt = gevrey_track(run.trajectory, 0.5 * c0_fit)
    sup_ratio = float(gt.total.max() / gt.initial_norm)
    sel = (gt.times >= 10.0) & (gt.times <= 100.0 + 1e-9)
    q = gt.radius_sq_over_t[sel]
    mean = float(np.mean(q))
    spread = float(np.max(np.abs(q / mean - 1))) if mean > 0 else math.inf
    ok = sup_ratio <= 10.0 and mean > 0 and spread <= 0.2
    return {"c0_fit": c0_fit, "c0": 0.5 * c0_fit, "sup_ratio": sup_ratio,
            "r2_over_t_mean": mean, "r2_over_t_spread": spread, "pass": ok}


def _per_regime(level: str, check) -> tuple[bool, dict]:
    det = {}
    for kappa in REFERENCE_KAPPAS:
        run = reference_run(kappa, level)
        det[f"kappa={kappa}"] = {"regime": run.params.regime, **check(run)}
        if "pass" not in det[f"kappa={kappa}"]:
            det[f"kappa={kappa}"]["pass"] = all(v["pass"] for v in det[f"kappa={kappa}"].values()
                                                if isinstance(v, dict))
        det[f"kappa={kappa}"]["wrap_monitor"] = run.trajectory.wrap_max
    det["grid"] = reference_run(REFERENCE_KAPPAS[0], level).trajectory.grid.to_json()
    return all(v["pass"] for k, v in det.items() if k.startswith("kappa")), det


def criterion_6(level: str = "full"):
    return _per_regime(level, decay_check)


def criterion_7(level: str = "full"):
    return _per_regime(level, comparator_check)


def criterion_8(level: str = "full"):
    return _per_regime(level, gevrey_check)


# --- criterion 9 -------------------------------------------------------------

def symbol_cross_identities(samples: int = 100, seed: int = 9) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    for regime in (UNDERDAMPED, CRITICAL, OVERDAMPED):
        worst = 0.0
        for _ in range(samples):
            prm = random_params(regime, rng)
            xi = random_wavevector(rng)
            t = rng.uniform(0.05, 5.0)
            G = green_matrix(t, xi, prm)
            comps = tuple(np.array([x]) for x in xi)
            g1, g2, g3 = (complex(profile_symbol(n, t, comps, prm)[0]) for n in ("G1", "G2", "G3"))
            k2 = float(xi @ xi)
            e = xi / math.sqrt(k2)
            # density entry, density <- momentum contracted with i xi, longitudinal momentum entry
            ref1 = G[0, 0]
            ref2 = G[0, 1:] @ (1j * xi)
            ref3 = e @ G[1:, 1:] @ e
            scale = max(1.0, abs(ref1), abs(ref2), abs(ref3))
            worst = max(worst, abs(g1 - ref1) / scale, abs(g2 - ref2) / scale, abs(g3 - ref3) / scale)
        out[regime] = {"max_error": worst, "pass": worst <= 1e-10}
    x1 = (np.array([1.0]), np.array([0.0]), np.array([0.0]))
    crit = float(np.real(profile_symbol("G1", 1.0, x1, LinearParams.from_nu(2.0, 1.0))[0]))
    over = float(np.real(profile_symbol("G2", 1.0, x1, LinearParams.from_nu(3.0, 2.0))[0]))
    out["critical_G1"] = {"value": crit, "expected": 2 * math.exp(-1),
                          "pass": abs(crit - 2 * math.exp(-1)) <= 1e-10}
    out["overdamped_G2"] = {"value": over, "expected": math.exp(-1) - math.exp(-2),
                            "pass": abs(over - (math.exp(-1) - math.exp(-2))) <= 1e-10}
    return out


def criterion_9():
    d = symbol_cross_identities()
    return all(v["pass"] for v in d.values()), d


# --- criterion 10 ------------------------------------------------------------

def _band_limited(grid: Grid, rng, amplitude: float, frac: float = 1 / 6) -> SpectralField:
    k0 = 2 * np.pi / max(grid.L)
    top = min(grid.n) * frac * k0
    f = random_field(grid, rng, band=(k0, top), dealiased=False)
    return f * (amplitude / max(np.abs(f.physical()).max(), 1e-300))


def physics_identities(seed: int = 10) -> dict:
    rng = np.random.default_rng(seed)
    g = Grid.cube(2, 48, 2 * np.pi)
    # cubic pressure and a band of n/8 keep every product below the aliasing limit
    P = PressureModel((1.0, -0.5))
    a = _band_limited(g, rng, 0.2, 1 / 8)
    lhs = [product(compose_IP(a, P), da) for da in gradient(a)]
    rhs = [dealias(f) for f in gradient(transform_forward(g, P.potential(a.physical())))]
    scale = max(f.max_abs() for f in rhs)
    e_grad = max((l - r).max_abs() for l, r in zip(lhs, rhs)) / scale
    kappa = 1.3
    K = korteweg_tensor(a, kappa)
    Kt = ktilde_tensor(a, kappa)
    # -Ktilde = K(a) - (kappa/2) Lap(a^2 + 2a) Id
    iso = (laplacian(dealias(product(a, a, dealiased=False))) + laplacian(a) * 2.0) * (0.5 * kappa)
    sc = max(K[j, k].max_abs() for j in range(g.d) for k in range(g.d))
    e_kort = 0.0
    for j in range(g.d):
        for k in range(g.d):
            r = K[j, k] + Kt[j, k] - (iso if j == k else SpectralField.zeros(g))
            e_kort = max(e_kort, r.max_abs() / sc)
    # quadratic scaling of the nonlinearity at small amplitude
    op = NonlinearOperator(FullLayout(g), LinearParams(1.0, 0.0, kappa), P)
    b = _band_limited(g, rng, 1.0, 1 / 8)
    m = [_band_limited(g, rng, 1.0, 1 / 8) for _ in range(2)]
    U = np.stack([b.coeffs] + [x.coeffs for x in m])
    eps = 1e-4
    n1 = np.abs(op(eps * U)).max()
    n2 = np.abs(op(2 * eps * U)).max()
    ratio = float(n2 / n1)
    return {
        "gradient_identity": {"error": e_grad, "pass": e_grad <= 1e-8},
        "korteweg_reconciliation": {"error": e_kort, "pass": e_kort <= 1e-10},
        "quadratic_scaling": {"ratio": ratio, "pass": 3.8 <= ratio <= 4.2},
    }


def criterion_10():
    d = physics_identities()
    return all(v["pass"] for v in d.values()), d


# --- driver -------------------------------------------------------------------

CRITERIA = {
    1: ("green matrix exactness", lambda lvl: criterion_1()),
    2: ("pointwise estimate", lambda lvl: criterion_2()),
    3: ("besov engine oracle", lambda lvl: criterion_3()),
    4: ("inequality harness", lambda lvl: criterion_4()),
    5: ("solver consistency", lambda lvl: criterion_5()),
    6: ("decay exponents", criterion_6),
    7: ("asymptotic comparator", criterion_7),
    8: ("gevrey radius", criterion_8),
    9: ("symbol cross-identities", lambda lvl: criterion_9()),
    10: ("physics identities", lambda lvl: criterion_10()),
}


def run_criterion(number: int, level: str = "full") -> CriterionResult:
    name, fn = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        ok, det = fn(level)
    except Exception as exc:  # a crash inside a check is a FAIL verdict
        log.exception("criterion %d raised", number)
        ok, det = False, {"error": f"{type(exc).__name__}: {exc}"}
    return CriterionResult(number, name, bool(ok), det, time.perf_counter() - t0)


def acceptance_suite(level: str = "fast", criteria=None) -> dict:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
    numbers = sorted(CRITERIA) if criteria is None else list(criteria)
    results = []
    for k in numbers:
        r = run_criterion(k, level)
        log.info("criterion %d: %s in %.1f s", k, "PASS" if r.passed else "FAIL", r.seconds)
        results.append(r)
    return {
        "level": level,
        "smoke_grid": level == "fast",
        "criteria": [r.to_json() for r in results],
        "pass": all(r.passed for r in results),
    }

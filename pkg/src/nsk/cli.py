"""Command-line front end.

    nsk <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--level fast|full]

Exit status: 0 complete/PASS, 1 configuration error, 2 guard abort,
3 verdict FAIL.  Each run writes ``manifest-<subcommand>.json`` into the
output directory before any computation; it is the only file that
carries a timestamp.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    AsymptoticMoments,
    asymptotic_error,
    decay_fit,
    density_decay_exponent,
    momentum_decay_exponent,
)
from .besov import NormSpec, besov_norm, besov_norm_multi
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, GevreyOverflowError, GuardViolation
from .grid import (SpectralField, State, load_snapshot, save_snapshot, state_components,
                   state_from_components)
from .linear import green_matrix, ode_residual, pointwise_bound_fit
from .solver import (
    Instrumentation,
    accumulate_nonlinear_moments,
    build_initial_data,
    gevrey_track,
    linear_c0,
    simulate,
)
from .trajio import load_trajectory, read_csv, save_trajectory, sha256_file, write_csv, write_json

log = logging.getLogger("nsk")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_FAIL = 0, 1, 2, 3
SUBCOMMANDS = ("linear-verify", "simulate", "norms", "decay-fit", "asymptotics", "gevrey", "acceptance")


def _manifest(out: Path, command: str, cfg: ExperimentConfig | None, inputs: dict[str, str], extra=None):
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "version": __version__,
        "config": None if cfg is None else cfg.echo(),
        "seed": None if cfg is None else cfg.seed,
        "inputs_sha256": {k: sha256_file(v) for k, v in sorted(inputs.items()) if Path(v).is_file()},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if extra:
        doc.update(extra)
    write_json(out / f"manifest-{command}.json", doc)


# --- subcommands -------------------------------------------------------------

def cmd_linear_verify(cfg: ExperimentConfig, out: Path, args) -> int:
    prm = cfg.build_params()
    lv = cfg.linear_verify
    fit = pointwise_bound_fit(prm, np.geomspace(1e-3, 1e2, 200), np.linspace(0.05, lv.xi_max, 120))
    rng = np.random.default_rng(cfg.seed)
    d = cfg.grid.d
    e_id = e_semi = e_ode = 0.0
    for _ in range(lv.samples):
        v = rng.normal(size=d)
        xi = v / np.linalg.norm(v) * rng.uniform(0.05, lv.xi_max)
        s, t = rng.uniform(0.01, lv.t_max, size=2)
        e_id = max(e_id, float(np.abs(green_matrix(0.0, xi, prm) - np.eye(d + 1)).max()))
        Gt, Gst = green_matrix(t, xi, prm), green_matrix(s + t, xi, prm)
        e_semi = max(e_semi, float(np.abs(Gst - green_matrix(s, xi, prm) @ Gt).max()
                                   / max(1.0, np.abs(Gst).max())))
        e_ode = max(e_ode, ode_residual(t, xi, prm))
    ok = fit.c0 > 0 and math.isfinite(fit.C) and e_id <= 1e-14 and e_semi <= 1e-10 and e_ode <= 1e-6
    write_json(out / "linear_verify.json", {
        "params": prm.to_json(), "regime": prm.regime,
        "c0_fit": fit.c0, "C_fit": fit.C, "fit_feasible": fit.feasible,
        "identity_error": e_id, "semigroup_error": e_semi, "ode_residual": e_ode,
        "samples": lv.samples, "pass": ok,
    })
    return EXIT_OK if ok else EXIT_FAIL


def _initial(cfg: ExperimentConfig):
    return build_initial_data(cfg.build_grid(), cfg.build_initial())


def _run(cfg: ExperimentConfig, out: Path):
    """Simulate and persist; returns (trajectory, initial, mtilde)."""
    st, mt = _initial(cfg)
    t = cfg.time
    rec = set(np.geomspace(t.dt, max(t.t_final, t.dt), t.n_records).tolist())
    # fit windows start and end on a record so they span their full decade
    rec |= {w for w in (*cfg.asymptotics.window, *cfg.gevrey.window) if w <= t.t_final}
    inst = Instrumentation(n_records=t.n_records, record_times=tuple(sorted(rec)) if t.t_final > 0 else None)
    try:
        traj = simulate(st, cfg.build_stepper(), cfg.build_params(), cfg.build_pressure(), inst)
    except GuardViolation as exc:
        traj = getattr(exc, "trajectory", None)
        if traj is not None:
            save_trajectory(traj, out)
        if exc.snapshot is not None:
            save_snapshot(out / "abort_state.nskf", exc.snapshot.grid, exc.snapshot.t,
                          state_components(exc.snapshot))
        write_json(out / "abort.json", {"guard": exc.guard, "message": str(exc)})
        raise
    save_trajectory(traj, out)
    return traj, st, mt


def cmd_simulate(cfg: ExperimentConfig, out: Path, args) -> int:
    traj, _, _ = _run(cfg, out)
    return EXIT_OK


def _norm_value(state: State, entry) -> float:
    spec = NormSpec(entry.s, entry.p, entry.sigma)
    if entry.component == "a":
        return besov_norm(state.a, spec)
    if entry.component == "m":
        return besov_norm_multi(state.m, spec)
    return besov_norm_multi(state.fields(), spec)


def cmd_norms(cfg: ExperimentConfig, out: Path, args) -> int:
    if args.snapshot:
        grid, t, comps = load_snapshot(args.snapshot)
        if "a" not in comps:
            raise ConfigurationError("snapshot: missing component 'a'")
        for j in range(grid.d):
            comps.setdefault(f"m{j + 1}", SpectralField.zeros(grid))
        state = state_from_components(grid, t, comps)
    else:
        state, _ = _initial(cfg)
    entries = cfg.norms or []
    rows = []
    for e in entries:
        name = e.name or f"{e.component}_B{e.s:g}_{e.p:g}_{e.sigma:g}"
        rows.append([name, e.component, float(e.s), float(e.p), float(e.sigma), _norm_value(state, e)])
    write_csv(out / "norms.csv", ["name", "component", "s", "p", "sigma", "value"], rows)
    return EXIT_OK


def _default_target(name: str, d: int, p: float):
    if name.startswith("a"):
        return density_decay_exponent(d, p)
    if name.startswith("m"):
        return momentum_decay_exponent(d, p)
    return None


def _fit_columns(cols: dict, names, targets, tol, window, d, p):
    fits = []
    ok = True
    for name in names:
        if name not in cols:
            raise ConfigurationError(f"decay.columns: column {name!r} not in input")
        f = decay_fit(cols["t"], cols[name], window)
        target = targets.get(name, _default_target(name, d, p))
        good = target is None or abs(f.slope - target) <= tol
        ok &= good
        fits.append({"name": name, "slope": f.slope, "target": target, "residual": f.residual,
                     "n_points": f.n_points, "pass": good})
    return fits, ok


def cmd_decay_fit(cfg: ExperimentConfig, out: Path, args) -> int:
    src = args.csv or cfg.decay.csv
    if not src:
        raise ConfigurationError("decay.csv: no input CSV given (config or --csv)")
    header, cols = read_csv(src)
    if "t" not in cols:
        raise ConfigurationError("decay.csv: input needs a 't' column")
    dc = cfg.decay
    # without a config every data column of the CSV is fitted
    names = dc.columns if args.config else [h for h in header if h != "t" and h in cols]
    try:
        fits, ok = _fit_columns(cols, names, dc.targets, dc.tolerance, dc.window, cfg.grid.d, dc.p)
    except ValueError as exc:
        raise ConfigurationError(f"decay.window: {exc}") from None
    write_json(out / "decay_fit.json", {"input": Path(src).name, "fits": fits, "pass": ok})
    return EXIT_OK if ok else EXIT_FAIL


def _trajectory(cfg, out, args):
    if args.traj:
        return load_trajectory(args.traj), None
    traj, st, mt = _run(cfg, out)
    return traj, mt


def _mtilde(cfg, traj, mt):
    if mt is not None:
        return mt
    # the potential of the initial momentum: mtilde with grad mtilde = m0
    st0 = traj.snapshots[0]
    grid = traj.grid
    k2 = grid.dxi_sq
    c = np.zeros(grid.shape, dtype=complex)
    for xj, mj in zip(grid.dxi, st0.m):
        c += -1j * xj * mj.coeffs
    c = np.where(k2 > 0, c / np.where(k2 > 0, k2, 1.0), 0.0)
    # the zero mode is not recoverable from m0; take it from the config data
    _, mt_cfg = _initial(cfg)
    if mt_cfg.grid == grid:
        c.flat[0] = mt_cfg.coeffs.flat[0]
    return SpectralField(grid, c)


def cmd_asymptotics(cfg: ExperimentConfig, out: Path, args) -> int:
    traj, mt = _trajectory(cfg, out, args)
    ac = cfg.asymptotics
    s_values = [args.s] if args.s is not None else ac.s
    p = args.p if args.p is not None else ac.p
    nm = accumulate_nonlinear_moments(traj)
    mo = AsymptoticMoments.from_data(traj.snapshots[0], _mtilde(cfg, traj, mt), nm, ac.include_tail)
    series = [asymptotic_error(traj, mo, s, p) for s in s_values]
    rows = [[float(t)] + [float(e.values[i]) for e in series] for i, t in enumerate(series[0].times)]
    write_csv(out / "weighted_error.csv", ["t"] + [f"s={s:g}" for s in s_values], rows)
    d = traj.grid.d
    names = [k for k in ("a_B0", "m_B0") if k in traj.records]
    cols = {"t": traj.record_times, **traj.records}
    try:
        fits, _ = _fit_columns(cols, names, {}, cfg.decay.tolerance, ac.window, d, 2.0)
    except ValueError as exc:
        fits = [{"error": str(exc)}]
    ok = all(e.passed for e in series)
    write_json(out / "report.json", {
        "moments": mo.to_json(),
        "weighted_error_series": [e.to_json() for e in series],
        "pass": ok,
        "decay_fits": fits,
        "wrap_monitor": {"max": traj.wrap_max, "flag": traj.wrap_flag},
    })
    return EXIT_OK if ok else EXIT_FAIL


def cmd_gevrey(cfg: ExperimentConfig, out: Path, args) -> int:
    traj, _ = _trajectory(cfg, out, args)
    gc = cfg.gevrey
    c0_fit = linear_c0(traj.params)
    c0 = gc.safety * c0_fit if gc.c0 == "fit" else float(gc.c0)
    try:
        gt = gevrey_track(traj, c0, gc.p, gc.sigma, c0_limit=c0_fit)
    except GevreyOverflowError as exc:
        raise ConfigurationError(f"gevrey.c0: {exc}") from None
    q = gt.radius_sq_over_t
    write_csv(out / "gevrey.csv", ["t", "low", "high", "total", "radius", "r2_over_t"],
              [[float(v) for v in r] for r in zip(gt.times, gt.low, gt.high, gt.total, gt.radius, q)])
    sel = (gt.times >= gc.window[0]) & (gt.times <= gc.window[1] * (1 + 1e-12))
    qs = q[sel]
    mean = float(np.mean(qs)) if qs.size else math.nan
    spread = float(np.max(np.abs(qs / mean - 1))) if qs.size and mean > 0 else math.inf
    sup_ratio = float(gt.total.max() / gt.initial_norm) if gt.initial_norm > 0 else math.nan
    ok = (gt.initial_norm == 0 or sup_ratio <= gc.sup_factor) and mean > 0 and spread <= gc.radius_tolerance
    write_json(out / "gevrey.json", {
        "c0_fit": c0_fit, "c0": c0, "initial_norm": gt.initial_norm, "sup_ratio": sup_ratio,
        "r2_over_t_mean": mean, "r2_over_t_spread": spread, "pass": bool(ok),
    })
    return EXIT_OK if ok else EXIT_FAIL


def cmd_acceptance(cfg, out: Path, args) -> int:
    from .acceptance import acceptance_suite
    report = acceptance_suite(args.level)
    write_json(out / "acceptance.json", report)
    for c in report["criteria"]:
        print(f"criterion {c['criterion']:2d} {c['name']:<26s} {c['verdict']}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


COMMANDS = {
    "linear-verify": cmd_linear_verify,
    "simulate": cmd_simulate,
    "norms": cmd_norms,
    "decay-fit": cmd_decay_fit,
    "asymptotics": cmd_asymptotics,
    "gevrey": cmd_gevrey,
    "acceptance": cmd_acceptance,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors share the configuration-error status
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nsk", description="Navier-Stokes-Korteweg experiment runner")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory (default: config 'out')")
    ap.add_argument("--seed", type=int, help="override the config seed (u64)")
    ap.add_argument("--level", choices=("fast", "full"), default="fast", help="acceptance level")
    ap.add_argument("--traj", help="run directory written by 'simulate'")
    ap.add_argument("--snapshot", help="snapshot file for 'norms'")
    ap.add_argument("--csv", help="input CSV for 'decay-fit'")
    ap.add_argument("--s", type=float, help="comparator smoothness index")
    ap.add_argument("--p", type=float, help="comparator Lebesgue index")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.subcommand
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigurationError("seed: must be an unsigned 64-bit integer")
        cfg = None
        inputs = {}
        if args.config:
            cfg = load_config(args.config)
            inputs["config"] = args.config
            if args.seed is not None:
                cfg = cfg.model_copy(update={"seed": args.seed})
        elif cmd != "acceptance":
            cfg = ExperimentConfig() if cmd == "decay-fit" and args.csv else None
            if cfg is None:
                raise ConfigurationError("config: --config is required for this subcommand")
        out = Path(args.out or (cfg.out if cfg else "out"))
        for key in ("csv", "snapshot"):
            if getattr(args, key):
                inputs[key] = getattr(args, key)
        if cmd == "decay-fit" and cfg is not None and cfg.decay.csv:
            inputs.setdefault("csv", cfg.decay.csv)
        if args.traj:
            for f in ("trajectory.json", "steps.csv", "diagnostics.csv"):
                inputs[f"traj/{f}"] = str(Path(args.traj) / f)
        _manifest(out, cmd, cfg, inputs, {"level": args.level} if cmd == "acceptance" else None)
        return COMMANDS[cmd](cfg, out, args)
    except ConfigurationError as exc:
        print(f"nsk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardViolation as exc:
        print(f"nsk: guard abort: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (FileNotFoundError, ValueError) as exc:
        print(f"nsk: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

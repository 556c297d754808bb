"""Run directories: deterministic CSV/JSON writers and trajectory reload."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .grid import Grid, load_snapshot, save_snapshot, state_components, state_from_components
from .linear import LinearParams
from .physics import PressureModel
from .solver import StepperConfig, Trajectory

FLOAT_FMT = "%.17g"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def write_csv(path, header: list[str], rows):
    """RFC-4180 CSV with a header row and 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([FLOAT_FMT % v if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), newline="")


def read_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    cols = {}
    for i, h in enumerate(header):
        try:
            cols[h] = np.array([float(r[i]) for r in body])
        except (ValueError, IndexError):
            continue
    return header, cols


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- trajectories -----------------------------------------------------------

def save_trajectory(traj: Trajectory, out: Path) -> None:
    out = Path(out)
    snapdir = out / "snapshots"
    snapdir.mkdir(parents=True, exist_ok=True)
    d = traj.grid.d
    names = []
    for i, s in enumerate(traj.snapshots):
        name = f"snap_{i:04d}.nskf"
        save_snapshot(snapdir / name, traj.grid, s.t, state_components(s))
        names.append(name)
    header = ["t", "mass"]
    cols = [traj.times, traj.mass]
    if traj.pressure_moment is not None:
        header.append("pressure_moment")
        cols.append(traj.pressure_moment)
        for j in range(d):
            for k in range(j, d):
                header.append(f"M_{j + 1}{k + 1}")
                cols.append(traj.stress_moment[:, j, k])
    write_csv(out / "steps.csv", header, zip(*[c.tolist() for c in cols]))
    names_d, table = traj.diagnostics_table()
    write_csv(out / "diagnostics.csv", names_d, table.tolist())
    write_json(out / "trajectory.json", {
        "grid": traj.grid.to_json(), "params": traj.params.to_json(),
        "pressure": traj.pressure.to_json(), "stepper": traj.config.to_json(),
        "snapshots": names, "aborted": traj.aborted, "wrap_max": traj.wrap_max,
        "wrap_flag": traj.wrap_flag,
    })


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    meta_file = path / "trajectory.json"
    if not meta_file.exists():
        raise FileNotFoundError(f"{path}: no trajectory.json (not a run directory)")
    meta = json.loads(meta_file.read_text())
    g = meta["grid"]
    grid = Grid(tuple(g["n"]), tuple(g["L"]))
    p = meta["params"]
    params = LinearParams(p["mu"], p["lambda"], p["kappa"])
    pressure = PressureModel(tuple(meta["pressure"]["coeffs"]), meta["pressure"]["radius"])
    sc = dict(meta["stepper"])
    if sc.get("snapshot_times") is not None:
        sc["snapshot_times"] = tuple(sc["snapshot_times"])
    config = StepperConfig(**sc)
    snaps = []
    for name in meta["snapshots"]:
        sg, t, comps = load_snapshot(path / "snapshots" / name)
        snaps.append(state_from_components(grid, t, comps))
    _, steps = read_csv(path / "steps.csv")
    d = grid.d
    pm = sm = None
    if "pressure_moment" in steps:
        pm = steps["pressure_moment"]
        sm = np.zeros((pm.size, d, d))
        for j in range(d):
            for k in range(j, d):
                sm[:, j, k] = sm[:, k, j] = steps[f"M_{j + 1}{k + 1}"]
    dh, diag = read_csv(path / "diagnostics.csv")
    records = {k: diag[k] for k in dh if k not in ("t", "mass")}
    return Trajectory(grid, params, pressure, config, steps["t"], steps["mass"], pm, sm, snaps,
                      diag["t"], records, meta.get("aborted"))

"""Empirical constants for the function-space inequalities.

Each registered inequality draws random band-limited fields, evaluates
the ratio LHS / RHS and reports the largest ratio seen.  A run passes
when the ratio is finite and the maximum over the second half of the
trials is within 5% of the maximum over the first half, i.e. the
constant has stopped growing.  No specific constant is asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .besov import (
    NormSpec,
    besov_norm,
    bilinear_Bt,
    dyadic_block,
    dyadic_heat_sum,
    fourier_lebesgue_norm,
    partition,
    riesz_potential,
)
from .grid import Grid, SpectralField, fftn, ifftn, random_field

STABILITY_FACTOR = 1.05


@dataclass
class HarnessReport:
    inequality: str
    trials: int
    max_ratio: float
    first_half_max: float
    second_half_max: float
    skipped: int
    passed: bool
    ratios: list[float] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "inequality": self.inequality, "trials": self.trials, "max_ratio": self.max_ratio,
            "first_half_max": self.first_half_max, "second_half_max": self.second_half_max,
            "skipped": self.skipped, "pass": self.passed, **self.extra,
        }


def sample_field(grid: Grid, rng: np.random.Generator) -> SpectralField:
    """Mean-free random real field with i.i.d. coefficients on |xi| <= (n/4 - 1) k0.

    The cap keeps products of two samples free of aliasing.  A homogeneous
    ensemble is used on purpose: the ratios then concentrate and the
    running maximum settles within a few hundred trials.
    """
    k0 = 2 * np.pi / max(grid.L)
    top = min(grid.n) // 4 - 1
    return random_field(grid, rng, band=(0.5 * k0, top * k0), dealiased=False)


def resolved_blocks(grid: Grid) -> list[int]:
    """Blocks whose whole support lies between 2 k0 and the per-axis Nyquist wavenumber."""
    k0 = 2 * np.pi / max(grid.L)
    kn = min(n / 2 * 2 * np.pi / L for n, L in zip(grid.n, grid.L))
    out = [j for j in partition(grid).blocks if 1.1 * 2.0**j >= 2 * k0 and 3.8 * 2.0**j <= kn]
    if not out:
        raise ValueError("grid too small for a fully resolved dyadic block")
    return out


def exact_product(f: SpectralField, g: SpectralField) -> SpectralField:
    return SpectralField(f.grid, fftn(ifftn(f.coeffs) * ifftn(g.coeffs)))


# --- the inequalities ----------------------------------------------------------
# each takes (grid, rng, params) and returns (lhs, rhs)

def _bernstein(grid, rng, prm):
    p = prm.get("p", 2.0)
    blocks = resolved_blocks(grid)
    j = blocks[int(rng.integers(len(blocks)))]
    fj = dyadic_block(random_field(grid, rng, dealiased=False), j)
    return fourier_lebesgue_norm(riesz_potential(fj, 1.0), p), 2.0**j * fourier_lebesgue_norm(fj, p)


def _banach_ring(grid, rng, prm):
    p = prm.get("p", 2.0)
    spec = NormSpec(grid.d / p, p, 1.0)
    f, g = sample_field(grid, rng), sample_field(grid, rng)
    return besov_norm(exact_product(f, g), spec), besov_norm(f, spec) * besov_norm(g, spec)


def _bilinear_neg(grid, rng, prm):
    p = prm.get("p", 2.0)
    sigma = prm.get("sigma", 1.0)
    d = grid.d
    if d < 3 or not (1 <= p < d):
        raise ValueError("the negative-index bilinear estimate needs d >= 3 and 1 <= p < d")
    low = NormSpec(-2 + d / p, p, sigma)
    top = NormSpec(d / p, p, math.inf)
    f, g = sample_field(grid, rng), sample_field(grid, rng)
    # homogeneous norms with negative index need mean-free data
    f = SpectralField(grid, np.where(grid.xi_sq > 0, f.coeffs, 0.0))
    g = SpectralField(grid, np.where(grid.xi_sq > 0, g.coeffs, 0.0))
    lhs = besov_norm(exact_product(f, g), low)
    rhs = besov_norm(f, low) * besov_norm(g, top) + besov_norm(f, top) * besov_norm(g, low)
    return lhs, rhs


def _bilinear(grid, rng, prm):
    s = prm.get("s", 1.0)
    p = prm.get("p", 2.0)
    spec = NormSpec(s, p, prm.get("sigma", 1.0))
    f, g = sample_field(grid, rng), sample_field(grid, rng)
    inf = lambda h: fourier_lebesgue_norm(h, math.inf)
    lhs = besov_norm(exact_product(f, g), spec)
    return lhs, inf(f) * besov_norm(g, spec) + besov_norm(f, spec) * inf(g)


def _product(grid, rng, prm):
    p = prm.get("p", 2.0)
    s = prm.get("s", 0.5)
    spec = NormSpec(s, p, prm.get("sigma", 1.0))
    f, g = sample_field(grid, rng), sample_field(grid, rng)
    if s <= 0:
        f = SpectralField(grid, np.where(grid.xi_sq > 0, f.coeffs, 0.0))
    gnorm = fourier_lebesgue_norm(g, math.inf) + besov_norm(g, NormSpec(grid.d / p, p, math.inf))
    return besov_norm(exact_product(f, g), spec), besov_norm(f, spec) * gnorm


def _bt_holder(grid, rng, prm):
    # exp(sqrt(c0 t)|xi|) amplifies FFT round-off; keep the exponent moderate
    c0 = prm.get("c0", 0.01)
    times = prm.get("times", (0.0, 1.0, 10.0))
    t = float(times[int(rng.integers(len(times)))])
    f, g = sample_field(grid, rng), sample_field(grid, rng)
    lhs = fourier_lebesgue_norm(bilinear_Bt(f, g, t, c0, dealiased=False), 1.0)
    return lhs, fourier_lebesgue_norm(f, 2.0) * fourier_lebesgue_norm(g, 2.0)


def _embedding(grid, rng, prm):
    s = prm.get("s", 0.5)
    p1, p2 = prm.get("p1", 1.5), prm.get("p2", 2.0)
    s1, s2 = prm.get("sigma1", 1.0), prm.get("sigma2", 2.0)
    f = sample_field(grid, rng)
    lhs = besov_norm(f, NormSpec(s - grid.d * (1 / p1 - 1 / p2), p2, s2))
    return lhs, besov_norm(f, NormSpec(s, p1, s1))


def _cineq(grid, rng, prm):
    sigma = prm.get("sigma", 1.0)
    delta0 = prm.get("delta0", 1.0)
    t = 10.0 ** rng.uniform(-6, 6)
    return dyadic_heat_sum(t, sigma, delta0), 1.0


INEQUALITIES: dict[str, Callable] = {
    "bernstein": _bernstein,
    "banach_ring": _banach_ring,
    "bilinear_neg": _bilinear_neg,
    "bilinear": _bilinear,
    "product": _product,
    "bt_holder": _bt_holder,
    "embedding": _embedding,
    "cineq": _cineq,
}

# harness default grids: the negative-index estimate is a d >= 3 statement
DEFAULT_GRIDS = {name: (2, 64) for name in INEQUALITIES}
DEFAULT_GRIDS["bilinear_neg"] = (3, 24)


def inequality_harness(name: str, trials: int = 200, seed: int = 0, grid: Grid | None = None,
                       **params) -> HarnessReport:
    if name not in INEQUALITIES:
        raise ValueError(f"unknown inequality {name!r}; known: {sorted(INEQUALITIES)}")
    if trials < 2:
        raise ValueError("need at least two trials")
    if grid is None:
        d, n = DEFAULT_GRIDS[name]
        grid = Grid.cube(d, n, 2 * np.pi)
    rng = np.random.default_rng(seed)
    fn = INEQUALITIES[name]
    ratios = []
    skipped = 0
    while len(ratios) < trials:
        lhs, rhs = fn(grid, rng, params)
        if rhs == 0:
            # degenerate sample (0/0): not counted
            skipped += 1
            if skipped > 10 * trials:
                raise RuntimeError("too many degenerate trials")
            continue
        ratios.append(lhs / rhs)
    r = np.array(ratios)
    half = trials // 2
    first, second = float(r[:half].max()), float(r[half:].max())
    finite = bool(np.all(np.isfinite(r)))
    ok = finite and second <= STABILITY_FACTOR * first
    extra = {}
    if name == "bernstein":
        extra["min_ratio"] = float(r.min())
    return HarnessReport(name, trials, float(r.max()), first, second, skipped, ok, r.tolist(), extra)

"""Empirical scaling of ``E[sup_t |X^x_t - X^y_t|^p]`` in the gap ``|x - y|``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drift import Drift
from .greeks import map_blocks
from .kernel import as_hurst
from .noise import MixSpec, NoMix, TimeGrid, sample_block
from .sde import euler_solve

__all__ = ["StabilityScan", "StabilityRow", "StabilityTable", "stability_scan", "fit_slope"]


@dataclass(frozen=True)
class StabilityScan:
    """Paired runs from ``x`` and ``x + gap`` on common noise.

    ``p`` must be a power of two and every pair must lie in ``cube``.
    """

    drift: Drift
    H: float = 0.1
    p: int = 2
    x: float = 0.0
    gaps: tuple = (1e-1, 1e-2, 1e-3)
    n_paths: int = 10_000
    seed: int = 0
    grid: TimeGrid = field(default_factory=TimeGrid)
    mix: MixSpec = field(default_factory=NoMix)
    cube: tuple = (-10.0, 10.0)
    sign: float = 1.0

    def __post_init__(self):
        as_hurst(self.H)
        p = int(self.p)
        if p != self.p or p < 2 or p & (p - 1):
            raise ValueError(f"moment order must be 2^r with r >= 1, got {self.p!r}")
        gaps = tuple(float(g) for g in self.gaps)
        if any(g <= 0 for g in gaps) or any(b >= a for a, b in zip(gaps, gaps[1:])):
            raise ValueError("gaps must be positive and strictly decreasing")
        lo, hi = self.cube
        if not (lo <= self.x and self.x + gaps[0] <= hi):
            raise ValueError("initial pairs must lie inside the cube")
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class StabilityRow:
    gap: float
    moment: float
    stderr: float


@dataclass(frozen=True)
class StabilityTable:
    rows: tuple
    slope: float
    slope_stderr: float
    p: int


def fit_slope(gaps, moments):
    """Least-squares slope of ``log moment`` on ``log gap`` and its standard error."""
    x = np.log(np.asarray(gaps, dtype=float))
    y = np.log(np.asarray(moments, dtype=float))
    if x.size < 3:
        raise ValueError("slope fit needs at least three gap levels")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof
    se = float(np.sqrt(s2 / np.sum((x - x.mean()) ** 2)))
    return float(coef[0]), se


def stability_scan(scan: StabilityScan, threads: int = 1) -> StabilityTable:
    """Monte Carlo moments per gap and the fitted log-log slope."""
    if len(scan.gaps) < 3:
        raise ValueError("slope fit needs at least three gap levels")
    grid = scan.grid

    def block(b, size):
        nb = sample_block(grid, scan.H, b, scan.seed, scan.mix, size=size)
        base = euler_solve(scan.drift, nb, scan.x, sign=scan.sign).X
        out = []
        for gap in scan.gaps:
            other = euler_solve(scan.drift, nb, scan.x + gap, sign=scan.sign).X
            out.append(np.max(np.abs(other - base), axis=1) ** scan.p)
        return tuple(out)

    sups = map_blocks(block, scan.n_paths, threads)
    rows = tuple(
        StabilityRow(gap, float(np.mean(s)), float(np.std(s, ddof=1) / np.sqrt(s.size)))
        for gap, s in zip(scan.gaps, sups)
    )
    slope, se = fit_slope([r.gap for r in rows], [r.moment for r in rows])
    return StabilityTable(rows, slope, se, scan.p)

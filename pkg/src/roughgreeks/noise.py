"""Joint sampling of the fBm driver B, the fBm itself and an independent W.

The fBm is built from the increments of ``B`` through the cell-averaged
Volterra kernel matrix, so Malliavin weights can integrate against the
same ``B``. A Gaussian residual, independent of ``B`` and ``W``, tops up
the variance the cell projection misses and makes the fBm law exact on
the grid.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .kernel import (
    _kernel_times_gap,
    _kernel_times_origin,
    as_hurst,
    covariance_R,
    gauss_legendre01,
)

__all__ = [
    "BLOCK_SIZE",
    "TimeGrid",
    "MixSpec",
    "NoMix",
    "Correlated",
    "Scaled",
    "NoiseBundle",
    "FactorizationError",
    "block_rng",
    "kernel_matrix",
    "residual_factor",
    "sample_block",
    "sample_bundle",
    "wiener_paths",
    "fbm_cholesky",
    "fbm_circulant",
]

# paths per RNG block; part of the reproducibility contract
BLOCK_SIZE = 256


class FactorizationError(ArithmeticError):
    """A covariance matrix could not be factorised."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i*T/N`` on ``[0, T]``."""

    T: float = 1.0
    N: int = 256

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"grid needs N >= 2 steps, got {self.N!r}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon must be positive, got {self.T!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def delta(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.delta


class MixSpec:
    """How the fBm and the independent Wiener path are combined."""

    def combine(self, BH, W):
        return None


@dataclass(frozen=True)
class NoMix(MixSpec):
    pass


@dataclass(frozen=True)
class Correlated(MixSpec):
    """``sqrt(1-rho^2) BH + rho W``."""

    rho: float

    def __post_init__(self):
        if not (-1.0 < self.rho < 1.0):
            raise ValueError(f"correlation must lie in (-1, 1), got {self.rho}")

    def combine(self, BH, W):
        if self.rho == 0.0:
            return BH.copy()
        return np.sqrt(1.0 - self.rho**2) * BH + self.rho * W


@dataclass(frozen=True)
class Scaled(MixSpec):
    """``rho1 BH + rho2 W`` with ``rho1 != 0``."""

    rho1: float
    rho2: float

    def __post_init__(self):
        if self.rho1 == 0.0:
            raise ValueError("rho1 must be nonzero so the fractional part is present")

    def combine(self, BH, W):
        return self.rho1 * BH + self.rho2 * W


@dataclass(frozen=True)
class NoiseBundle:
    """Paths on a common grid; every array has shape ``(n_paths, N+1)``."""

    grid: TimeGrid
    B: np.ndarray
    BH: np.ndarray
    W: np.ndarray
    mixed: np.ndarray | None
    seed: int
    mix: MixSpec = field(default_factory=NoMix)
    H: float | None = None

    @property
    def n_paths(self) -> int:
        return self.B.shape[0]

    @property
    def driver(self) -> np.ndarray:
        """Noise seen by the SDE: the mixed path if present, else the fBm."""
        return self.BH if self.mixed is None else self.mixed

    @property
    def dB(self) -> np.ndarray:
        return np.diff(self.B, axis=-1)

    @property
    def dW(self) -> np.ndarray:
        return np.diff(self.W, axis=-1)

    def with_BH(self, BH) -> "NoiseBundle":
        """Copy with the fBm path replaced and the mixed path recomputed."""
        BH = np.broadcast_to(np.asarray(BH, dtype=float), self.B.shape).copy()
        return replace(self, BH=BH, mixed=self.mix.combine(BH, self.W))

    @classmethod
    def frozen(cls, grid: TimeGrid, n_paths: int = 1, mix: MixSpec | None = None) -> "NoiseBundle":
        """All-zero noise, for deterministic tests."""
        mix = NoMix() if mix is None else mix
        z = np.zeros((n_paths, grid.N + 1))
        return cls(grid, z, z.copy(), z.copy(), mix.combine(z, z), seed=0, mix=mix)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of paths."""
    return np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, int(block)]))


@functools.lru_cache(maxsize=16)
def _kernel_matrix_cached(T: float, N: int, h: float, m: int) -> np.ndarray:
    d = T / N
    t = np.arange(N + 1) * d
    g = h + 0.5
    Kb = np.zeros((N + 1, N + 1))
    # interior cells: v = (t_i - s)^g turns K ds into a bounded integrand;
    # cells far from the diagonal are smooth and take a short rule
    I, J = np.tril_indices(N + 1, -1)
    keep = J > 0
    I, J = I[keep], J[keep]
    near = (I - J) <= 8
    for sel, (x, w) in ((near, gauss_legendre01(m)), (~near, gauss_legendre01(max(4, m // 3)))):
        Is, Js = I[sel], J[sel]
        chunk = 1 << 18
        for c in range(0, Is.size, chunk):
            Ic, Jc = Is[c : c + chunk], Js[c : c + chunk]
            ti = t[Ic]
            va = (ti - t[Jc + 1]) ** g
            vb = (ti - t[Jc]) ** g
            v = va[:, None] + (vb - va)[:, None] * x[None, :]
            s = ti[:, None] - v ** (1.0 / g)
            Kb[Ic, Jc] = np.sum(_kernel_times_gap(h, ti[:, None], s) / g * w, axis=1) * (vb - va) / d
    x, w = gauss_legendre01(m)
    # first column: u = top*y^{1/g} absorbs the singularity at the origin
    for i in range(1, N + 1):
        top = d if i > 1 else d / 2
        u = np.maximum(top * x ** (1.0 / g), 1e-300)
        val = np.sum(_kernel_times_origin(h, t[i], u) * w) * top**g / g
        if i == 1:
            L = d / 2
            s = t[1] - L * x ** (1.0 / g)
            val += np.sum(_kernel_times_gap(h, t[1], s) * w) * L**g / g
        Kb[i, 0] = val / d
    Kb.flags.writeable = False
    return Kb


def kernel_matrix(grid: TimeGrid, H, n_gauss: int = 16) -> np.ndarray:
    """Cell-averaged kernel ``Kbar[i, j] = (1/delta) int_{t_j}^{t_{j+1}} K(t_i, s) ds``.

    Shape ``(N+1, N+1)``, strictly lower triangular, cached and read-only.
    """
    return _kernel_matrix_cached(grid.T, grid.N, as_hurst(H).h, n_gauss)


@functools.lru_cache(maxsize=16)
def _residual_cached(T: float, N: int, h: float) -> np.ndarray:
    grid = TimeGrid(T, N)
    t = grid.nodes[1:]
    Kb = kernel_matrix(grid, h)[1:, :N]
    C = covariance_R(h, t[:, None], t[None, :]) - grid.delta * Kb @ Kb.T
    C = 0.5 * (C + C.T)
    lam, V = np.linalg.eigh(C)
    L = np.zeros((N + 1, N + 1))
    L[1:, 1:] = V * np.sqrt(np.clip(lam, 0.0, None))
    L.flags.writeable = False
    return L


def residual_factor(grid: TimeGrid, H) -> np.ndarray:
    """Factor ``L`` with ``L L^T = R - delta Kbar Kbar^T`` on the nodes.

    Eigenvalues below zero (rounding only) are clipped.
    """
    return _residual_cached(grid.T, grid.N, as_hurst(H).h)


def sample_block(grid: TimeGrid, H, block: int, seed: int, mix: MixSpec | None = None,
                 exact: bool = True, size: int = BLOCK_SIZE) -> NoiseBundle:
    """Sample one RNG block; ``size`` only truncates the fixed-size draw."""
    mix = NoMix() if mix is None else mix
    N, d = grid.N, grid.delta
    rng = block_rng(seed, block)
    dB = rng.standard_normal((BLOCK_SIZE, N)) * np.sqrt(d)
    dW = rng.standard_normal((BLOCK_SIZE, N)) * np.sqrt(d)
    Z = rng.standard_normal((BLOCK_SIZE, N))
    dB, dW, Z = dB[:size], dW[:size], Z[:size]
    B = np.zeros((size, N + 1))
    W = np.zeros((size, N + 1))
    np.cumsum(dB, axis=1, out=B[:, 1:])
    np.cumsum(dW, axis=1, out=W[:, 1:])
    BH = dB @ kernel_matrix(grid, H)[:, :N].T
    if exact:
        BH[:, 1:] += Z @ residual_factor(grid, H)[1:, 1:].T
    return NoiseBundle(grid, B, BH, W, mix.combine(BH, W), int(seed), mix, as_hurst(H).h)


def sample_bundle(grid: TimeGrid, H, mix: MixSpec | None = None, seed: int = 0,
                  n_paths: int = 1, exact: bool = True) -> NoiseBundle:
    """Sample ``n_paths`` joint paths of ``(B, BH, W, mixed)``.

    Path ``k`` lives in block ``k // BLOCK_SIZE``, so any prefix of paths is
    reproducible on its own. With ``exact=False`` the fBm is the pure
    kernel projection of ``B``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    mix = NoMix() if mix is None else mix
    nb = -(-n_paths // BLOCK_SIZE)
    parts = [
        sample_block(grid, H, b, seed, mix, exact, min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE))
        for b in range(nb)
    ]
    if nb == 1:
        return parts[0]
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
    mixed = None if parts[0].mixed is None else cat("mixed")
    return NoiseBundle(grid, cat("B"), cat("BH"), cat("W"), mixed, int(seed), mix, as_hurst(H).h)


def wiener_paths(grid: TimeGrid, seed: int, n_paths: int = 1):
    """``(B, W)`` exactly as :func:`sample_bundle` draws them, without the fBm."""
    N, d = grid.N, grid.delta
    Bs, Ws = [], []
    for b in range(-(-n_paths // BLOCK_SIZE)):
        size = min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE)
        rng = block_rng(seed, b)
        Bs.append(rng.standard_normal((BLOCK_SIZE, N))[:size] * np.sqrt(d))
        Ws.append(rng.standard_normal((BLOCK_SIZE, N))[:size] * np.sqrt(d))
    out = []
    for parts in (Bs, Ws):
        P = np.zeros((n_paths, N + 1))
        np.cumsum(np.concatenate(parts), axis=1, out=P[:, 1:])
        out.append(P)
    return tuple(out)


def fbm_cholesky(grid: TimeGrid, H, seed: int, n_paths: int = 1) -> np.ndarray:
    """Exact fBm samples on the grid from a Cholesky factor of ``R_H``.

    Returns shape ``(n_paths, N+1)`` with a zero first column.
    """
    if grid.N > 4096:
        raise ValueError("Cholesky sampler limited to N <= 4096")
    t = grid.nodes[1:]
    C = covariance_R(H, t[:, None], t[None, :])
    try:
        L = scipy.linalg.cholesky(C + 1e-12 * np.eye(grid.N), lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(str(exc)) from exc
    rng = np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, 2**63]))
    out = np.zeros((n_paths, grid.N + 1))
    out[:, 1:] = rng.standard_normal((n_paths, grid.N)) @ L.T
    return out


def fbm_circulant(grid: TimeGrid, H, seed: int, n_paths: int = 1) -> np.ndarray:
    """fBm by circulant embedding of fractional Gaussian noise (FFT).

    Exact for ``H < 1/2``, where the embedding is nonnegative definite.
    Exposes no driving Wiener path, so it is not used for Greeks.
    """
    h = as_hurst(H).h
    N = grid.N
    k = np.arange(N + 1, dtype=float)
    gam = 0.5 * ((k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h))
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise FactorizationError("circulant embedding is not nonnegative definite")
    lam = np.clip(lam, 0.0, None)
    M = row.size
    rng = np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, 2**63 + 1]))
    z = rng.standard_normal((n_paths, M)) + 1j * rng.standard_normal((n_paths, M))
    fgn = np.fft.fft(np.sqrt(lam / M) * z, axis=1).real[:, :N]
    out = np.zeros((n_paths, N + 1))
    np.cumsum(fgn * grid.delta**h, axis=1, out=out[:, 1:])
    return out

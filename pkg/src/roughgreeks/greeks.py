"""Monte Carlo Greeks: Malliavin (BEL) weights, finite differences and
Girsanov diagnostics.

Paths are processed in fixed RNG blocks and reduced in block order, so
results do not depend on the number of worker threads.
"""
from __future__ import annotations

import enum
import functools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats
from scipy.special import betainc, betaln

from .drift import CapabilityError, Drift, IntegrableBump
from .kernel import Regime, as_hurst, big_C_h, gauss_legendre01, k_h_inverse_ac
from .model import PlainExp, StockModelParams, simulate_model
from .noise import BLOCK_SIZE, Correlated, NoiseBundle, NoMix, TimeGrid, sample_block
from .sde import euler_solve, first_variation_euler, first_variation_exp

__all__ = [
    "Estimator",
    "Component",
    "RegimeWarning",
    "WeightFn",
    "Payoff",
    "GreeksEstimate",
    "map_blocks",
    "bel_kernel_matrix",
    "fractional_inner_integral",
    "fractional_double_integral",
    "fractional_double_integral_naive",
    "bel_weight_plain",
    "bel_delta_sde",
    "fd_delta_sde",
    "bel_greeks_model",
    "fd_greeks",
    "girsanov_kernel",
    "girsanov_density",
    "girsanov_mean",
    "exp_moment_estimate",
    "bs_call_delta",
]


class Estimator(str, enum.Enum):
    BEL = "BEL"
    FD = "FD"


class Component(str, enum.Enum):
    DELTA_X = "Delta_x"
    DELTA_X1 = "Delta_x1"
    DELTA_X2 = "Delta_x2"


class RegimeWarning(UserWarning):
    """Hurst index outside the regime where the weight formula is proven."""


@dataclass(frozen=True)
class WeightFn:
    """Bounded ``a`` on ``[0, T]`` with unit integral."""

    a: Callable
    T: float = 1.0

    def __post_init__(self):
        total, _ = integrate.quad(lambda s: float(self.a(s)), 0.0, self.T, limit=200, epsabs=1e-13, epsrel=1e-13)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"weight function must integrate to 1 over [0, T], got {total!r}")

    @classmethod
    def constant(cls, T: float = 1.0) -> "WeightFn":
        return cls(lambda s: np.full_like(np.asarray(s, dtype=float), 1.0 / T), T)

    def cell_averages(self, grid: TimeGrid) -> np.ndarray:
        if abs(grid.T - self.T) > 1e-12 * self.T:
            raise ValueError("weight function horizon differs from the grid")
        x, w = gauss_legendre01(8)
        s = grid.nodes[:-1, None] + grid.delta * x[None, :]
        return np.asarray(self.a(s), dtype=float) @ w


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff; ``fn(x)`` or, if ``uses_sigma``, ``fn(x, sigma)``."""

    fn: Callable
    name: str = "payoff"
    square_integrability_note: str = ""
    uses_sigma: bool = False

    def __call__(self, x, sigma=None):
        if self.uses_sigma:
            return np.asarray(self.fn(x, sigma), dtype=float)
        return np.asarray(self.fn(x), dtype=float) * np.ones_like(np.asarray(x, dtype=float))

    @classmethod
    def call(cls, K: float) -> "Payoff":
        return cls(lambda x: np.maximum(x - K, 0.0), f"call:{K:g}", "linear growth")

    @classmethod
    def put(cls, K: float) -> "Payoff":
        return cls(lambda x: np.maximum(K - x, 0.0), f"put:{K:g}", "bounded")

    @classmethod
    def digital(cls, K: float) -> "Payoff":
        return cls(lambda x: (np.asarray(x) > K).astype(float), f"digital:{K:g}", "bounded")

    @classmethod
    def identity(cls) -> "Payoff":
        return cls(lambda x: np.asarray(x, dtype=float), "identity", "linear growth")

    @classmethod
    def square(cls) -> "Payoff":
        return cls(lambda x: np.asarray(x, dtype=float) ** 2, "square", "quadratic growth")

    @classmethod
    def constant(cls, c: float = 1.0) -> "Payoff":
        return cls(lambda x: np.full_like(np.asarray(x, dtype=float), c), f"constant:{c:g}", "bounded")

    @classmethod
    def parse(cls, spec: str) -> "Payoff":
        """Parse ``call:K``, ``put:K``, ``digital:K``, ``identity`` or ``square``."""
        kind, _, arg = spec.partition(":")
        kind = kind.strip().lower()
        if kind in ("call", "put", "digital"):
            try:
                return getattr(cls, kind)(float(arg))
            except ValueError:
                raise ValueError(f"payoff {spec!r} needs a numeric strike") from None
        if kind in ("identity", "square") and not arg:
            return getattr(cls, kind)()
        raise ValueError(f"unknown payoff {spec!r}")


@dataclass(frozen=True)
class GreeksEstimate:
    value: float
    std_error: float
    n_paths: int
    estimator: Estimator
    component: Component
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + level / 2)
        return self.value - z * self.std_error, self.value + z * self.std_error

    @classmethod
    def from_samples(cls, samples, estimator, component) -> "GreeksEstimate":
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise ValueError("need at least two paths")
        return cls(float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size)), int(x.size),
                   Estimator(estimator), Component(component), x)

    def paired_difference(self, other: "GreeksEstimate") -> tuple[float, float]:
        """Mean and standard error of ``self - other`` path by path.

        Both estimates must come from the same seed and path count.
        """
        if self.samples is None or other.samples is None or self.samples.shape != other.samples.shape:
            raise ValueError("paired difference needs per-path samples of equal length")
        d = self.samples - other.samples
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))


def map_blocks(fn, n_paths: int, threads: int = 1):
    """Apply ``fn(block, size)`` over RNG blocks and concatenate in block order.

    ``fn`` returns an array or a tuple of arrays with leading length ``size``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    nb = -(-n_paths // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE) for b in range(nb)]
    if threads > 1 and nb > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(fn, range(nb), sizes))
    else:
        parts = [fn(b, s) for b, s in zip(range(nb), sizes)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


# fractional weight kernel -----------------------------------------------

@functools.lru_cache(maxsize=8)
def _bel_unit_matrix(N: int, h: float, m: int) -> np.ndarray:
    # unit grid; data is piecewise constant on cells [k, k+1]
    A, Bp = 1.5 - h, 0.5 - h
    BB = np.exp(betaln(A, Bp))
    # s = t_i + y^2 smooths the (s - t_i)^{1/2-H} endpoint behaviour
    y, wy = gauss_legendre01(m)
    x, w = y * y, 2 * y * wy
    t = np.arange(N + 1, dtype=float)
    M = np.zeros((N, N))
    for i in range(N):
        s = t[i] + x
        e = np.minimum(t[None, : i + 2], s[:, None]) / s[:, None]
        Wk = s[:, None] ** (1 - 2 * h) * BB * np.diff(betainc(A, Bp, e), axis=1)
        M[i, : i + 1] = np.sum(w[:, None] * s[:, None] ** (h - 0.5) * Wk, axis=0)
    M.flags.writeable = False
    return M


def bel_kernel_matrix(grid: TimeGrid, H, n_gauss: int = 16) -> np.ndarray:
    """Matrix ``M`` with cell average of ``s^{H-1/2} Q(s)`` on cell ``i`` equal to
    ``sum_k M[i, k] d_k`` for piecewise-constant data ``d``.

    ``Q(s) = int_0^s (s-r)^{-H-1/2} r^{1/2-H} d(r) dr`` is integrated exactly
    in ``r`` through incomplete Beta functions.
    """
    h = as_hurst(H).h
    return grid.delta ** (0.5 - h) * _bel_unit_matrix(grid.N, h, n_gauss)


def fractional_inner_integral(grid: TimeGrid, H, data) -> np.ndarray:
    """``Q(t_i)`` at the nodes for piecewise-constant ``data`` (length N per path)."""
    h = as_hurst(H).h
    A, Bp = 1.5 - h, 0.5 - h
    t = grid.nodes
    data = np.asarray(data, dtype=float)
    out = np.zeros(data.shape[:-1] + (grid.N + 1,))
    BB = np.exp(betaln(A, Bp))
    for i in range(1, grid.N + 1):
        Wk = t[i] ** (1 - 2 * h) * BB * np.diff(betainc(A, Bp, t[: i + 1] / t[i]))
        out[..., i] = data[..., :i] @ Wk
    return out


def fractional_double_integral(grid: TimeGrid, H, data, dB) -> np.ndarray:
    """``sum_i [cell average of s^{H-1/2} Q(s)]_i dB_i`` per path (no constant)."""
    M = bel_kernel_matrix(grid, H)
    return np.einsum("...i,...i->...", np.asarray(data, dtype=float) @ M.T, dB)


def fractional_double_integral_naive(grid: TimeGrid, H, data, dB) -> np.ndarray:
    """Same sum, ordered as the original double integral: outer over the
    inner-variable cells, stochastic sum inside."""
    M = bel_kernel_matrix(grid, H)
    data = np.asarray(data, dtype=float)
    dB = np.asarray(dB, dtype=float)
    total = np.zeros(np.broadcast_shapes(data.shape[:-1], dB.shape[:-1]))
    for k in range(grid.N):
        inner = np.zeros_like(total)
        for i in range(k, grid.N):
            inner = inner + M[i, k] * dB[..., i]
        total = total + data[..., k] * inner
    return total


def bel_weight_plain(H, a: WeightFn, J, B, grid: TimeGrid | None = None, check_regime: bool = True):
    """Malliavin weight ``C_H * sum_i [s^{H-1/2} Q]_i dB_i`` with data ``a J``.

    ``J`` and ``B`` have shape ``(..., N+1)``; ``J`` enters through its
    left-node values on each cell.
    """
    hp = as_hurst(H)
    if check_regime and hp.regime is Regime.GENERAL:
        warnings.warn(f"H={hp.h} >= 1/6: weight formula not covered in one dimension", RegimeWarning,
                      stacklevel=2)
    J = np.asarray(J, dtype=float)
    B = np.asarray(B, dtype=float)
    if grid is None:
        grid = TimeGrid(a.T, B.shape[-1] - 1)
    if J.shape[-1] != grid.N + 1 or B.shape[-1] != grid.N + 1:
        raise ValueError("J and B must live on the weight grid")
    data = a.cell_averages(grid) * J[..., :-1]
    return big_C_h(hp) * fractional_double_integral(grid, hp, data, np.diff(B, axis=-1))


def _first_variation(drift: Drift, path, route: str):
    if route == "exp":
        return first_variation_exp(drift, path)
    if route == "secant":
        return first_variation_exp(drift, path, rule="secant")
    if route == "euler":
        return first_variation_euler(drift, path)
    raise ValueError(f"unknown first-variation route {route!r}")


def bel_delta_sde(drift: Drift, H, x: float, payoff: Payoff, a: WeightFn | None = None,
                  n_paths: int = 10_000, seed: int = 0, grid: TimeGrid | None = None,
                  threads: int = 1, sign: float = 1.0, route: str = "exp",
                  check_regime: bool = True) -> GreeksEstimate:
    """``d/dx E[payoff(X_T)]`` for ``dX = b dt + dBH`` via the Malliavin weight."""
    hp = as_hurst(H)
    grid = TimeGrid() if grid is None else grid
    a = WeightFn.constant(grid.T) if a is None else a
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if not drift.has_derivative:
        raise CapabilityError("plain-SDE weight needs a drift derivative; mollify the drift first")
    if check_regime and hp.regime is Regime.GENERAL:
        warnings.warn(f"H={hp.h} >= 1/6: weight formula not covered in one dimension", RegimeWarning,
                      stacklevel=2)

    def block(b, size):
        nb = sample_block(grid, hp, b, seed, NoMix(), size=size)
        path = euler_solve(drift, nb, x, sign=sign)
        J = _first_variation(drift, path, route)
        w = bel_weight_plain(hp, a, J, nb.B, grid, check_regime=False)
        return payoff(path.X[:, -1]) * w

    return GreeksEstimate.from_samples(map_blocks(block, n_paths, threads), Estimator.BEL, Component.DELTA_X)


def fd_delta_sde(drift: Drift, H, x: float, payoff: Payoff, h: float | None = None,
                 n_paths: int = 10_000, seed: int = 0, grid: TimeGrid | None = None,
                 threads: int = 1, sign: float = 1.0) -> GreeksEstimate:
    """Central difference with common random numbers."""
    hp = as_hurst(H)
    grid = TimeGrid() if grid is None else grid
    h = 1e-2 * max(1.0, abs(x)) if h is None else float(h)
    if not h > 0:
        raise ValueError("bump size must be positive")

    def block(b, size):
        nb = sample_block(grid, hp, b, seed, NoMix(), size=size)
        up = euler_solve(drift, nb, x + h, sign=sign).X[:, -1]
        dn = euler_solve(drift, nb, x - h, sign=sign).X[:, -1]
        return (payoff(up) - payoff(dn)) / (2 * h)

    return GreeksEstimate.from_samples(map_blocks(block, n_paths, threads), Estimator.FD, Component.DELTA_X)


# stock model ----------------------------------------------------------------

def _model_weights(params: StockModelParams, paths, a: WeightFn, H):
    """Per-path weights ``(w1, w2)`` of the two-component formula."""
    grid = paths.grid
    rho = params.rho
    c = rho / np.sqrt(1 - rho**2)
    g, _ = params.g.evaluate(paths.sigma[:, :-1])
    Sg = paths.S[:, :-1] * g
    av = a.cell_averages(grid)
    dW = paths.noise.dW
    dB = paths.noise.dB
    CH = big_C_h(H)
    z1 = paths.dS_dx1[:, :-1] / Sg
    z2 = paths.dS_dx2[:, :-1] / Sg
    w1 = np.sum(av * z1 * dW, axis=1)
    w2 = np.sum(av * z2 * dW, axis=1)
    if rho != 0:
        w1 = w1 - CH * fractional_double_integral(grid, H, av * c * z1, dB)
    Z2 = -c * z2 + paths.dsigma_dx2[:, :-1] / np.sqrt(1 - rho**2)
    w2 = w2 + CH * fractional_double_integral(grid, H, av * Z2, dB)
    return w1, w2


def _check_model(params: StockModelParams):
    if isinstance(params.g, PlainExp) or not params.g.square_integrable:
        raise CapabilityError("unbounded volatility map is not supported by the estimators")


def bel_greeks_model(params: StockModelParams, x1: float, x2: float, payoff: Payoff,
                     a: WeightFn | None = None, n_paths: int = 10_000, seed: int = 0, H=0.1,
                     grid: TimeGrid | None = None, threads: int = 1, route: str = "auto",
                     check_regime: bool = True):
    """Delta in the initial stock price and in the initial volatility level.

    Returns ``(Delta_x1, Delta_x2)`` estimates.
    """
    _check_model(params)
    hp = as_hurst(H)
    grid = TimeGrid() if grid is None else grid
    a = WeightFn.constant(grid.T) if a is None else a
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if check_regime and hp.h >= 1.0 / 8.0:
        warnings.warn(f"H={hp.h} >= 1/8: model weight formula not covered", RegimeWarning, stacklevel=2)
    mix = Correlated(params.rho)

    def block(b, size):
        nb = sample_block(grid, hp, b, seed, mix, size=size)
        paths = simulate_model(params, nb, x1, x2, first_variation=route)
        w1, w2 = _model_weights(params, paths, a, hp)
        phi = payoff(paths.S[:, -1], paths.sigma[:, -1])
        return phi * w1, phi * w2

    s1, s2 = map_blocks(block, n_paths, threads)
    return (GreeksEstimate.from_samples(s1, Estimator.BEL, Component.DELTA_X1),
            GreeksEstimate.from_samples(s2, Estimator.BEL, Component.DELTA_X2))


def fd_greeks(params: StockModelParams, x1: float, x2: float, payoff: Payoff, h: float | None = None,
              n_paths: int = 10_000, seed: int = 0, H=0.1, grid: TimeGrid | None = None,
              threads: int = 1):
    """Central differences in ``x1`` and ``x2`` with common random numbers."""
    hp = as_hurst(H)
    grid = TimeGrid() if grid is None else grid
    h1 = 1e-2 * abs(x1) if h is None else float(h)
    h2 = 1e-2 * max(1.0, abs(x2)) if h is None else float(h)
    if not (h1 > 0 and h2 > 0):
        raise ValueError("bump size must be positive")
    mix = Correlated(params.rho)

    def value(nb, y1, y2):
        p = simulate_model(params, nb, y1, y2, first_variation=None)
        return payoff(p.S[:, -1], p.sigma[:, -1])

    def block(b, size):
        nb = sample_block(grid, hp, b, seed, mix, size=size)
        d1 = (value(nb, x1 + h1, x2) - value(nb, x1 - h1, x2)) / (2 * h1)
        d2 = (value(nb, x1, x2 + h2) - value(nb, x1, x2 - h2)) / (2 * h2)
        return d1, d2

    s1, s2 = map_blocks(block, n_paths, threads)
    return (GreeksEstimate.from_samples(s1, Estimator.FD, Component.DELTA_X1),
            GreeksEstimate.from_samples(s2, Estimator.FD, Component.DELTA_X2))


def bs_call_delta(x1: float, K: float, sigma: float, T: float, mu: float = 0.0) -> float:
    """Derivative in ``x1`` of ``E[(S_T - K)^+]`` under geometric Brownian motion."""
    d1 = (np.log(x1 / K) + (mu + 0.5 * sigma**2) * T) / (sigma * np.sqrt(T))
    return float(np.exp(mu * T) * stats.norm.cdf(d1))


# Girsanov ---------------------------------------------------------------------

def girsanov_kernel(drift: Drift, H, x: float, bundle: NoiseBundle) -> np.ndarray:
    """``K_H^{-1}(int_0 b(s, x + BH_s) ds)`` at the nodes, per path."""
    grid = bundle.grid
    u = drift(grid.nodes[None, :], x + bundle.BH)
    return k_h_inverse_ac(H, u, grid.T).values


def girsanov_density(drift: Drift, H, x: float, bundle: NoiseBundle, log: bool = False):
    """``xi_T = exp(-sum k_i dB_i - sum k_i^2 delta / 2)`` with left-node ``k``."""
    k = girsanov_kernel(drift, H, x, bundle)[:, :-1]
    lx = -np.sum(k * bundle.dB, axis=1) - 0.5 * np.sum(k**2, axis=1) * bundle.grid.delta
    return lx if log else np.exp(lx)


def girsanov_mean(drift: Drift, H, x: float, n_paths: int = 10_000, seed: int = 0,
                  grid: TimeGrid | None = None, threads: int = 1) -> GreeksEstimate:
    """Monte Carlo mean of the Girsanov density (should be 1)."""
    grid = TimeGrid() if grid is None else grid

    def block(b, size):
        return girsanov_density(drift, H, x, sample_block(grid, H, b, seed, size=size))

    return GreeksEstimate.from_samples(map_blocks(block, n_paths, threads), Estimator.BEL, Component.DELTA_X)


@dataclass(frozen=True)
class ExpMomentEstimate:
    estimate: GreeksEstimate
    l1_norm: float
    cap_hits: int

    @property
    def reliable(self) -> bool:
        return self.cap_hits == 0


def exp_moment_estimate(k: float, drift: Drift, H, x: float, n_paths: int = 10_000, seed: int = 0,
                        grid: TimeGrid | None = None, threads: int = 1, cap: float = 700.0) -> ExpMomentEstimate:
    """Mean of ``exp(k int (K_H^{-1} int b)^2 du)`` with a per-path exponent cap."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    hp = as_hurst(H)
    if hp.h >= 0.25:
        warnings.warn("exponential moment bound is stated for H < 1/4", RegimeWarning, stacklevel=2)
    grid = TimeGrid() if grid is None else grid

    def block(b, size):
        nb = sample_block(grid, hp, b, seed, size=size)
        kk = girsanov_kernel(drift, hp, x, nb)[:, :-1]
        e = k * np.sum(kk**2, axis=1) * grid.delta
        return np.exp(np.minimum(e, cap)), (e > cap).astype(float)

    vals, hits = map_blocks(block, n_paths, threads)
    l1 = drift.l1_norm if isinstance(drift, IntegrableBump) else float("nan")
    return ExpMomentEstimate(GreeksEstimate.from_samples(vals, Estimator.BEL, Component.DELTA_X), l1,
                             int(hits.sum()))

"""Pathwise Euler solver, first-variation processes and the Eisenbaum
local time-space integral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift import CapabilityError, Drift
from .noise import NoiseBundle, TimeGrid

__all__ = [
    "SdePath",
    "euler_solve",
    "first_variation_exp",
    "first_variation_euler",
    "local_time_space_integral",
    "eisenbaum_running",
    "first_variation_localtime",
]


@dataclass(frozen=True)
class SdePath:
    """Solution paths, shape ``(n_paths, N+1)``; ``J`` is filled on demand."""

    grid: TimeGrid
    X: np.ndarray
    drift_used: Drift
    x0: np.ndarray
    sign: float = 1.0
    J: np.ndarray | None = None


def euler_solve(drift: Drift, noise: NoiseBundle, x0, sign: float = 1.0) -> SdePath:
    """Left-point Euler scheme ``X_{i+1} = X_i + sign*b(t_i, X_i) delta + d(noise)_i``.

    The drift is accumulated separately from the noise, so a zero drift
    returns ``x0 + noise`` bit for bit. ``x0`` may be a scalar or one value
    per path.
    """
    grid = noise.grid
    Z = noise.driver
    n, N = Z.shape[0], grid.N
    d = grid.delta
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    t = grid.nodes
    X = np.empty((n, N + 1))
    X[:, 0] = x0
    D = np.zeros(n)
    for i in range(N):
        D = D + sign * drift(t[i], X[:, i]) * d
        X[:, i + 1] = x0 + Z[:, i + 1] + D
    return SdePath(grid, X, drift, x0, sign)


def first_variation_exp(drift: Drift, path: SdePath, rule: str = "left") -> np.ndarray:
    """``J_i = exp(sign * int_0^{t_i} b'(s, X_s) ds)``, strictly positive.

    ``rule="left"`` uses ``b'(t_j, X_j) delta`` per cell. ``rule="secant"``
    integrates ``b'`` exactly along the straight line between the cell's
    end points, i.e. uses the slope ``(b(X_{j+1}) - b(X_j)) / (X_{j+1} - X_j)``.
    It stays accurate when the drift is steep on a scale much smaller
    than the per-step noise increment.
    """
    if not drift.has_derivative:
        drift.derivative(0.0, 0.0)  # raises CapabilityError
    t = path.grid.nodes
    X = path.X
    if rule == "left":
        slope = drift.derivative(t[None, :-1], X[:, :-1])
    elif rule == "secant":
        tl = t[None, :-1]
        dX = np.diff(X, axis=1)
        db = drift(tl, X[:, 1:]) - drift(tl, X[:, :-1])
        tiny = np.abs(dX) < 1e-10
        mid = 0.5 * (X[:, :-1] + X[:, 1:])
        slope = np.where(tiny, drift.derivative(tl, mid), db / np.where(tiny, 1.0, dX))
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    J = np.ones_like(X)
    J[:, 1:] = np.exp(np.cumsum(path.sign * slope * path.grid.delta, axis=1))
    return J


def first_variation_euler(drift: Drift, path: SdePath) -> np.ndarray:
    """Exact tangent of the Euler map: ``prod_{j<i} (1 + sign b'(t_j, X_j) delta)``."""
    if not drift.has_derivative:
        drift.derivative(0.0, 0.0)
    t = path.grid.nodes
    bp = drift.derivative(t[None, :-1], path.X[:, :-1])
    J = np.ones_like(path.X)
    J[:, 1:] = np.cumprod(1.0 + path.sign * bp * path.grid.delta, axis=1)
    return J


def eisenbaum_running(F: np.ndarray, Y: np.ndarray, grid: TimeGrid,
                      F_right: np.ndarray | None = None) -> np.ndarray:
    """Running Eisenbaum sums given ``F_j = f(t_j, Y_j)`` at the nodes.

    ``Y`` must start at 0. Column ``i`` of the result is the integral over
    ``[0, t_i]``.
    Forward Ito sum plus the backward sum against ``W*`` of the reversed
    path, minus its drift correction. The reversed cell next to ``T`` is
    dropped, so the backward part is empty for ``i <= 1``.
    ``F_right`` (length N) overrides the backward integrand on each cell,
    which by default is ``F`` at the cell's right node.
    """
    F = np.asarray(F, dtype=float)
    Y = np.asarray(Y, dtype=float)
    N, d, T = grid.N, grid.delta, grid.T
    s = grid.nodes
    fwd = np.zeros_like(Y)
    np.cumsum(F[..., :-1] * np.diff(Y, axis=-1), axis=-1, out=fwd[..., 1:])
    Yh = Y[..., ::-1]
    Fr = F[..., 1:] if F_right is None else np.asarray(F_right, dtype=float)
    # reversed index k is the cell ending at node N-k
    Fh = Fr[..., ::-1]
    k = np.arange(N - 1)  # k = 0..N-2, T - s_k >= 2 delta
    corr = Yh[..., k] / (T - s[k]) * d
    dWstar = Yh[..., k + 1] - Yh[..., k] + corr
    g = Fh[..., k] * dWstar - Fh[..., k] * corr
    # column i uses k = N-i .. N-2
    suffix = np.zeros(Y.shape[:-1] + (N + 1,))
    suffix[..., :N - 1] = np.cumsum(g[..., ::-1], axis=-1)[..., ::-1]
    back = np.zeros_like(Y)
    i = np.arange(2, N + 1)
    back[..., i] = suffix[..., N - i]
    return fwd + back


def local_time_space_integral(f, W_path, grid: TimeGrid, x: float = 0.0, upto: int | None = None):
    """Eisenbaum discretisation of ``int_0^t int f(s, y) L^{W^x}(ds, dy)``.

    ``W_path`` has shape ``(N+1,)`` or ``(n_paths, N+1)`` and starts at 0;
    ``f(t, y)`` is evaluated at ``y = x + W``. Returns the integral up to
    node ``upto`` (default ``N``).
    """
    W = np.asarray(W_path, dtype=float)
    Wx = x + W
    F = np.asarray(f(grid.nodes, Wx), dtype=float) * np.ones_like(Wx)
    run = eisenbaum_running(F, W, grid)
    return run[..., grid.N if upto is None else upto]


def first_variation_localtime(drift: Drift, bundle: NoiseBundle, path: SdePath,
                              rho1: float, rho2: float) -> np.ndarray:
    """First variation from the local time of ``Y = (X - x - rho1 BH)/rho2``.

    The fBm path is held fixed and ``f(s, y) = sign*b(s, x + rho1 BH_s + rho2 y)/rho2``,
    which at the nodes equals ``sign*b(t_j, X_j)/rho2``. On each cell the
    backward integrand keeps the time argument (and so the fBm value) of
    the left node, so only the spatial increment of ``f`` enters; a rough
    time dependence would otherwise add noise decaying only like
    ``delta^H``. Returns ``exp(-LT)``.
    """
    if rho2 == 0:
        raise CapabilityError("local-time route needs a nonzero Wiener loading rho2")
    x0 = path.x0[:, None]
    t = path.grid.nodes
    Y = (path.X - x0 - rho1 * bundle.BH) / rho2
    F = path.sign * drift(t[None, :], path.X) / rho2
    X_right = x0 + rho1 * bundle.BH[:, :-1] + rho2 * Y[:, 1:]
    F_right = path.sign * drift(t[None, :-1], X_right) / rho2
    return np.exp(-eisenbaum_running(F, Y, path.grid, F_right))

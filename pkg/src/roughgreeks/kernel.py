"""Fractional-calculus primitives for fBm with Hurst index below 1/2.

The Volterra kernel ``K_H``, its time derivative, the fBm covariance,
the normalising constants and discretised Riemann-Liouville operators.
All functions are pure and vectorised over numpy arrays.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import betainc, betaln, gammaln

__all__ = [
    "Regime",
    "HurstParam",
    "GridFunction",
    "as_hurst",
    "c_h",
    "big_C_h",
    "kernel_K",
    "kernel_K_quad",
    "kernel_dK_dt",
    "covariance_R",
    "rl_integral",
    "rl_derivative",
    "k_h_inverse_ac",
    "k_h_inverse_general",
    "factorization_integral",
    "factorization_error",
    "gauss_legendre01",
]


class Regime(enum.Enum):
    """Parameter regime implied by the Hurst index (one spatial dimension)."""

    GENERAL = "General"
    STRONG_SOLUTION_1D = "StrongSolution1D"
    CONTINUOUS_DELTA_1D = "ContinuousDelta1D"


@dataclass(frozen=True)
class HurstParam:
    """Validated Hurst index ``0 < h < 1/2``."""

    h: float

    def __post_init__(self):
        h = float(self.h)
        if not np.isfinite(h) or not (0.0 < h < 0.5):
            raise ValueError(f"Hurst index must satisfy 0 < h < 1/2, got {self.h!r}")
        object.__setattr__(self, "h", h)

    @property
    def regime(self) -> Regime:
        if self.h < 1.0 / 8.0:
            return Regime.CONTINUOUS_DELTA_1D
        if self.h < 1.0 / 6.0:
            return Regime.STRONG_SOLUTION_1D
        return Regime.GENERAL

    def __float__(self):
        return self.h


def as_hurst(H) -> HurstParam:
    return H if isinstance(H, HurstParam) else HurstParam(H)


@dataclass(frozen=True)
class GridFunction:
    """Samples of a function on the uniform grid ``t_i = i*T/N``.

    ``values`` may carry leading batch axes; the last axis has length N+1.
    """

    T: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or v.shape[-1] < 2:
            raise ValueError("a grid function needs at least two nodes")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def delta(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.delta

    @classmethod
    def from_callable(cls, f, T: float, N: int) -> "GridFunction":
        t = np.arange(N + 1) * (T / N)
        return cls(T, np.asarray(f(t), dtype=float) * np.ones_like(t))


@functools.lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    """Gauss-Legendre nodes and weights on [0, 1] (cached, read-only)."""
    x, w = leggauss(n)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _beta(a, b):
    return np.exp(betaln(a, b))


def c_h(H) -> float:
    """Normalising constant of the Volterra kernel."""
    h = as_hurst(H).h
    return float(np.sqrt(2.0 * h / ((1.0 - 2.0 * h) * _beta(1.0 - 2.0 * h, h + 0.5))))


def big_C_h(H) -> float:
    """Constant ``1 / (c_H Gamma(1/2+H) Gamma(1/2-H))`` of the Malliavin weight."""
    h = as_hurst(H).h
    return float(np.exp(-np.log(c_h(h)) - gammaln(0.5 + h) - gammaln(0.5 - h)))


def _check_ts(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s >= t):
        raise ValueError("kernel requires 0 < s < t")
    return t, s


def _inner_closed(h, t, s):
    # int_s^t u^{H-3/2} (u-s)^{H-1/2} du, times s^{1-2H}
    a, b = 1.0 - 2.0 * h, h + 0.5
    return _beta(a, b) * (1.0 - betainc(a, b, s / t))


def kernel_K(H, t, s):
    """Volterra kernel ``K_H(t, s)`` for ``0 < s < t``.

    The inner integral is evaluated in closed form through the regularised
    incomplete Beta function; :func:`kernel_K_quad` is the quadrature route.
    """
    h = as_hurst(H).h
    t, s = _check_ts(t, s)
    first = (t / s) ** (h - 0.5) * (t - s) ** (h - 0.5)
    second = (0.5 - h) * s ** (h - 0.5) * _inner_closed(h, t, s)
    return c_h(h) * (first + second)


def kernel_K_quad(H, t: float, s: float, epsrel: float = 1e-12) -> float:
    """Scalar ``K_H(t, s)`` with the inner integral done by adaptive quadrature.

    The substitution ``u = s + v^{1/(H+1/2)}`` removes the endpoint
    singularity, leaving a smooth integrand on ``[0, (t-s)^{H+1/2}]``.
    """
    h = as_hurst(H).h
    t, s = float(t), float(s)
    _check_ts(t, s)
    g = h + 0.5
    val, _ = integrate.quad(
        lambda v: (s + v ** (1.0 / g)) ** (h - 1.5) / g,
        0.0,
        (t - s) ** g,
        limit=200,
        epsabs=0.0,
        epsrel=epsrel,
    )
    first = (t / s) ** (h - 0.5) * (t - s) ** (h - 0.5)
    return c_h(h) * (first + (0.5 - h) * s ** (0.5 - h) * val)


def _kernel_times_gap(h, t, s):
    # K(t,s) * (t-s)^{1/2-H}: bounded as s -> t
    first = (t / s) ** (h - 0.5)
    second = (0.5 - h) * s ** (h - 0.5) * (t - s) ** (0.5 - h) * _inner_closed(h, t, s)
    return c_h(h) * (first + second)


def _kernel_times_origin(h, t, u):
    # K(t,u) * u^{1/2-H}: bounded as u -> 0
    first = (u / t) ** (0.5 - h) * (t - u) ** (h - 0.5) * u ** (0.5 - h)
    return c_h(h) * (first + (0.5 - h) * _inner_closed(h, t, u))


def kernel_dK_dt(H, t, s):
    """Time derivative of the kernel, negative for ``H < 1/2``."""
    h = as_hurst(H).h
    t, s = _check_ts(t, s)
    return c_h(h) * (h - 0.5) * (t / s) ** (h - 0.5) * (t - s) ** (h - 1.5)


def covariance_R(H, t, s):
    """fBm covariance ``(t^{2H} + s^{2H} - |t-s|^{2H}) / 2``."""
    h = as_hurst(H).h
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("covariance requires t, s >= 0")
    return 0.5 * (t ** (2 * h) + s ** (2 * h) - np.abs(t - s) ** (2 * h))


def factorization_integral(H, t: float, s: float, n_quad: int = 4096) -> float:
    """``int_0^{min(t,s)} K(t,u) K(s,u) du`` by power-substituted Gauss rules.

    The range is split at half of ``min(t, s)``. Near the origin the
    substitution ``u = m x^{1/(2H)}`` absorbs ``u^{2H-1}``; near the upper
    end ``lo - u = L x^{1/g}`` absorbs the diagonal singularity.
    """
    h = as_hurst(H).h
    lo, hi = (float(t), float(s)) if t <= s else (float(s), float(t))
    if lo <= 0:
        raise ValueError("t and s must be positive")
    x, w = gauss_legendre01(n_quad // 2)
    mid = lo / 2.0
    p = 1.0 / (2.0 * h)
    u = np.maximum(mid * x**p, 1e-300)
    total = np.sum(_kernel_times_origin(h, hi, u) * _kernel_times_origin(h, lo, u) * w) * mid ** (2 * h) * p
    L = lo - mid
    if hi > lo:
        g = h + 0.5
        u = lo - L * x ** (1.0 / g)
        total += np.sum(kernel_K(h, hi, u) * _kernel_times_gap(h, lo, u) * w) * L**g / g
    else:
        u = lo - L * x**p
        total += np.sum(_kernel_times_gap(h, lo, u) ** 2 * w) * L ** (2 * h) * p
    return float(total)


def factorization_error(H, T: float = 1.0, n_grid: int = 64, n_quad: int = 4096) -> float:
    """Max relative error of the kernel factorisation of ``R_H`` on a grid."""
    g = np.arange(1, n_grid + 1) * (T / n_grid)
    err = 0.0
    for i, t in enumerate(g):
        for s in g[: i + 1]:
            r = float(covariance_R(H, t, s))
            err = max(err, abs(factorization_integral(H, t, s, n_quad) - r) / r)
    return err


# Riemann-Liouville operators ------------------------------------------------

def _check_alpha(alpha):
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"order must lie in (0, 1), got {alpha}")
    return alpha


def _check_side(side):
    side = str(side).lower()
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    return side


@functools.lru_cache(maxsize=32)
def _rl_integral_matrix(N: int, alpha: float) -> np.ndarray:
    # product trapezoid weights: exact for piecewise-linear data
    k = np.arange(N + 1, dtype=float)
    c = np.empty(N + 1)
    c[0] = 1.0
    c[1:] = (k[1:] + 1) ** (alpha + 1) - 2 * k[1:] ** (alpha + 1) + (k[1:] - 1) ** (alpha + 1)
    M = np.zeros((N + 1, N + 1))
    for n in range(1, N + 1):
        M[n, 1 : n + 1] = c[n - 1 :: -1][:n]
        M[n, 0] = (n - 1) ** (alpha + 1) - (n - alpha - 1) * n**alpha
    M *= np.exp(-gammaln(alpha + 2))
    M.flags.writeable = False
    return M


@functools.lru_cache(maxsize=32)
def _marchaud_matrix(N: int, alpha: float) -> np.ndarray:
    # discretises int_0^x (f(x)-f(y)) (x-y)^{-alpha-1} dy with f piecewise linear
    m = np.arange(1, N + 1, dtype=float)
    A = (m**-alpha - (m + 1) ** -alpha) / alpha
    B = ((m + 1) ** (1 - alpha) - m ** (1 - alpha)) / (1 - alpha) - m * A
    cumA = np.concatenate([[0.0], np.cumsum(A)])
    M = np.zeros((N + 1, N + 1))
    for n in range(1, N + 1):
        M[n, n] += 1.0 / (1 - alpha) + cumA[n - 1]
        M[n, n - 1] -= 1.0 / (1 - alpha)
        mm = np.arange(1, n)
        np.add.at(M[n], n - mm, -A[mm - 1] + B[mm - 1])
        np.add.at(M[n], n - mm - 1, -B[mm - 1])
    M.flags.writeable = False
    return M


def _as_grid_function(f, T):
    if isinstance(f, GridFunction):
        return f
    if T is None:
        raise ValueError("pass a GridFunction or supply the horizon T")
    return GridFunction(T, f)


def rl_integral(alpha, side, f, T: float | None = None) -> GridFunction:
    """Riemann-Liouville fractional integral of order ``alpha`` on the grid.

    First-order product integration: the weight ``(x-y)^{alpha-1}`` is
    integrated exactly against the piecewise-linear interpolant of ``f``.
    """
    alpha = _check_alpha(alpha)
    side = _check_side(side)
    f = _as_grid_function(f, T)
    v = f.values if side == "left" else f.values[..., ::-1]
    out = f.delta**alpha * (v @ _rl_integral_matrix(f.N, alpha).T)
    if side == "right":
        out = out[..., ::-1]
    return GridFunction(f.T, out)


def rl_derivative(alpha, side, f, T: float | None = None) -> GridFunction:
    """Riemann-Liouville fractional derivative via the Marchaud form.

    At the base point the value is extrapolated linearly from the next two
    nodes when ``f`` vanishes there, and is infinite otherwise.
    """
    alpha = _check_alpha(alpha)
    side = _check_side(side)
    f = _as_grid_function(f, T)
    if f.N < 2:
        raise ValueError("derivative needs at least three nodes")
    v = f.values if side == "left" else f.values[..., ::-1]
    d = f.delta
    x = f.nodes
    out = np.empty_like(v)
    march = v @ _marchaud_matrix(f.N, alpha).T
    out[..., 1:] = (v[..., 1:] * x[1:] ** -alpha + alpha * d**-alpha * march[..., 1:]) * np.exp(-gammaln(1 - alpha))
    out[..., 0] = np.where(v[..., 0] == 0.0, 2 * out[..., 1] - out[..., 2], np.inf)
    if side == "right":
        out = out[..., ::-1]
    return GridFunction(f.T, out)


def k_h_inverse_ac(H, phi_prime, T: float | None = None) -> GridFunction:
    """``K_H^{-1}`` applied to an absolutely continuous ``phi`` with ``phi(0)=0``.

    Evaluates ``s^{H-1/2} I^{1/2-H}[s^{1/2-H} phi'](s)``; the value at
    ``s = 0`` is the limit 0.
    """
    h = as_hurst(H).h
    f = _as_grid_function(phi_prime, T)
    s = f.nodes
    inner = rl_integral(0.5 - h, "left", GridFunction(f.T, s ** (0.5 - h) * f.values)).values
    out = np.zeros_like(inner)
    out[..., 1:] = s[1:] ** (h - 0.5) * inner[..., 1:]
    return GridFunction(f.T, out)


def k_h_inverse_general(H, phi, T: float | None = None) -> GridFunction:
    """General form ``s^{1/2-H} D^{1/2-H}[s^{H-1/2} D^{2H} phi]``.

    Only a cross-check for smooth ``phi``: two discrete fractional
    derivatives are less accurate than :func:`k_h_inverse_ac`.
    """
    h = as_hurst(H).h
    f = _as_grid_function(phi, T)
    s = f.nodes
    d2h = rl_derivative(2 * h, "left", f).values
    mid = np.zeros_like(d2h)
    mid[..., 1:] = s[1:] ** (h - 0.5) * d2h[..., 1:]
    # the product vanishes at the origin when D^{2H} phi is bounded there
    outer = rl_derivative(0.5 - h, "left", GridFunction(f.T, mid)).values
    out = np.zeros_like(outer)
    out[..., 1:] = s[1:] ** (0.5 - h) * outer[..., 1:]
    return GridFunction(f.T, out)

"""Correlated rough-volatility stock model.

Volatility ``sigma`` solves an fBm-driven SDE with (possibly regime
switching) drift and noise ``sqrt(1-rho^2) BH + rho W``; the stock solves
``dS = mu S dt + g(sigma) S dW`` and is simulated in log space.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drift import CapabilityError, Drift, RegimeSwitching, zero_drift
from .noise import Correlated, NoiseBundle
from .sde import euler_solve, first_variation_euler, first_variation_localtime

__all__ = [
    "DriftSign",
    "VolMap",
    "ConstantVol",
    "TruncatedExp",
    "PlainExp",
    "g_eval",
    "StockModelParams",
    "ModelPathSet",
    "simulate_model",
    "fou_closed_form",
    "preset",
    "PRESETS",
]


class DriftSign(enum.Enum):
    """Sign in front of the drift integral of the volatility equation."""

    PLUS_INTEGRAL = 1.0
    MINUS_INTEGRAL = -1.0


class VolMap:
    lower = 0.0
    upper = np.inf
    square_integrable = True

    def evaluate(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantVol(VolMap):
    sigma0: float = 0.2

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("constant volatility must be positive")

    @property
    def lower(self):
        return self.sigma0

    @property
    def upper(self):
        return self.sigma0

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.sigma0), np.zeros_like(x)


def _smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10 - 15 * u + 6 * u**2)


def _smoothstep5_prime(u):
    inside = (u > 0) & (u < 1)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30 * u**2 * (1 - u) ** 2, 0.0)


@dataclass(frozen=True)
class TruncatedExp(VolMap):
    """``g = exp(f)`` with ``f(x) = x`` on ``[-l, l]`` tapered to 0 beyond.

    On ``l < |x| < l + w`` the taper is ``f = x (1 - s5((|x|-l)/w))`` with
    the quintic smoothstep ``s5``, so ``f`` is C^2 and vanishes outside.
    """

    l: float = 5.0
    taper_width: float | None = None

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("truncation level must be positive")
        if self.taper_width is not None and not self.taper_width > 0:
            raise ValueError("taper width must be positive")

    @property
    def w(self) -> float:
        return self.l if self.taper_width is None else float(self.taper_width)

    @property
    def lower(self):
        return float(np.exp(-(self.l + self.w)))

    @property
    def upper(self):
        return float(np.exp(self.l + self.w))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        u = (np.abs(x) - self.l) / self.w
        return x * (1.0 - _smoothstep5(u))

    def f_prime(self, x):
        x = np.asarray(x, dtype=float)
        u = (np.abs(x) - self.l) / self.w
        return (1.0 - _smoothstep5(u)) - np.abs(x) * _smoothstep5_prime(u) / self.w

    def evaluate(self, x):
        g = np.exp(self.f(x))
        return g, g * self.f_prime(x)


@dataclass(frozen=True)
class PlainExp(VolMap):
    """Untruncated ``exp``; for tests only, not square integrable in general."""

    square_integrable = False

    def evaluate(self, x):
        g = np.exp(np.asarray(x, dtype=float))
        return g, g


def g_eval(vol_map: VolMap, x):
    """Return ``(g(x), g'(x))``."""
    return vol_map.evaluate(x)


@dataclass(frozen=True)
class StockModelParams:
    mu: float = 0.0
    nu: float = 1.0
    rho: float = -0.5
    g: VolMap = field(default_factory=TruncatedExp)
    vol_drift: Drift = field(default_factory=zero_drift)
    vol_drift_sign: DriftSign = DriftSign.MINUS_INTEGRAL

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (-1, 1)")
        if not isinstance(self.vol_drift_sign, DriftSign):
            object.__setattr__(self, "vol_drift_sign", DriftSign(self.vol_drift_sign))

    @property
    def sign(self) -> float:
        return self.vol_drift_sign.value


@dataclass(frozen=True)
class ModelPathSet:
    """Per-path arrays of shape ``(n_paths, N+1)``."""

    grid: object
    S: np.ndarray
    sigma: np.ndarray
    dS_dx1: np.ndarray | None
    dS_dx2: np.ndarray | None
    dsigma_dx2: np.ndarray | None
    noise: NoiseBundle
    x1: float
    x2: float
    truncation_hits: int = 0


def _check_noise(params, noise):
    mix = noise.mix
    if not isinstance(mix, Correlated) or mix.rho != params.rho:
        raise ValueError(f"noise must carry Correlated(rho={params.rho}), got {mix!r}")


def simulate_model(params: StockModelParams, noise: NoiseBundle, x1: float, x2: float,
                   first_variation: str | None = "auto") -> ModelPathSet:
    """Simulate ``(S, sigma)`` and, optionally, the first variations.

    ``first_variation`` selects the route for ``dsigma/dx2``: ``"euler"``
    (tangent of the Euler map, needs a drift derivative), ``"localtime"``
    (Eisenbaum route on the W component, needs ``rho != 0``), ``"auto"``
    (euler if possible, else local time) or ``None`` (skip).
    """
    if not x1 > 0:
        raise ValueError("initial stock price must be positive")
    _check_noise(params, noise)
    grid = noise.grid
    d = grid.delta
    drift = params.vol_drift
    path = euler_solve(drift, noise, x2 / params.nu, sign=params.sign)
    sig = path.X
    g, gp = g_eval(params.g, sig)
    dW = noise.dW
    incr = (params.mu - 0.5 * g[:, :-1] ** 2) * d + g[:, :-1] * dW
    E = np.ones_like(sig)
    E[:, 1:] = np.exp(np.cumsum(incr, axis=1))
    S = x1 * E
    hits = 0
    if isinstance(drift, RegimeSwitching):
        hits = int(np.count_nonzero(drift.in_truncation_zone(sig)))
    if first_variation is None:
        return ModelPathSet(grid, S, sig, None, None, None, noise, x1, x2, hits)

    route = first_variation
    if route == "auto":
        route = "euler" if drift.has_derivative else "localtime"
    if route == "euler":
        J = first_variation_euler(drift, path)
    elif route == "localtime":
        if params.rho == 0:
            raise CapabilityError("local-time route needs rho != 0; mollify the drift instead")
        J = first_variation_localtime(drift, noise, path, np.sqrt(1 - params.rho**2), params.rho)
    else:
        raise ValueError(f"unknown first-variation route {first_variation!r}")
    dsig = J / params.nu
    # tangent of the log-Euler step in x2
    src = (-g[:, :-1] * d + dW) * gp[:, :-1] * dsig[:, :-1]
    dlogS = np.zeros_like(sig)
    np.cumsum(src, axis=1, out=dlogS[:, 1:])
    dS_dx2 = S * dlogS
    return ModelPathSet(grid, S, sig, S / x1, dS_dx2, dsig, noise, x1, x2, hits)


def fou_closed_form(a: float, nu: float, b_level: float, x2: float, BH, grid) -> np.ndarray:
    """Fractional OU path ``x2/nu + b (1 - e^{-a nu t}) + int e^{-a nu (t-s)} dBH_s``.

    The Young integral is the left-point sum over grid cells.
    """
    BH = np.asarray(BH, dtype=float)
    t = grid.nodes
    k = a * nu
    q = np.exp(-k * grid.delta)
    Y = np.zeros_like(BH)
    dBH = np.diff(BH, axis=-1)
    for i in range(grid.N):
        Y[..., i + 1] = q * (Y[..., i] + dBH[..., i])
    return x2 / nu + b_level * (1 - np.exp(-k * t)) + Y


def preset(name: str, **overrides) -> StockModelParams:
    """Named parameter sets: ``gjr``, ``regime`` and ``bs``."""
    name = name.lower()
    if name == "gjr":
        a, nu, b = 1.0, 1.0, math.log(0.2)
        p = StockModelParams(mu=0.0, nu=nu, rho=-0.5, g=TruncatedExp(5.0),
                             vol_drift=RegimeSwitching(a * nu, a * nu, b, b, 0.0))
    elif name == "regime":
        p = StockModelParams(mu=0.0, nu=1.0, rho=-0.5, g=TruncatedExp(5.0),
                             vol_drift=RegimeSwitching(1.0, 1.0, math.log(0.15), math.log(0.3), math.log(0.2)))
    elif name == "bs":
        p = StockModelParams(mu=0.0, nu=1.0, rho=0.0, g=ConstantVol(0.2), vol_drift=zero_drift())
    else:
        raise ValueError(f"unknown preset {name!r}; choose gjr, regime or bs")
    return replace(p, **overrides) if overrides else p


PRESETS = ("gjr", "regime", "bs")

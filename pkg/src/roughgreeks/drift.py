"""Drift vector fields ``b(t, y)``: regime switching, bounded plus Lipschitz,
integrable bumps, smooth fields and their mollifications.

Every drift is called as ``b(t, y)`` with numpy broadcasting. Drifts that
expose a spatial derivative implement ``derivative(t, y)``; the others
raise :class:`CapabilityError`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .kernel import gauss_legendre01

__all__ = [
    "CapabilityError",
    "Drift",
    "RegimeSwitching",
    "BoundedPlusLipschitz",
    "IntegrableBump",
    "Mollified",
    "Smooth",
    "zero_drift",
    "linear_drift",
    "mollify",
    "smooth_step",
]


class CapabilityError(RuntimeError):
    """The requested route is not available for this input."""


class Drift:
    has_derivative = False

    def __call__(self, t, y):
        raise NotImplementedError

    def derivative(self, t, y):
        raise CapabilityError(
            f"{type(self).__name__} has no spatial derivative; mollify it "
            "or use the local-time route for the first variation"
        )


def _ramp_arg(x):
    xc = np.clip(x, 1e-300, 1.0 - 1e-16)
    return xc, 1.0 / (1.0 - xc) - 1.0 / xc


def smooth_step(x):
    """C-infinity ramp: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.asarray(x, dtype=float)
    _, z = _ramp_arg(x)
    return np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, expit(z)))


def _smooth_step_prime(x):
    x = np.asarray(x, dtype=float)
    xc, z = _ramp_arg(x)
    p = expit(z)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        dz = 1.0 / (1.0 - xc) ** 2 + 1.0 / xc**2
        val = p * (1.0 - p) * dz
    return np.where((x > 0) & (x < 1) & np.isfinite(val), val, 0.0)


@dataclass(frozen=True)
class Smooth(Drift):
    """Drift with explicit value and spatial-derivative handles."""

    f: Callable
    fprime: Callable
    name: str = "smooth"
    has_derivative = True

    def __call__(self, t, y):
        return np.asarray(self.f(t, y), dtype=float) + 0.0 * np.asarray(y, dtype=float)

    def derivative(self, t, y):
        return np.asarray(self.fprime(t, y), dtype=float) + 0.0 * np.asarray(y, dtype=float)


def zero_drift() -> Smooth:
    return Smooth(lambda t, y: np.zeros_like(np.asarray(y, dtype=float)),
                  lambda t, y: np.zeros_like(np.asarray(y, dtype=float)), name="zero")


def linear_drift(lam: float, level: float = 0.0) -> Smooth:
    """``b(y) = -lam (y - level)``."""
    return Smooth(lambda t, y: -lam * (np.asarray(y, dtype=float) - level),
                  lambda t, y: np.full_like(np.asarray(y, dtype=float), -lam),
                  name=f"linear({lam},{level})")


@dataclass(frozen=True)
class BoundedPlusLipschitz(Drift):
    """``b = b_tilde + b_hat`` with ``|b_tilde| <= bound`` and ``b_hat`` Lipschitz.

    Optional derivative handles make the sum differentiable.
    """

    b_tilde: Callable
    bound: float
    b_hat: Callable
    lipschitz: float
    growth: float
    b_tilde_prime: Callable | None = None
    b_hat_prime: Callable | None = None

    @property
    def has_derivative(self):
        return self.b_tilde_prime is not None and self.b_hat_prime is not None

    def __call__(self, t, y):
        return self.b_tilde(t, y) + self.b_hat(t, y)

    def derivative(self, t, y):
        if not self.has_derivative:
            return Drift.derivative(self, t, y)
        return self.b_tilde_prime(t, y) + self.b_hat_prime(t, y)


@dataclass(frozen=True)
class RegimeSwitching(Drift):
    """``a1 (y - b1)`` below the threshold ``R`` and ``a2 (y - b2)`` at or above it.

    For ``a1 != a2`` the bounded part ``(a1-a2) y - a1 b1 + a2 b2`` grows
    linearly below ``R``; it is clipped at ``truncation`` (default
    ``10 * max(1, |R|, |b1|, |b2|) * |a1 - a2|``).
    """

    a1: float
    a2: float
    b1: float
    b2: float
    R: float
    truncation: float | None = None

    def __post_init__(self):
        if not (self.a1 > 0 and self.a2 > 0):
            raise ValueError("regime-switching rates must be positive")

    @property
    def level(self) -> float:
        """Truncation level for the bounded part (infinite when unneeded)."""
        if self.a1 == self.a2:
            return np.inf
        if self.truncation is not None:
            return float(self.truncation)
        return 10.0 * max(1.0, abs(self.R), abs(self.b1), abs(self.b2)) * abs(self.a1 - self.a2)

    def b_hat(self, t, y):
        return self.a2 * (np.asarray(y, dtype=float) - self.b2)

    def b_tilde_raw(self, t, y):
        y = np.asarray(y, dtype=float)
        return (self.a1 - self.a2) * y - self.a1 * self.b1 + self.a2 * self.b2

    def b_tilde(self, t, y):
        y = np.asarray(y, dtype=float)
        M = self.level
        return np.where(y < self.R, np.clip(self.b_tilde_raw(t, y), -M, M), 0.0)

    def in_truncation_zone(self, y):
        y = np.asarray(y, dtype=float)
        return (y < self.R) & (np.abs(self.b_tilde_raw(0.0, y)) > self.level)

    def decompose(self) -> BoundedPlusLipschitz:
        bound = abs(self.a2 * self.b2 - self.a1 * self.b1) if self.a1 == self.a2 else self.level
        return BoundedPlusLipschitz(self.b_tilde, bound, self.b_hat, self.a2, self.a2 * (1 + abs(self.b2)))

    def __call__(self, t, y):
        return self.b_tilde(t, y) + self.b_hat(t, y)


@dataclass(frozen=True)
class IntegrableBump(Drift):
    """``height * exp(-1/(1-z^2))`` with ``z = (y - center)/width``, zero for ``|z| >= 1``."""

    center: float = 0.0
    width: float = 1.0
    height: float = 1.0
    has_derivative = True

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("bump width must be positive")

    def _z(self, y):
        return (np.asarray(y, dtype=float) - self.center) / self.width

    def __call__(self, t, y):
        z = self._z(y)
        inside = np.abs(z) < 1
        zc = np.where(inside, z, 0.0)
        return np.where(inside, self.height * np.exp(-1.0 / (1.0 - zc**2)), 0.0)

    def derivative(self, t, y):
        z = self._z(y)
        inside = np.abs(z) < 1
        zc = np.where(inside, z, 0.0)
        e = np.exp(-1.0 / (1.0 - zc**2))
        return np.where(inside, self.height * e * (-2.0 * zc / (1.0 - zc**2) ** 2) / self.width, 0.0)

    @property
    def l1_norm(self) -> float:
        x, w = gauss_legendre01(64)
        z = 2 * x - 1
        return float(abs(self.height) * self.width * 2 * np.sum(w * np.exp(-1.0 / (1.0 - z**2))))


# mollifier: normalised bump on [-1, 1] sampled at fixed Gauss nodes
def _mollifier_rule(m: int = 48):
    x, w = gauss_legendre01(m)
    z = 2 * x - 1
    eta = np.exp(-1.0 / (1.0 - z**2))
    deta = eta * (-2 * z / (1 - z**2) ** 2)
    norm = np.sum(w * eta)
    return z, w * eta / norm, w * deta / norm


_MZ, _MW, _MDW = _mollifier_rule()


def _convolve(f, n, t, y):
    y = np.asarray(y, dtype=float)
    return sum(wq * f(t, y - zq / n) for zq, wq in zip(_MZ, _MW))


def _convolve_prime(f, n, t, y):
    y = np.asarray(y, dtype=float)
    return sum(n * dq * f(t, y - zq / n) for zq, dq in zip(_MZ, _MDW))


@dataclass(frozen=True)
class Mollified(Drift):
    """Smooth approximation of ``base`` at scale ``1/n``.

    Regime switching gets a closed form: the indicator is replaced by a
    C-infinity ramp of total width ``1/n`` centred at ``R``. Other drifts
    are convolved with a normalised bump of radius ``1/n`` by a fixed
    quadrature; its weights sum to one, so bounds and Lipschitz constants
    carry over.
    """

    base: Drift
    n: int
    has_derivative = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("mollification index must be a positive integer")

    def _ramp(self, y):
        # weight of the lower regime: 1 well below R, 0 well above
        z = (np.asarray(y, dtype=float) - self.base.R) * self.n + 0.5
        return 1.0 - smooth_step(z)

    def __call__(self, t, y):
        b = self.base
        if isinstance(b, RegimeSwitching):
            y = np.asarray(y, dtype=float)
            M = b.level
            bt = np.clip(b.b_tilde_raw(t, y), -M, M)
            return b.b_hat(t, y) + bt * self._ramp(y)
        if isinstance(b, BoundedPlusLipschitz):
            return _convolve(b.b_tilde, self.n, t, y) + _convolve(b.b_hat, self.n, t, y)
        return _convolve(b, self.n, t, y)

    def derivative(self, t, y):
        b = self.base
        if isinstance(b, RegimeSwitching):
            y = np.asarray(y, dtype=float)
            M = b.level
            raw = b.b_tilde_raw(t, y)
            bt = np.clip(raw, -M, M)
            dbt = np.where(np.abs(raw) <= M, b.a1 - b.a2, 0.0)
            z = (y - b.R) * self.n + 0.5
            return b.a2 + dbt * self._ramp(y) - bt * self.n * _smooth_step_prime(z)
        return _convolve_prime(b, self.n, t, y)

    def b_tilde(self, t, y):
        b = self.base
        if isinstance(b, RegimeSwitching):
            M = b.level
            return np.clip(b.b_tilde_raw(t, y), -M, M) * self._ramp(y)
        if isinstance(b, BoundedPlusLipschitz):
            return _convolve(b.b_tilde, self.n, t, y)
        raise CapabilityError("base drift has no bounded/Lipschitz split")

    def b_hat(self, t, y):
        b = self.base
        if isinstance(b, RegimeSwitching):
            return b.b_hat(t, y)
        if isinstance(b, BoundedPlusLipschitz):
            return _convolve(b.b_hat, self.n, t, y)
        raise CapabilityError("base drift has no bounded/Lipschitz split")


def mollify(drift: Drift, n: int) -> Mollified:
    """Mollify ``drift`` at scale ``1/n``."""
    if not isinstance(drift, (RegimeSwitching, BoundedPlusLipschitz, IntegrableBump, Smooth)):
        raise TypeError(f"cannot mollify {type(drift).__name__}")
    return Mollified(drift, int(n))

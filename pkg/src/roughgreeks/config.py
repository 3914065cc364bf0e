"""Run configuration: flat ``key = value`` files with one canonical form."""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields

import numpy as np

from .drift import Drift, IntegrableBump, RegimeSwitching, linear_drift, mollify, zero_drift
from .greeks import Payoff
from .kernel import HurstParam
from .model import ConstantVol, DriftSign, StockModelParams, TruncatedExp, preset
from .noise import Correlated, MixSpec, NoMix, Scaled, TimeGrid

__all__ = ["ConfigError", "RunConfig", "parse_kv", "load_config"]

# keys that never change numerical output and stay out of the hash
NON_NUMERIC_KEYS = ("threads", "out", "format")


class ConfigError(ValueError):
    """Invalid configuration value or key."""


@dataclass(frozen=True)
class RunConfig:
    # grid and sampling
    seed: int = 0
    H: float = 0.1
    T: float = 1.0
    N: int = 256
    paths: int = 10_000
    mix: str = "none"
    rho1: float = 1.0
    rho2: float = 1.0
    # plain SDE
    drift: str = "zero"
    x0: float = 1.0
    lam: float = 0.5
    mollify_n: int = 0
    drift_sign: str = "plus"
    bump_center: float = 0.0
    bump_width: float = 1.0
    bump_height: float = 1.0
    # stock model
    model: str = "sde"
    preset: str = "regime"
    mu: float = 0.0
    nu: float = 1.0
    rho: float = -0.5
    vol: str = "truncexp"
    l: float = 5.0
    sigma0: float = 0.2
    a1: float = 1.0
    a2: float = 1.0
    b1: float = math.log(0.15)
    b2: float = math.log(0.3)
    R: float = math.log(0.2)
    vol_drift_sign: str = "minus"
    x1: float = 1.0
    x2: float = math.log(0.2)
    # greeks
    estimator: str = "both"
    payoff: str = "call:1.0"
    fd_h: float = 0.0
    # stability
    p: int = 2
    gaps: str = "0.1,0.01,0.001"
    # validation
    suite: str = "all"
    # runtime only
    threads: int = 1
    out: str = ""
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    # -- validation -----------------------------------------------------
    def validate(self):
        try:
            HurstParam(self.H)
            TimeGrid(self.T, self.N)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.paths < 1:
            raise ConfigError("paths must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        choices = {
            "mix": ("none", "correlated", "scaled"),
            "drift": ("zero", "linear", "regime", "bump"),
            "drift_sign": ("plus", "minus"),
            "vol_drift_sign": ("plus", "minus"),
            "model": ("sde", "stock"),
            "preset": ("gjr", "regime", "bs"),
            "vol": ("truncexp", "const"),
            "estimator": ("bel", "fd", "both"),
            "format": ("csv", "json"),
            "suite": ("all", "kernel", "noise", "sde", "model", "greeks", "stability"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {', '.join(allowed)}; got {getattr(self, key)!r}")
        if not -1 < self.rho < 1:
            raise ConfigError("rho must lie in (-1, 1)")
        if self.mix == "scaled" and self.rho1 == 0:
            raise ConfigError("rho1 must be nonzero")
        if self.mollify_n < 0:
            raise ConfigError("mollify_n must be >= 0")
        if self.a1 <= 0 or self.a2 <= 0 or self.nu <= 0 or self.l <= 0 or self.sigma0 <= 0:
            raise ConfigError("a1, a2, nu, l and sigma0 must be positive")
        if self.x1 <= 0:
            raise ConfigError("x1 must be positive")
        if self.fd_h < 0:
            raise ConfigError("fd_h must be >= 0 (0 selects the default)")
        try:
            Payoff.parse(self.payoff)
            g = self.gap_values
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if len(g) < 3 or any(v <= 0 for v in g) or any(b >= a for a, b in zip(g, g[1:])):
            raise ConfigError("gaps need at least three positive, strictly decreasing values")
        if self.p < 2 or self.p & (self.p - 1):
            raise ConfigError("p must be a power of two >= 2")

    # -- serialisation --------------------------------------------------
    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(known[key], raw)
        return cls(**kw)

    def canonical(self) -> str:
        """Sorted ``key=value`` lines of every numeric-affecting key."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name in NON_NUMERIC_KEYS:
                continue
            lines.append(f"{f.name}={_fmt(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    # -- builders -------------------------------------------------------
    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    @property
    def gap_values(self):
        return tuple(float(v) for v in str(self.gaps).split(",") if v.strip())

    def mix_spec(self) -> MixSpec:
        if self.mix == "correlated":
            return Correlated(self.rho)
        if self.mix == "scaled":
            return Scaled(self.rho1, self.rho2)
        return NoMix()

    def sde_drift(self) -> Drift:
        if self.drift == "zero":
            d = zero_drift()
        elif self.drift == "linear":
            d = linear_drift(self.lam)
        elif self.drift == "regime":
            d = RegimeSwitching(self.a1, self.a2, self.b1, self.b2, self.R)
        else:
            d = IntegrableBump(self.bump_center, self.bump_width, self.bump_height)
        return mollify(d, self.mollify_n) if self.mollify_n > 0 and self.drift != "zero" else d

    @property
    def sde_sign(self) -> float:
        return 1.0 if self.drift_sign == "plus" else -1.0

    def stock_params(self) -> StockModelParams:
        """Preset model; mu, nu, rho, the vol map and the drift sign come from
        the config, and a1..R override the drift of the ``regime`` preset."""
        base = preset(self.preset)
        if self.preset == "bs":
            return dataclasses.replace(base, mu=self.mu, nu=self.nu, g=ConstantVol(self.sigma0))
        g = ConstantVol(self.sigma0) if self.vol == "const" else TruncatedExp(self.l)
        drift = base.vol_drift
        if self.preset == "regime":
            drift = RegimeSwitching(self.a1, self.a2, self.b1, self.b2, self.R)
        if self.mollify_n > 0:
            drift = mollify(drift, self.mollify_n)
        sign = DriftSign.MINUS_INTEGRAL if self.vol_drift_sign == "minus" else DriftSign.PLUS_INTEGRAL
        return dataclasses.replace(base, mu=self.mu, nu=self.nu, rho=self.rho, g=g, vol_drift=drift,
                                   vol_drift_sign=sign)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(f, raw):
    typ = f.type if not isinstance(f.type, str) else {"int": int, "float": float, "str": str}[f.type]
    if isinstance(raw, typ) and not isinstance(raw, bool):
        return raw
    text = str(raw).strip()
    try:
        if typ is int:
            val = float(text)
            if not val.is_integer():
                raise ValueError
            return int(val)
        if typ is float:
            val = float(text)
            if not np.isfinite(val):
                raise ValueError
            return val
        return text
    except ValueError:
        raise ConfigError(f"{f.name}: cannot read {raw!r} as {typ.__name__}") from None


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = val
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path:
        try:
            with open(path) as fh:
                values.update(parse_kv(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    values.update(overrides or {})
    return RunConfig.from_mapping(values)

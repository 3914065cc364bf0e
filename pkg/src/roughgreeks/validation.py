"""Quick invariant suites run by ``roughgreeks validate``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from . import kernel as K
from .drift import RegimeSwitching, linear_drift, zero_drift
from .greeks import Payoff, WeightFn, bel_delta_sde, bel_weight_plain
from .model import ConstantVol, StockModelParams, simulate_model
from .noise import Correlated, NoiseBundle, TimeGrid, sample_bundle, wiener_paths
from .sde import euler_solve, first_variation_exp, local_time_space_integral
from .stability import StabilityScan, stability_scan

__all__ = ["Check", "SUITES", "run_suite"]


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str


def _within(est, se, target, k=3.0):
    return abs(est - target) <= k * se


def suite_kernel():
    out = []
    H = 0.1
    ident = K.big_C_h(H) * K.c_h(H) * gamma(0.5 + H) * gamma(0.5 - H)
    out.append(("constant identity", abs(ident - 1) < 1e-13, f"{float(ident)!r}"))
    err = K.factorization_error(H, n_grid=8, n_quad=1024)
    out.append(("factorization 8x8", err <= 1e-3, f"max rel err {err:.2e}"))
    N, al, b = 1024, 0.4, 0.4
    x = np.arange(N + 1) / N
    I = K.rl_integral(al, "left", x**b, T=1.0).values
    ex = gamma(b + 1) / gamma(b + 1 + al) * x ** (b + al)
    r = abs(I[-1] - ex[-1]) / ex[-1]
    out.append(("power rule I", r <= 1e-3, f"rel err {r:.2e}"))
    f = np.sin(x)
    DI = K.rl_derivative(al, "left", K.rl_integral(al, "left", f, T=1.0)).values
    e = np.max(np.abs(DI - f))
    out.append(("D after I on sin", e <= 1e-2, f"sup err {e:.2e}"))
    return out


def suite_noise():
    out = []
    g = TimeGrid(1.0, 64)
    b = sample_bundle(g, 0.1, Correlated(0.3), seed=11, n_paths=20_000)
    v = b.BH[:, -1] ** 2
    out.append(("variance at T", _within(v.mean(), v.std() / np.sqrt(v.size), 1.0), f"{v.mean():.4f}"))
    c = b.dB[:, 10] * b.dW[:, 10] / g.delta
    out.append(("B and W independent", _within(c.mean(), c.std() / np.sqrt(c.size), 0.0), f"{c.mean():.4f}"))
    b2 = sample_bundle(g, 0.1, Correlated(0.3), seed=11, n_paths=20_000)
    out.append(("reproducible", np.array_equal(b.BH, b2.BH), ""))
    return out


def suite_sde():
    out = []
    g = TimeGrid(1.0, 128)
    b = sample_bundle(g, 0.1, seed=3, n_paths=200)
    p = euler_solve(zero_drift(), b, 0.7)
    out.append(("zero drift identity", np.array_equal(p.X, 0.7 + b.BH), ""))
    fz = NoiseBundle.frozen(g)
    p = euler_solve(linear_drift(0.5), fz, 1.0)
    e = abs(p.X[0, -1] - (1 - 0.5 * g.delta) ** g.N)
    out.append(("linear ODE", e < 1e-12, f"{e:.1e}"))
    pl = euler_solve(linear_drift(0.5), b, 1.0)
    J = first_variation_exp(linear_drift(0.5), pl)
    out.append(("J positive", bool(np.all(J > 0)), ""))
    gl = TimeGrid(1.0, 1024)
    _, W = wiener_paths(gl, 4, 500)
    lt = local_time_space_integral(lambda t, y: y, W, gl) + 1.0
    out.append(("local-time IBP", _within(lt.mean(), lt.std() / np.sqrt(lt.size), 0.0), f"{lt.mean():.4f}"))
    return out


def suite_model():
    out = []
    g = TimeGrid(1.0, 64)
    prm = StockModelParams(mu=0.05, rho=0.0, g=ConstantVol(0.2), vol_drift=zero_drift())
    b = sample_bundle(g, 0.1, Correlated(0.0), seed=5, n_paths=20_000)
    m = simulate_model(prm, b, 1.0, 0.0)
    s = m.S[:, -1]
    out.append(("GBM mean", _within(s.mean(), s.std() / np.sqrt(s.size), np.exp(0.05)), f"{s.mean():.4f}"))
    out.append(("dS/dx1 = S/x1", np.array_equal(m.dS_dx1, m.S / 1.0), ""))
    out.append(("S positive", bool(np.all(m.S > 0)), ""))
    return out


def suite_greeks():
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e = bel_delta_sde(zero_drift(), 0.1, 1.0, Payoff.square(), n_paths=20_000, seed=6, grid=TimeGrid(1.0, 128))
    out.append(("x^2 delta", _within(e.value, e.std_error, 2.0), f"{e.value:.3f} +- {e.std_error:.3f}"))
    g = TimeGrid(1.0, 128)
    b = sample_bundle(g, 0.1, seed=7, n_paths=20_000)
    w = bel_weight_plain(0.1, WeightFn.constant(), np.ones_like(b.B), b.B, g)
    out.append(("weight mean zero", _within(w.mean(), w.std() / np.sqrt(w.size), 0.0), f"{w.mean():.4f}"))
    return out


def suite_stability():
    out = []
    t = stability_scan(StabilityScan(zero_drift(), n_paths=256, grid=TimeGrid(1.0, 64)))
    out.append(("zero drift slope", abs(t.slope - 2) < 1e-8, f"{t.slope:.10f}"))
    rs = RegimeSwitching(1.0, 1.0, np.log(0.15), np.log(0.3), np.log(0.2))
    t = stability_scan(StabilityScan(rs, x=np.log(0.2), n_paths=1000, grid=TimeGrid(1.0, 1024), sign=-1.0))
    out.append(("regime slope", abs(t.slope - 2) <= 0.1, f"{t.slope:.3f}"))
    return out


SUITES = {
    "kernel": suite_kernel,
    "noise": suite_noise,
    "sde": suite_sde,
    "model": suite_model,
    "greeks": suite_greeks,
    "stability": suite_stability,
}


def run_suite(name: str):
    names = list(SUITES) if name == "all" else [name]
    checks = []
    for n in names:
        for cname, ok, detail in SUITES[n]():
            checks.append(Check(n, cname, bool(ok), detail))
    return checks

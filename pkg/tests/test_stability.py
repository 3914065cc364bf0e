import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughgreeks.drift import RegimeSwitching, linear_drift, mollify, zero_drift
from roughgreeks.noise import TimeGrid
from roughgreeks.stability import StabilityScan, fit_slope, stability_scan

REGIME = RegimeSwitching(1.0, 1.0, np.log(0.15), np.log(0.3), np.log(0.2))


@settings(max_examples=30)
@given(st.floats(-5, 5), st.floats(0.5, 4))
def test_fit_slope_recovers_exact_power_law(intercept, slope):
    gaps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    m, se = fit_slope(gaps, np.exp(intercept) * gaps**slope)
    assert m == pytest.approx(slope, abs=1e-10)
    assert se < 1e-8


def test_fit_slope_needs_three_levels():
    with pytest.raises(ValueError):
        fit_slope([0.1, 0.01], [1.0, 0.1])


@pytest.mark.parametrize("kw", [
    dict(p=3), dict(p=1), dict(p=2.5),
    dict(gaps=(0.01, 0.1, 0.001)), dict(gaps=(0.1, 0.0, -1.0)),
    dict(x=9.95), dict(H=0.7),
])
def test_scan_validation(kw):
    with pytest.raises(ValueError):
        StabilityScan(zero_drift(), **kw)


def test_zero_drift_moments_equal_gap_powers():
    t = stability_scan(StabilityScan(zero_drift(), p=4, n_paths=64, grid=TimeGrid(1.0, 16)))
    for r in t.rows:
        assert r.moment == pytest.approx(r.gap**4, rel=1e-9)
    assert t.slope == pytest.approx(4.0, abs=1e-8) and t.p == 4


def test_linear_drift_contracts_the_gap():
    t = stability_scan(StabilityScan(linear_drift(1.0), n_paths=16, grid=TimeGrid(1.0, 64)))
    # sup over t is attained at t = 0 for a contracting linear flow
    for r in t.rows:
        assert r.moment == pytest.approx(r.gap**2, rel=1e-9)


def test_scan_is_thread_invariant():
    s = StabilityScan(REGIME, x=REGIME.R, n_paths=600, grid=TimeGrid(1.0, 128), sign=-1.0, seed=3)
    a = stability_scan(s, threads=1)
    b = stability_scan(s, threads=3)
    assert a == b


def test_regime_slope_close_to_p():
    s = StabilityScan(REGIME, x=REGIME.R, n_paths=1000, grid=TimeGrid(1.0, 512), sign=-1.0, seed=5)
    t = stability_scan(s)
    assert abs(t.slope - 2) <= 0.15
    assert all(r.stderr > 0 for r in t.rows)


def test_mollified_regime_slope_is_two():
    m = mollify(REGIME, 16)
    s = StabilityScan(m, x=REGIME.R, gaps=(1e-2, 1e-3, 1e-4), n_paths=200, grid=TimeGrid(1.0, 128), sign=-1.0)
    assert stability_scan(s).slope == pytest.approx(2.0, abs=0.05)

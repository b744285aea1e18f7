import math

import numpy as np
import pytest
from scipy.integrate import quad

from fractalwave.energy import build_system
from fractalwave.equilibrium import (
    equilibrium_gap,
    gap_bound,
    stationary_norm,
    stationary_sum,
    undamped_growth,
    write_equilibrium_csv,
    zero_mode_growth_rate,
    zero_mode_variance,
)
from fractalwave.kernel import damped_V
from fractalwave.spectrum import Spectrum, solve_spectrum, weyl_diagnostics
from fractalwave.topology import load_spec


def test_basel_sum(interval_D10):
    rep = stationary_norm(interval_D10, 1.0, K=200)
    assert rep.total == pytest.approx(1 / 24, rel=0.005)
    assert rep.modes[0] == 1 and len(rep.modes) == 200
    # exact eigenvalues give the partial Basel sum
    k = np.arange(1, 201)
    assert stationary_sum((k * np.pi) ** 2, 1.0)[-1] == pytest.approx(np.sum(1 / (4 * k**2 * np.pi**2)), rel=1e-14)


def test_weyl_tail_is_reported_not_added(interval_D10):
    rep = stationary_norm(interval_D10, 1.0, K=200)
    assert rep.weyl_tail is not None and rep.weyl_tail > 0
    assert rep.total == pytest.approx(rep.stationary.sum())
    fit = weyl_diagnostics(interval_D10, None, (1, int(0.8 * interval_D10.K)))
    k = np.arange(201, 10**7, dtype=float)
    direct = np.sum(1.0 / (4 * np.exp(fit.intercept) * k**fit.slope))
    assert rep.weyl_tail == pytest.approx(direct, rel=1e-3)
    # the fitted law bends below (k pi)**2 at this level, so the tail is conservative
    assert rep.weyl_tail > 1 / 24 - rep.total


def test_neumann_excludes_zero_mode(interval):
    spec_N = solve_spectrum(build_system(interval, 8, "N"), K=60)
    rep = stationary_norm(spec_N, 0.5)
    assert rep.modes[0] == 2
    assert np.all(rep.lam > 0)
    assert np.isfinite(rep.total)
    assert rep.zero_mode_rate == pytest.approx(1.0)
    with pytest.raises(ValueError, match="zero mode"):
        stationary_norm(spec_N, 0.5, K=1)


def test_undamped_has_no_limit(interval_D10):
    with pytest.raises(ValueError, match="no limit law"):
        stationary_norm(interval_D10, 0.0)
    with pytest.raises(ValueError):
        equilibrium_gap(interval_D10, 0.0, [1.0])
    with pytest.raises(ValueError):
        stationary_sum([1.0], 0.0)
    with pytest.raises(ValueError):
        stationary_sum([0.0, 1.0], 1.0)


def test_gap_at_zero_is_stationary(interval_D10):
    rep = equilibrium_gap(interval_D10, 1.0, [0.0], K=20)
    np.testing.assert_array_equal(rep.gaps[:, 0], rep.stationary)


def test_gap_monotone_and_bounded(interval_D10):
    times = np.array([0.0, 0.5, 1.0, 2.0, 5.0])
    rep = equilibrium_gap(interval_D10, 1.0, times, K=200)
    assert np.all(np.diff(rep.gaps, axis=1) <= 1e-15)
    assert np.all(rep.total_gap <= rep.bound * (1 + 1e-12))


def test_gap_decay_rate(interval_D10):
    rep = equilibrium_gap(interval_D10, 1.0, [1.0, 5.0], K=200)
    under = rep.lam > 1.0
    ratio = rep.gaps[under, 1] / rep.gaps[under, 0]
    assert np.all(ratio <= math.exp(-8) * 1.1)


def test_gap_against_quadrature():
    lam, beta, t = 30.0, 0.7, 1.5
    # V**2 < e^{-120} beyond s = 60
    tail = quad(lambda s: float(damped_V(lam, s, beta)) ** 2, t, 60.0, limit=1000, epsabs=1e-15, epsrel=1e-12)[0]
    assert gap_bound([lam], beta, [t])[0] >= tail
    sysm = build_system(load_spec("interval"), 1, "D")
    rep = equilibrium_gap(Spectrum(sysm, np.array([lam]), np.ones((1, 1))), beta, [t])
    assert rep.gaps[0, 0] == pytest.approx(tail, rel=1e-8)


def test_gap_bound_overdamped_modes_exact():
    # lambda <= beta**2 enter with their exact gap
    lam, beta = np.array([0.5, 0.9]), 1.0
    t = np.array([2.0])
    tails = [quad(lambda s: float(damped_V(l, s, beta)) ** 2, 2.0, np.inf)[0] for l in lam]
    assert gap_bound(lam, beta, t)[0] == pytest.approx(sum(tails), rel=1e-8)


def test_undamped_growth():
    tab = undamped_growth(1.0, [2 * math.pi])
    assert tab[0, 1] == pytest.approx(math.pi, rel=1e-14)
    t = np.linspace(0.1, 50, 400)
    for lam in (0.3, 1.0, 7.0):
        var = undamped_growth(lam, t)[:, 1]
        assert np.all(var >= t / (2 * lam) - 1 / (4 * lam**1.5) - 1e-12)
        direct = [quad(lambda s: math.sin(math.sqrt(lam) * s) ** 2 / lam, 0, tt, limit=200)[0] for tt in t[::80]]
        np.testing.assert_allclose(var[::80], direct, rtol=1e-9)
    T = undamped_growth(1.0, [100.0, 200.0])[:, 1]
    assert T[1] / T[0] == pytest.approx(2.0, rel=0.01)


def test_undamped_growth_validation():
    with pytest.raises(ValueError):
        undamped_growth(0.0, [1.0])
    with pytest.raises(ValueError):
        undamped_growth(1.0, [2.0, 1.0])
    with pytest.raises(ValueError):
        undamped_growth(1.0, [-1.0, 1.0])


def test_zero_mode():
    beta = 0.5
    assert zero_mode_growth_rate(beta) == pytest.approx(1.0)
    v = zero_mode_variance(beta, np.array([100.0, 200.0]))
    assert (v[1] - v[0]) / 100 == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(ValueError):
        zero_mode_growth_rate(0.0)


def test_csv(tmp_path, interval_D10):
    rep = equilibrium_gap(interval_D10, 1.0, [1.0, 2.0], K=3)
    write_equilibrium_csv(tmp_path / "e.csv", rep)
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "k,lambda,stationary_var,gap_at_1,gap_at_2"
    assert len(rows) == 4
    assert float(rows[1].split(",")[2]) == rep.stationary[0]

import numpy as np
import pytest

from fractalwave.energy import build_system
from fractalwave.errors import NumericalError
from fractalwave.kernel import damped_V, increment_var, int_V2, transition_arrays
from fractalwave.simulate import (
    _sqrt_psd_2x2,
    advance,
    field_at,
    init_simulation,
    mode_normals,
    project,
    run_schedule,
    truncation_tail,
)
from fractalwave.topology import load_spec
from fractalwave.spectrum import Spectrum, WeylFit, solve_spectrum


@pytest.fixture(scope="module")
def small(interval):
    return solve_spectrum(build_system(interval, 6, "D"))


def test_default_init_is_zero(small):
    st = init_simulation(small, 1.0, 10, seed=0, n_replicas=3)
    assert st.Y.shape == (3, 10)
    assert not st.Y.any() and not st.Ydot.any()
    assert st.t == 0.0 and st.step == 0


def test_projection_of_first_mode(small):
    c = project(small, small.phi[:, 0], K=5)
    np.testing.assert_allclose(c, [1, 0, 0, 0, 0], atol=1e-12)
    st = init_simulation(small, 1.0, 5, 0, initial=(c, np.zeros(5)))
    np.testing.assert_allclose(st.Y[0], c)


def test_init_validation(small):
    with pytest.raises(ValueError):
        init_simulation(small, 1.0, small.K + 1, 0)
    with pytest.raises(ValueError):
        init_simulation(small, -1.0, 3, 0)
    with pytest.raises(ValueError):
        init_simulation(small, 1.0, 3, 0, n_replicas=0)
    with pytest.raises(ValueError):
        init_simulation(small, 1.0, 3, 0, initial=(np.zeros(2), np.zeros(3)))


def test_deterministic_part_is_V(small):
    K = 6
    st = init_simulation(small, 0.8, K, 0, initial=(np.zeros(K), np.ones(K)))
    out = run_schedule(st, [0.3, 1.0, 2.5], noise=False)[-1]
    np.testing.assert_allclose(out.Y[0], damped_V(small.lam[:K], 2.5, 0.8), rtol=1e-10, atol=1e-14)
    assert out.t == pytest.approx(2.5)


def test_one_step_variance(small):
    R, K, h = 100_000, 4, 0.5
    st = advance(init_simulation(small, 1.0, K, seed=3, n_replicas=R), h)
    expected = int_V2(small.lam[:K], h, 1.0)
    var = (st.Y**2).mean(axis=0)
    se = (st.Y**2).std(axis=0, ddof=1) / np.sqrt(R)
    assert np.all(np.abs(var - expected) < 3 * se)


def test_increment_monte_carlo():
    # single mode, lambda = 10, beta = 1, s = 1, t = 0.1
    sysm = build_system(load_spec("interval"), 0, "N")
    spec = Spectrum(sysm, np.array([10.0]), np.ones((2, 1)))
    R = 100_000
    st = init_simulation(spec, 1.0, 1, seed=5, n_replicas=R)
    a, b = run_schedule(st, [1.0, 1.1])
    d2 = (b.Y[:, 0] - a.Y[:, 0]) ** 2
    exact = float(increment_var(10.0, 1.0, 0.1, 1.0))
    assert abs(d2.mean() - exact) < 3 * d2.std(ddof=1) / np.sqrt(R)


def test_chapman_kolmogorov_covariance(small):
    lam = small.lam[:5]
    P1, Q1 = transition_arrays(lam, 0.25, 1.0)
    P2, Q2 = transition_arrays(lam, 0.5, 1.0)
    composed = P1 @ Q1 @ np.swapaxes(P1, -1, -2) + Q1
    np.testing.assert_allclose(composed, Q2, rtol=1e-10, atol=1e-16)


def test_bitwise_reproducible(small):
    run = lambda: run_schedule(init_simulation(small, 1.0, 20, seed=42, n_replicas=2), [0.1, 0.5, 1.0])[-1]
    a, b = run(), run()
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_array_equal(a.Ydot, b.Ydot)


def test_mode_noise_independent_of_K(small):
    a = advance(init_simulation(small, 1.0, 5, seed=9), 0.2)
    b = advance(init_simulation(small, 1.0, 30, seed=9), 0.2)
    np.testing.assert_array_equal(a.Y, b.Y[:, :5])


def test_threaded_matches_serial(small):
    st = init_simulation(small, 1.0, 30, seed=1, n_replicas=4)
    np.testing.assert_array_equal(advance(st, 0.3).Y, advance(st, 0.3, workers=3).Y)


def test_streams_differ():
    a = mode_normals(1, 0, 0, 4)
    assert not np.array_equal(a, mode_normals(1, 1, 0, 4))
    assert not np.array_equal(a, mode_normals(1, 0, 1, 4))
    assert not np.array_equal(a, mode_normals(2, 0, 0, 4))
    np.testing.assert_array_equal(a, mode_normals(1, 0, 0, 4))


def test_noise_off_from_rest_stays_zero(small):
    out = run_schedule(init_simulation(small, 1.0, 10, 0, n_replicas=2), [0.5, 1.0], noise=False)
    assert all(not s.Y.any() for s in out)


def test_schedule_validation(small):
    st = advance(init_simulation(small, 1.0, 3, 0), 1.0)
    with pytest.raises(ValueError):
        run_schedule(st, [0.5])
    with pytest.raises(ValueError):
        advance(st, 0.0)


def test_field_reproduces_mode(small):
    K = 4
    Y0 = np.array([1.0, 0, 0, 0])
    st = init_simulation(small, 1.0, K, 0, initial=(Y0, np.zeros(K)))
    names = small.system.complex.names()
    f = field_at(st, names)
    np.testing.assert_allclose(f.values[0], small.values_at(names)[:, 0], atol=1e-15)
    assert f.vertices == tuple(names)


def test_dirichlet_endpoints_vanish(small):
    st = run_schedule(init_simulation(small, 1.0, small.K, 4, n_replicas=5), [0.7])[-1]
    f = field_at(st, ["0", "1", "1:1"])
    assert np.all(f.values[:, :2] == 0.0)
    assert np.any(f.values[:, 2] != 0.0)


def test_psd_factor():
    lam = np.array([0.0, 1.0, 50.0, 1e4])
    _, Q = transition_arrays(lam, 0.3, 0.5)
    L = _sqrt_psd_2x2(Q)
    np.testing.assert_allclose(L @ np.swapaxes(L, -1, -2), Q, rtol=1e-10, atol=1e-18)
    with pytest.raises(NumericalError):
        _sqrt_psd_2x2(np.array([[[1.0, 2.0], [2.0, 1.0]]]))


def test_truncation_tail_decreases(interval_D10):
    tails = [truncation_tail(interval_D10, 1.0, 2.0, K) for K in (50, 100, 200)]
    assert tails[0] > tails[1] > tails[2] > 0


def test_truncation_tail_with_exact_law(interval_D10):
    law = WeylFit(2.0, np.log(np.pi**2), 1.0, 1.0, (1, 2), 0.0)
    k = np.arange(101, 4 * 10**6, dtype=float)
    # beyond k[-1] the variance is (1 - e^{-4}) / (4 lambda) to high accuracy
    direct = float(np.sum(int_V2((k * np.pi) ** 2, 2.0, 1.0))) + (1 - np.exp(-4)) / (4 * np.pi**2 * k[-1])
    assert truncation_tail(interval_D10, 1.0, 2.0, 100, weyl=law) == pytest.approx(direct, rel=1e-6)

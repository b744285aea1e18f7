"""The fourteen acceptance checks, shared by ``fractalwave report`` and the test suite.

Each check returns a :class:`CriterionResult` with the measured quantities, so
a failure reports how far off it was rather than just a boolean.
"""

from __future__ import annotations

import itertools
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from .energy import (
    HarmonicStructure,
    build_system,
    dimension_exponents,
    resistance_table,
    verify_harmonic_structure,
)
from .equilibrium import (
    equilibrium_gap,
    stationary_norm,
    stationary_sum,
    undamped_growth,
    zero_mode_variance,
)
from .kernel import WaveParams, damped_V, damped_Vdot, int_V2, laplace_V2, sup_V_bound, transition_arrays
from .regularity import (
    cell_edge_pairs,
    fit_exponent,
    l2_modulus_slq,
    spatial_variogram_exact,
    temporal_variogram_lanczos,
)
from .simulate import init_simulation, run_schedule
from .spectrum import solve_spectrum, weyl_diagnostics
from .topology import PRESETS, load_spec

LAGS = np.logspace(-4, -2, 9)
# Levels at which lags down to 1e-4 are resolved: lambda_max * 1e-8 >> 1.
RESOLVED_LEVEL = {"interval": 16, "gasket": 12}
MIDPOINT = {"interval": ((1,), "1"), "gasket": ((1,), "p2")}
EDGE_WORD = {"interval": (2,) + (1,) * 9, "gasket": (2, 3, 1, 2, 3, 1, 2)}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d}: {self.title} ({self.summary}; {self.seconds:.1f}s)"


@lru_cache(maxsize=None)
def _system(preset: str, level: int, b: str = "N"):
    return build_system(load_spec(preset), level, b)


@lru_cache(maxsize=None)
def _spectrum(preset: str, level: int, b: str = "N", K: int | None = None):
    return solve_spectrum(_system(preset, level, b), K)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def criterion_1() -> CriterionResult:
    """Interval spectrum oracle at level 10."""
    t0 = time.perf_counter()
    sd = _spectrum("interval", 10, "D", 5)
    rel = sd.lam / (np.arange(1, 6) * np.pi) ** 2 - 1
    sn = _spectrum("interval", 10, "N", 5)
    lam1 = float(sn.lam[0])
    const = float(np.max(np.abs(sn.phi[:, 0] - sn.phi[0, 0])))
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(np.abs(rel) < 0.01) and abs(lam1) < 1e-9 and const < 1e-9 and elapsed < 30)
    return CriterionResult(
        1,
        "interval spectrum oracle",
        ok,
        f"max rel err {np.max(np.abs(rel)):.2e}, N lambda_1 {lam1:.1e}, phi_1 spread {const:.1e}",
        {"rel_err": rel.tolist(), "lambda1_N": lam1, "phi1_spread": const, "runtime": elapsed},
    )


def _subsets(labels):
    for r in range(len(labels) + 1):
        yield from itertools.combinations(labels, r)


@_timed
def criterion_2(presets=PRESETS) -> CriterionResult:
    """Interlacing over every boundary subset, first 50 modes."""
    levels = {"interval": 8, "gasket": 4, "hata": 7}
    worst = -np.inf
    count = 0
    for name in presets:
        spec = load_spec(name)
        n = levels[name]
        lamN = _spectrum(name, n, "N", 50).lam
        lamD = _spectrum(name, n, "D", 50).lam
        for sub in _subsets(spec.boundary):
            lam = solve_spectrum(build_system(spec, n, list(sub)), 50).lam
            tol = 1e-9 * np.maximum(1.0, lam)
            worst = max(worst, float(np.max(lamN - lam - tol)), float(np.max(lam - lamD - tol)))
            count += 1
    ok = worst <= 0
    return CriterionResult(
        2, "eigenvalue interlacing", bool(ok), f"{count} boundary subsets, worst excess {worst:.2e}", {"worst": worst}
    )


@_timed
def criterion_3(presets=PRESETS) -> CriterionResult:
    """Harmonic renormalization on presets; a perturbed gasket must fail."""
    res = {name: verify_harmonic_structure(load_spec(name), HarmonicStructure.from_spec(load_spec(name)))["residual"]
           for name in presets}
    g = load_spec("gasket")
    bad = verify_harmonic_structure(g, HarmonicStructure(g.harmonic["A0"], [0.6, 0.6, 0.5]))["residual"]
    ok = all(r < 1e-10 for r in res.values()) and bad > 1e-3
    summary = ", ".join(f"{k} {v:.1e}" for k, v in res.items()) + f"; perturbed {bad:.2e}"
    return CriterionResult(3, "harmonic renormalization", bool(ok), summary, {"residuals": res, "perturbed": bad})


@_timed
def criterion_4() -> CriterionResult:
    """Weyl fits: gasket D level 7 and interval D level 10, window k in [5, 100]."""
    g = load_spec("gasket")
    dg = dimension_exponents(g.harmonic["r"])
    fg = weyl_diagnostics(_spectrum("gasket", 7, "D"), dg, (5, 100))
    fi = weyl_diagnostics(_spectrum("interval", 10, "D", 200), dimension_exponents([0.5, 0.5]), (5, 100))
    target = 2 * np.log(3) / np.log(5)
    ok = abs(fg.d_s_estimate - target) <= 0.07 and abs(fi.d_s_estimate - 1.0) <= 0.05
    return CriterionResult(
        4,
        "Weyl spectral dimension",
        bool(ok),
        f"gasket {fg.d_s_estimate:.4f} vs {target:.4f}, interval {fi.d_s_estimate:.4f} vs 1",
        {"gasket": fg.d_s_estimate, "gasket_ref": target, "interval": fi.d_s_estimate},
    )


def _quad_inf(f):
    val, _ = integrate.quad(f, 0, np.inf, epsabs=0.0, epsrel=1e-12, limit=1000)
    return val


@_timed
def criterion_5() -> CriterionResult:
    """Laplace-transform identity for V**2 on a 27-point grid."""
    worst = 0.0
    for alpha in (0.3, 1.0, 2.5):
        for beta in (0.5, 1.0, 2.0):
            for lam in (0.25 * beta**2, beta**2, 4 * beta**2 + 1.0):
                closed = laplace_V2(alpha, WaveParams(beta, lam))
                num = _quad_inf(lambda t: np.exp(-2 * alpha * t) * float(damped_V(lam, t, beta)) ** 2)
                worst = max(worst, abs(closed - num) / abs(num))
    return CriterionResult(5, "Laplace transform of V^2", worst < 1e-8, f"max rel diff {worst:.2e}", {"worst": worst})


def _quad(f, h):
    # asking for ~1e-13 makes quad warn about round-off once it reaches it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, 0, h, epsabs=0.0, epsrel=1e-13, limit=500)
    return val


@_timed
def criterion_6() -> CriterionResult:
    """Transition matrix vs expm, Q entries vs quadrature, Chapman-Kolmogorov."""
    phi_err = q_err = ck_err = 0.0
    for lam in (0.0, 0.25, 1.0, 10.0, 400.0):
        for beta in (0.0, 0.5, 1.0, 3.0):
            A = np.array([[0.0, 1.0], [-lam, -2 * beta]])
            for h in (0.01, 0.3, 2.0):
                Phi, Q = transition_arrays(lam, h, beta)
                E = expm(A * h)
                phi_err = max(phi_err, float(np.max(np.abs(Phi - E)) / max(1.0, np.max(np.abs(E)))))
                q11 = _quad(lambda s: float(damped_V(lam, s, beta)) ** 2, h)
                q12 = _quad(lambda s: float(damped_V(lam, s, beta) * damped_Vdot(lam, s, beta)), h)
                q22 = _quad(lambda s: float(damped_Vdot(lam, s, beta)) ** 2, h)
                ref = np.array([[q11, q12], [q12, q22]])
                q_err = max(q_err, float(np.max(np.abs(Q - ref)) / max(1e-300, np.max(np.abs(ref)))))
                for h2 in (0.05, 1.1):
                    P1, Q1 = Phi, Q
                    P2, Q2 = transition_arrays(lam, h2, beta)
                    P12, Q12 = transition_arrays(lam, h + h2, beta)
                    d_phi = np.max(np.abs(P2 @ P1 - P12)) / max(1.0, np.max(np.abs(P12)))
                    Qc = P2 @ Q1 @ P2.T + Q2
                    d_q = np.max(np.abs(Qc - Q12)) / max(1e-300, np.max(np.abs(Q12)))
                    ck_err = max(ck_err, float(d_phi), float(d_q))
    ok = phi_err < 1e-9 and q_err < 1e-8 and ck_err < 1e-10
    return CriterionResult(
        6,
        "mode-transition exactness",
        bool(ok),
        f"Phi {phi_err:.1e}, Q {q_err:.1e}, Chapman-Kolmogorov {ck_err:.1e}",
        {"phi": phi_err, "Q": q_err, "ck": ck_err},
    )


@_timed
def criterion_7(replicas: int = 100_000, seed: int = 7) -> CriterionResult:
    """Simulated mode variances and cross-covariances against the exact law."""
    t0 = time.perf_counter()
    sp = _spectrum("interval", 10, "D", 50)
    state = init_simulation(sp, 1.0, 50, seed, n_replicas=replicas)
    z_var, z_cov = 0.0, 0.0
    for st in run_schedule(state, [0.5, 2.0]):
        Y = st.Y
        exact = int_V2(sp.lam[:50], st.t, 1.0)
        sq = Y * Y
        z = (sq.mean(axis=0) - exact) / (sq.std(axis=0, ddof=1) / np.sqrt(replicas))
        z_var = max(z_var, float(np.max(np.abs(z))))
        C = Y.T @ Y / replicas
        iu = np.triu_indices(50, 1)
        prods_sd = np.sqrt(np.maximum((sq.T @ sq) / replicas - C**2, 1e-300))
        zc = C[iu] / (prods_sd[iu] / np.sqrt(replicas))
        z_cov = max(z_cov, float(np.max(np.abs(zc))))
    elapsed = time.perf_counter() - t0
    ok = z_var <= 3 and z_cov <= 4 and elapsed < 300
    return CriterionResult(
        7,
        "simulator vs exact variances",
        bool(ok),
        f"max |z| variance {z_var:.2f} (<=3), covariance {z_cov:.2f} (<=4)",
        {"z_var": z_var, "z_cov": z_cov, "runtime": elapsed, "seed": seed},
    )


def _target(name: str) -> float:
    return 2.0 - dimension_exponents(load_spec(name).harmonic["r"]).d_s


@_timed
def criterion_8(presets=("interval", "gasket"), steps: int = 1000) -> CriterionResult:
    """Pointwise temporal variogram slope over lags [1e-4, 1e-2]."""
    out, ok = {}, True
    for name in presets:
        system = _system(name, RESOLVED_LEVEL[name], "D")
        tab = temporal_variogram_lanczos(system, 1.0, MIDPOINT[name], 2.0, LAGS, steps)
        fit = fit_exponent(tab)
        target = _target(name)
        out[name] = {"slope": fit.slope, "target": target, "level": system.level}
        ok &= abs(fit.slope - target) <= 0.05
    summary = ", ".join(f"{k} {v['slope']:.4f} vs {v['target']:.4f}" for k, v in out.items())
    return CriterionResult(8, "temporal Hoelder exponent", bool(ok), summary, out)


@_timed
def criterion_9() -> CriterionResult:
    """Spatial variogram slope against resistance distance at t = 2, beta = 1."""
    si = _spectrum("interval", 10, "D", 200)
    pi = cell_edge_pairs(si.system.complex, EDGE_WORD["interval"], range(3, 9))
    fi = fit_exponent(spatial_variogram_exact(si, 1.0, 2.0, pi), (2.0**-8, 2.0**-3))
    sg = _spectrum("gasket", 7, "D")
    pg = []
    for shift in range(3):
        word = tuple((i + shift) % 3 + 1 for i in range(1, 7))
        pg += cell_edge_pairs(sg.system.complex, word, range(1, 7))
    tg = spatial_variogram_exact(sg, 1.0, 2.0, pg)
    fg = fit_exponent(tg, (0.0, 0.15))
    ok = abs(fi.slope - 1) <= 0.1 and abs(fg.slope - 1) <= 0.1
    return CriterionResult(
        9,
        "spatial Hoelder exponent",
        bool(ok),
        f"interval {fi.slope:.4f}, gasket {fg.slope:.4f} (target 1)",
        {"interval": fi.to_dict(), "gasket": fg.to_dict(), "gasket_max_ratio": float(np.max(tg.value / tg.separation))},
    )


@_timed
def criterion_10(presets=("interval", "gasket"), steps: int = 1000) -> CriterionResult:
    """L2 modulus slope over lags [1e-4, 1e-2] by stochastic Lanczos quadrature."""
    probes = {"interval": 16, "gasket": 4}
    out, ok = {}, True
    for name in presets:
        system = _system(name, RESOLVED_LEVEL[name], "D")
        tab = l2_modulus_slq(system, 1.0, 2.0, LAGS, steps, probes.get(name, 4), seed=0)
        fit = fit_exponent(tab)
        target = _target(name)
        out[name] = {
            "slope": fit.slope,
            "target": target,
            "max_rel_stderr": float(np.max(tab.stderr / tab.value)),
            "level": system.level,
        }
        ok &= abs(fit.slope - target) <= 0.05
    summary = ", ".join(f"{k} {v['slope']:.4f} vs {v['target']:.4f}" for k, v in out.items())
    return CriterionResult(10, "L2 modulus exponent", bool(ok), summary, out)


@_timed
def criterion_11() -> CriterionResult:
    """Stationary norm of the interval field against 1/24, and the gap bound at t = 5."""
    exact = stationary_sum((np.arange(1, 201) * np.pi) ** 2, 1.0)[-1]
    sp = _spectrum("interval", 10, "D", 200)
    discrete = stationary_norm(sp, 1.0, 200).total
    rep = equilibrium_gap(sp, 1.0, [5.0], 200)
    per_mode = np.exp(-2.0 * 5.0) / (2.0 * (rep.lam - 1.0))
    e1, e2 = abs(exact * 24 - 1), abs(discrete * 24 - 1)
    gap_ok = bool(np.all(rep.gaps[:, 0] <= per_mode))
    ok = e1 < 0.005 and e2 < 0.02 and gap_ok
    return CriterionResult(
        11,
        "equilibrium variance",
        bool(ok),
        f"exact-lambda rel err {e1:.2e}, level-10 rel err {e2:.2e}, gap under bound: {gap_ok}",
        {"exact": exact, "discrete": discrete, "gap_ok": gap_ok},
    )


@_timed
def criterion_12() -> CriterionResult:
    """Undamped linear growth; Neumann zero mode excluded with rate 1/(4 beta**2)."""
    ratios = {}
    for lam in (1.0, np.pi**2):
        v = undamped_growth(lam, [100.0, 200.0])[:, 1]
        ratios[lam] = float(v[1] / v[0])
    beta = 1.0
    rep = stationary_norm(_spectrum("interval", 10, "N", 20), beta)
    excluded = rep.modes[0] == 2
    v = zero_mode_variance(beta, [200.0, 400.0])
    slope = float((v[1] - v[0]) / 200.0)
    rate = rep.zero_mode_rate
    ok = all(abs(r - 2) <= 0.02 for r in ratios.values()) and excluded and abs(slope / rate - 1) < 1e-2
    return CriterionResult(
        12,
        "non-equilibrium growth",
        bool(ok),
        f"Var(2T)/Var(T) = {ratios[1.0]:.4f}, {ratios[np.pi**2]:.4f}; zero mode excluded: {bool(excluded)}, "
        f"rate {rate:.4f}, observed {slope:.4f}",
        {"ratios": list(ratios.values()), "rate": rate, "observed_rate": slope},
    )


@_timed
def criterion_13(beta: float = 1.0) -> CriterionResult:
    """Kernel bounds on a 1000-point lambda grid."""
    lam = np.r_[0.0, np.logspace(-3, 4, 999)]
    worst, eq = -np.inf, 0.0
    for t in (0.1, 1.0, 5.0):
        V = damped_V(lam, t, beta)
        bound = float(sup_V_bound(beta, t))
        worst = max(worst, float(np.max(np.abs(V)) - bound))
        eq = max(eq, abs(float(V[0]) - bound))
    T = 5.0
    tt = np.linspace(0.0, T, 501)
    Vd = damped_Vdot(lam[:, None], tt[None, :], beta)
    vd_bound = max(np.exp(beta * T), T)
    vd_max = float(np.max(np.abs(Vd)))
    ok = worst <= 1e-14 and eq <= 1e-14 and vd_max <= vd_bound
    return CriterionResult(
        13,
        "kernel bounds",
        bool(ok),
        f"max |V| - bound {worst:.1e}, equality gap at 0 {eq:.1e}, sup|Vdot| {vd_max:.3f} <= {vd_bound:.1f}",
        {"excess": worst, "eq_gap": eq, "vdot_max": vd_max},
    )


@_timed
def criterion_14(presets=PRESETS, m: int = 2) -> CriterionResult:
    """Resistance between level-m vertices is unchanged by refinement (levels m..m+3)."""
    worst = 0.0
    for name in presets:
        base = _system(name, m, "N").complex
        verts = [base.ids[v] for v in range(base.n_vertices)]
        pairs = list(itertools.combinations(verts, 2))
        ref = resistance_table(_system(name, m, "N"), pairs)
        for n in range(m + 1, m + 4):
            R = resistance_table(_system(name, n, "N"), pairs)
            worst = max(worst, float(np.max(np.abs(R - ref))))
    return CriterionResult(
        14, "nested resistance consistency", worst < 1e-9, f"max drift {worst:.1e}", {"worst": worst}
    )


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
    13: criterion_13,
    14: criterion_14,
}

# criteria that take a preset selection
PRESET_AWARE = {2, 3, 8, 10, 14}


def run_all(numbers=None, presets=None) -> list[CriterionResult]:
    out = []
    for k in numbers or CRITERIA:
        fn = CRITERIA[k]
        if presets is not None and k in PRESET_AWARE:
            sel = tuple(p for p in presets if k not in (8, 10) or p in RESOLVED_LEVEL)
            out.append(fn(presets=sel))
        else:
            out.append(fn())
    return out

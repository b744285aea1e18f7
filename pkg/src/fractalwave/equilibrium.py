"""Long-time behaviour of the mode variances.

For beta > 0 each mode with lambda > 0 settles to variance 1/(4 beta lambda);
the gap to that limit is the tail integral of V**2.  A Neumann zero mode never
settles (its variance grows like t / (4 beta**2)), and without damping every
mode variance grows linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .kernel import int_V2
from .spectrum import Spectrum, weyl_diagnostics


@dataclass(frozen=True)
class EquilibriumReport:
    beta: float
    b: str
    modes: np.ndarray  # 1-based mode numbers that enter the sums
    lam: np.ndarray
    stationary: np.ndarray
    total: float
    weyl_tail: float | None
    zero_mode_rate: float | None
    times: np.ndarray | None = None
    gaps: np.ndarray | None = None  # (n_modes, n_times)
    bound: np.ndarray | None = None  # (n_times,)

    @property
    def total_gap(self) -> np.ndarray | None:
        return None if self.gaps is None else self.gaps.sum(axis=0)


def _require_damping(beta: float) -> None:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0:
        raise ValueError(
            "beta = 0: mode variances grow linearly in t, so the solution has no limit law"
        )


def stationary_sum(lam, beta: float) -> np.ndarray:
    """Partial sums of 1/(4 beta lambda_k) for an array of positive eigenvalues."""
    _require_damping(beta)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    return np.cumsum(1.0 / (4.0 * beta * lam))


def _admissible(spectrum: Spectrum, K: int | None):
    K = spectrum.K if K is None else int(K)
    if not 1 <= K <= spectrum.K:
        raise ValueError(f"K = {K} outside [1, {spectrum.K}]")
    start = 1 if spectrum.system.is_neumann else 0
    if K <= start:
        raise ValueError("no admissible modes: only the Neumann zero mode was requested")
    k = np.arange(start, K)
    return k + 1, spectrum.lam[k]


def _weyl_tail(spectrum: Spectrum, beta: float, K: int) -> float | None:
    # sum_{k > K} 1/(4 beta A k**p) with lambda_k ~ A k**p fitted on the computed modes
    lo = 2 if spectrum.system.is_neumann else 1
    hi = max(lo + 3, int(0.8 * spectrum.K))
    if hi > spectrum.K:
        return None
    fit = weyl_diagnostics(spectrum, None, (lo, hi))
    if fit.slope <= 1:
        return None
    return float(zeta(fit.slope, K + 1) / (4.0 * beta * np.exp(fit.intercept)))


def stationary_norm(spectrum: Spectrum, beta: float, K: int | None = None) -> EquilibriumReport:
    """E||u_inf||**2 truncated at K, zero mode excluded for b = N.

    The Weyl-extrapolated remainder is reported separately and never added.
    """
    _require_damping(beta)
    K = spectrum.K if K is None else int(K)
    modes, lam = _admissible(spectrum, K)
    stat = 1.0 / (4.0 * beta * lam)
    return EquilibriumReport(
        beta=float(beta),
        b=spectrum.b,
        modes=modes,
        lam=lam,
        stationary=stat,
        total=float(stat.sum()),
        weyl_tail=_weyl_tail(spectrum, beta, K),
        zero_mode_rate=zero_mode_growth_rate(beta) if spectrum.system.is_neumann else None,
    )


def equilibrium_gap(spectrum: Spectrum, beta: float, times, K: int | None = None) -> EquilibriumReport:
    """Per-mode gap 1/(4 beta lambda) - int_0^t V**2 and the tail bound at each time."""
    rep = stationary_norm(spectrum, beta, K)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    lam = rep.lam
    I = int_V2(lam[:, None], times[None, :], beta)
    gaps = np.maximum(rep.stationary[:, None] - I, 0.0)
    bound = gap_bound(lam, beta, times)
    return EquilibriumReport(**{**rep.__dict__, "times": times, "gaps": gaps, "bound": bound})


def gap_bound(lam, beta: float, times) -> np.ndarray:
    """Exact gaps of modes with lambda <= beta**2 plus (1/2beta) e^{-2beta t} sum (lambda - beta**2)^{-1}."""
    _require_damping(beta)
    lam = np.asarray(lam, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    slow = lam <= beta**2
    finite = np.zeros(len(times))
    if np.any(slow):
        ls = lam[slow]
        finite = (1.0 / (4.0 * beta * ls))[:, None] - int_V2(ls[:, None], times[None, :], beta)
        finite = finite.sum(axis=0)
    fast = np.sum(1.0 / (lam[~slow] - beta**2))
    return finite + np.exp(-2.0 * beta * times) / (2.0 * beta) * fast


def undamped_growth(lam: float, times) -> np.ndarray:
    """Columns (t, Var Y(t)) for beta = 0: t/(2 lam) - sin(2 sqrt(lam) t)/(4 lam**1.5)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be increasing")
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    w = np.sqrt(lam)
    var = t / (2 * lam) - np.sin(2 * w * t) / (4 * lam * w)
    return np.column_stack([t, var])


def zero_mode_variance(beta: float, times) -> np.ndarray:
    """Var of the lambda = 0 mode, int_0^t V_beta(0, s)**2 ds."""
    return int_V2(0.0, np.asarray(times, dtype=float), beta)


def zero_mode_growth_rate(beta: float) -> float:
    """Asymptotic slope of the zero-mode variance: V_beta(0, t) -> 1/(2 beta)."""
    _require_damping(beta)
    return 1.0 / (4.0 * beta**2)


def write_equilibrium_csv(path, report: EquilibriumReport) -> None:
    cols = ["k", "lambda", "stationary_var"]
    if report.times is not None:
        cols += [f"gap_at_{t:g}" for t in report.times]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, k in enumerate(report.modes):
            row = [str(int(k)), repr(float(report.lam[i])), repr(float(report.stationary[i]))]
            if report.gaps is not None:
                row += [repr(float(g)) for g in report.gaps[i]]
            fh.write(",".join(row) + "\n")

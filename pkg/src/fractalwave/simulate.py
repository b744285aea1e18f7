"""Exact-in-distribution sampling of the truncated mode expansion.

Each mode k evolves independently by the Gaussian transition
``(Y, Ydot) <- Phi_k(h) (Y, Ydot) + xi``, ``xi ~ N(0, Q_k(h))``.  Noise for
mode k at step j comes from a Philox stream keyed by ``(seed, k)`` with the step
index in the high counter word, so results do not depend on the order in which
modes are processed and are bitwise reproducible for a fixed seed and schedule.
A state carries R independent replicas side by side.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .kernel import int_V2, transition_arrays
from .spectrum import Spectrum
from .errors import NumericalError


@dataclass(frozen=True)
class SimulationState:
    t: float
    Y: np.ndarray  # (R, K)
    Ydot: np.ndarray  # (R, K)
    beta: float
    spectrum: Spectrum
    seed: int
    step: int = 0

    @property
    def K(self) -> int:
        return self.Y.shape[1]

    @property
    def n_replicas(self) -> int:
        return self.Y.shape[0]

    @property
    def lam(self) -> np.ndarray:
        return self.spectrum.lam[: self.K]


@dataclass(frozen=True)
class FieldSample:
    t: float
    vertices: tuple[str, ...]
    values: np.ndarray  # (R, n_vertices)


def project(spectrum: Spectrum, f, K: int | None = None) -> np.ndarray:
    """Mass-weighted coefficients <phi_k, f> of a function on the kept vertices."""
    K = spectrum.K if K is None else K
    f = np.asarray(f, dtype=float)
    return spectrum.phi[:, :K].T @ (spectrum.system.mass * f)


def init_simulation(
    spectrum: Spectrum,
    beta: float,
    K: int,
    seed: int,
    initial=None,
    n_replicas: int = 1,
) -> SimulationState:
    """State at t = 0; ``initial`` is an optional pair of per-mode arrays (Y, Ydot)."""
    if not 1 <= K <= spectrum.K:
        raise ValueError(f"K = {K} outside [1, {spectrum.K}]")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    Y = np.zeros((n_replicas, K))
    Yd = np.zeros((n_replicas, K))
    if initial is not None:
        y0, yd0 = (np.asarray(a, dtype=float) for a in initial)
        if y0.shape != (K,) or yd0.shape != (K,):
            raise ValueError(f"initial amplitudes must have shape ({K},)")
        Y[:] = y0
        Yd[:] = yd0
    return SimulationState(t=0.0, Y=Y, Ydot=Yd, beta=float(beta), spectrum=spectrum, seed=int(seed))


def _stream(seed: int, mode: int, step: int) -> np.random.Generator:
    key = np.random.SeedSequence(entropy=seed, spawn_key=(mode,)).generate_state(2, np.uint64)
    bitgen = np.random.Philox(key=key, counter=[0, 0, 0, step])
    return np.random.Generator(bitgen)


def mode_normals(seed: int, mode: int, step: int, n_replicas: int) -> np.ndarray:
    """The (n_replicas, 2) standard normals consumed by one mode in one step."""
    return _stream(seed, mode, step).standard_normal((n_replicas, 2))


def _sqrt_psd_2x2(Q: np.ndarray) -> np.ndarray:
    """Lower factors L with L L^T = Q, pivoting on the larger diagonal entry."""
    a, b, d = Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 1]
    scale = np.maximum(np.maximum(a, d), 1e-300)
    det = a * d - b * b
    if np.any(det < -1e-12 * scale**2) or np.any(np.minimum(a, d) < -1e-14 * scale):
        raise NumericalError("transition covariance is not positive semi-definite")
    L = np.zeros(Q.shape)
    piv = d > a
    # unpivoted: L = [[sqrt a, 0], [b/sqrt a, sqrt(d - b^2/a)]]
    sa = np.sqrt(np.maximum(a, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(sa > 0, b / sa, 0.0)
        l22 = np.sqrt(np.maximum(d - l21 * l21, 0.0))
        # pivoted: factor [[d, b], [b, a]] then swap rows back
        sd = np.sqrt(np.maximum(d, 0.0))
        p21 = np.where(sd > 0, b / sd, 0.0)
        p22 = np.sqrt(np.maximum(a - p21 * p21, 0.0))
    L[..., 0, 0] = np.where(piv, p22, sa)
    L[..., 0, 1] = np.where(piv, p21, 0.0)
    L[..., 1, 0] = np.where(piv, 0.0, l21)
    L[..., 1, 1] = np.where(piv, sd, l22)
    return L


def advance(state: SimulationState, h: float, noise: bool = True, workers: int = 1) -> SimulationState:
    """Exact Gaussian step of size h for every mode and replica."""
    if not h > 0:
        raise ValueError("step h must be positive")
    lam = state.lam
    Phi, Q = transition_arrays(lam, h, state.beta)
    Y = Phi[:, 0, 0] * state.Y + Phi[:, 0, 1] * state.Ydot
    Yd = Phi[:, 1, 0] * state.Y + Phi[:, 1, 1] * state.Ydot
    if noise:
        L = _sqrt_psd_2x2(Q)
        R = state.n_replicas

        def draw(k: int) -> np.ndarray:
            z = mode_normals(state.seed, k, state.step, R)
            return z @ L[k].T

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                xi = list(pool.map(draw, range(state.K)))
        else:
            xi = [draw(k) for k in range(state.K)]
        xi = np.stack(xi, axis=1)  # (R, K, 2)
        Y = Y + xi[..., 0]
        Yd = Yd + xi[..., 1]
    return replace(state, t=state.t + float(h), Y=Y, Ydot=Yd, step=state.step + 1)


def run_schedule(state: SimulationState, times, noise: bool = True) -> list[SimulationState]:
    """Advance through increasing output times; returns the state at each."""
    out = []
    for t in times:
        if t < state.t:
            raise ValueError("output times must be increasing")
        if t > state.t:
            state = advance(state, t - state.t, noise=noise)
        out.append(state)
    return out


def field_at(state: SimulationState, vertices) -> FieldSample:
    """u(t, x) = sum_k Y_k phi_k(x) for each replica."""
    cx = state.spectrum.system.complex
    vertices = list(vertices)
    names = tuple(cx.name(cx.lookup(v)) for v in vertices)
    Phi = state.spectrum.values_at(vertices)[:, : state.K]
    return FieldSample(t=state.t, vertices=names, values=state.Y @ Phi.T)


def truncation_tail(spectrum: Spectrum, beta: float, t: float, K: int, weyl=None) -> float:
    """Weyl-extrapolated estimate of sum_{k > K} E[Y_k(t)^2]; a diagnostic only.

    Uses lam_k ~ exp(intercept) k**slope and the large-lam behaviour of the
    variance integral, summed to 10**6 extra modes plus an integral remainder.
    """
    if weyl is None:
        from .spectrum import weyl_diagnostics

        lo = 2 if spectrum.lam[0] <= 0 else 1
        hi = max(lo + 3, int(0.8 * spectrum.K))
        weyl = weyl_diagnostics(spectrum, None, (lo, hi))
    k = np.arange(K + 1, K + 10**6 + 1, dtype=float)
    lam = np.exp(weyl.intercept) * k**weyl.slope
    body = float(np.sum(int_V2(lam[:2000], t, beta))) + float(
        np.sum(_var_large_lam(lam[2000:], t, beta))
    )
    kmax = k[-1]
    A, p = np.exp(weyl.intercept), weyl.slope
    rem = _var_large_lam(1.0, t, beta) * kmax ** (1 - p) / (A * (p - 1))
    return body + float(rem)


def _var_large_lam(lam, t, beta):
    # Var Y(t) ~ (1 - e^{-2 beta t}) / (4 beta lam), or t / (2 lam) when beta = 0
    lam = np.asarray(lam, dtype=float)
    if beta == 0:
        return t / (2 * lam)
    return -np.expm1(-2 * beta * t) / (4 * beta * lam)

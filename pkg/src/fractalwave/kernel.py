"""Damped-oscillator kernels and the exact per-mode transition law.

V(lam, t) solves v'' + 2 beta v' + lam v = 0 with v(0) = 0, v'(0) = 1.  All
branches are evaluated through

    V    = t exp(-beta t) S(z),        z = (beta**2 - lam) t**2
    Vdot = exp(-beta t) (C(z) - beta t S(z))

with S(z) = sinh(sqrt z)/sqrt z and C(z) = cosh(sqrt z), continued to z < 0 as
sin/cos.  For |z| < 1 both are summed as power series, so the removable
singularity at lam = beta**2 never produces 0/0.

The vectorized functions take ``(lam, t, beta)`` and broadcast; the
``kernel_*`` wrappers take a :class:`WaveParams`.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import exprel

_Z_SERIES = 1.0
_N_TERMS = 18
_S_COEF = np.array([1.0 / factorial(2 * j + 1) for j in range(_N_TERMS)])
_C_COEF = np.array([1.0 / factorial(2 * j) for j in range(_N_TERMS)])
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class WaveParams:
    beta: float
    lam: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"damping beta must be >= 0, got {self.beta}")
        if self.lam < 0:
            raise ValueError(f"eigenvalue lam must be >= 0, got {self.lam}")

    @property
    def regime(self) -> str:
        d = self.lam - self.beta**2
        if d > 0:
            return "under"
        if d < 0:
            return "over"
        return "critical"


@dataclass(frozen=True)
class ModeTransition:
    """Mean map Phi(h) and noise covariance Q(h) of one mode over a step h."""

    h: float
    Phi: np.ndarray
    Q: np.ndarray


def _series(coef, z):
    out = np.zeros_like(z)
    for c in coef[::-1]:
        out = out * z + c
    return out


def _prep(lam, t, beta):
    lam, t, beta = np.broadcast_arrays(
        np.asarray(lam, dtype=float), np.asarray(t, dtype=float), np.asarray(beta, dtype=float)
    )
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    return lam, t, beta


def _V_Vdot(lam, t, beta):
    lam, t, beta = _prep(lam, t, beta)
    delta = beta**2 - lam
    z = delta * t**2
    V = np.empty(lam.shape)
    Vd = np.empty(lam.shape)

    small = np.abs(z) < _Z_SERIES
    if np.any(small):
        zs, ts, bs = z[small], t[small], beta[small]
        S = _series(_S_COEF, zs)
        C = _series(_C_COEF, zs)
        e = np.exp(-bs * ts)
        V[small] = ts * e * S
        Vd[small] = e * (C - bs * ts * S)

    over = (~small) & (z > 0)
    if np.any(over):
        a = np.sqrt(delta[over])
        to, bo = t[over], beta[over]
        ep = np.exp((a - bo) * to)
        em = np.exp(-(a + bo) * to)
        V[over] = (ep - em) / (2 * a)
        Vd[over] = ((a - bo) * ep + (a + bo) * em) / (2 * a)

    under = (~small) & (z < 0)
    if np.any(under):
        w = np.sqrt(-delta[under])
        tu, bu = t[under], beta[under]
        e = np.exp(-bu * tu)
        s, c = np.sin(w * tu), np.cos(w * tu)
        V[under] = e * s / w
        Vd[under] = e * (c - bu * s / w)
    return V, Vd


def damped_V(lam, t, beta):
    return _V_Vdot(lam, t, beta)[0]


def damped_Vdot(lam, t, beta):
    return _V_Vdot(lam, t, beta)[1]


def _phi11_minus_one(lam, t, beta):
    # Phi11 = exp(-beta t) (C + beta t S); evaluated so that small t keeps relative accuracy
    lam, t, beta = _prep(lam, t, beta)
    z = (beta**2 - lam) * t**2
    out = np.empty(lam.shape)
    small = np.abs(z) < _Z_SERIES
    if np.any(small):
        zs, ts, bs = z[small], t[small], beta[small]
        S = _series(_S_COEF, zs)
        Cm1 = zs * _series(_C_COEF[1:], zs)
        bt = bs * ts
        out[small] = np.expm1(-bt) * (1.0 + Cm1 + bt * S) + Cm1 + bt * S
    big = ~small
    if np.any(big):
        V, Vd = _V_Vdot(lam[big], t[big], beta[big])
        out[big] = Vd + 2 * beta[big] * V - 1.0
    return out


def _int_V2_quad(lam: float, T: float, beta: float) -> float:
    # composite Gauss-Legendre; only used where the integrand is non-oscillatory
    if T == 0:
        return 0.0
    n_panels = int(min(1e5, np.ceil(2.0 * beta * T + np.sqrt(abs(lam - beta**2)) * T) + 1))
    edges = np.linspace(0.0, T, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    V = damped_V(lam, s, beta)
    return float(np.sum(w * V * V))


def int_V2(lam, T, beta):
    """Integral of V(lam, s)**2 over [0, T] (vectorized).

    Closed forms for the over- and underdamped branches; composite Gauss-Legendre
    where those forms lose digits to cancellation (near-critical or short times).
    """
    lam, T, beta = _prep(lam, T, beta)
    delta = beta**2 - lam
    with np.errstate(divide="ignore"):
        tscale = np.where(beta > 0, np.minimum(T, 1.0 / np.where(beta > 0, beta, 1.0)), T)
    x = np.sqrt(np.abs(delta)) * tscale
    out = np.empty(lam.shape)
    closed = x >= 0.1

    under = closed & (delta < 0)
    if np.any(under):
        w2 = -delta[under]
        b, t, l = beta[under], T[under], lam[under]
        w = np.sqrt(w2)
        E0 = t * exprel(-2 * b * t)
        Ec = (2 * b - np.exp(-2 * b * t) * (2 * b * np.cos(2 * w * t) - 2 * w * np.sin(2 * w * t))) / (4 * l)
        out[under] = (E0 - Ec) / (2 * w2)

    over = closed & (delta > 0)
    if np.any(over):
        a2 = delta[over]
        a = np.sqrt(a2)
        b, t = beta[over], T[over]
        out[over] = (
            t * exprel(2 * (a - b) * t) + t * exprel(-2 * (a + b) * t) - 2 * t * exprel(-2 * b * t)
        ) / (4 * a2)

    rest = np.flatnonzero(~closed.ravel())
    flat = out.reshape(-1)
    for i in rest:
        flat[i] = _int_V2_quad(float(lam.flat[i]), float(T.flat[i]), float(beta.flat[i]))
    return out


def transition_arrays(lam, h, beta):
    """Phi(h) and Q(h) for arrays of modes; shapes (..., 2, 2)."""
    lam, h, beta = _prep(lam, h, beta)
    V, Vd = _V_Vdot(lam, h, beta)
    I = int_V2(lam, h, beta)
    Phi = np.empty(lam.shape + (2, 2))
    Phi[..., 0, 0] = Vd + 2 * beta * V
    Phi[..., 0, 1] = V
    Phi[..., 1, 0] = -lam * V
    Phi[..., 1, 1] = Vd
    Q = np.empty(lam.shape + (2, 2))
    Q[..., 0, 0] = I
    Q[..., 0, 1] = Q[..., 1, 0] = 0.5 * V * V
    Q[..., 1, 1] = V * Vd + beta * V * V + lam * I
    return Phi, Q


def increment_var(lam, s, t, beta):
    """E[(Y(s+t) - Y(s))**2] for a mode started at rest (vectorized over lam).

    Uses V(t + r) = Phi11(t) V(r) + V(t) Vdot(r), which turns the first integral
    into a combination of the Q(s) entries.
    """
    lam, s, t = np.broadcast_arrays(np.asarray(lam, float), np.asarray(s, float), np.asarray(t, float))
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("s and t must be non-negative")
    a = _phi11_minus_one(lam, t, beta)
    c = damped_V(lam, t, beta)
    Vs, Vds = _V_Vdot(lam, s, beta)
    Is = int_V2(lam, s, beta)
    Js = Vs * Vds + beta * Vs * Vs + lam * Is
    It = int_V2(lam, t, beta)
    out = a * a * Is + a * c * Vs * Vs + c * c * Js + It
    return np.maximum(out, 0.0)


# --- WaveParams-level API -------------------------------------------------


def kernel_V(p: WaveParams, t):
    """V_beta(lam, t)."""
    out = damped_V(p.lam, t, p.beta)
    return float(out) if np.ndim(out) == 0 else out


def kernel_Vdot(p: WaveParams, t):
    """d/dt V_beta(lam, t)."""
    out = damped_Vdot(p.lam, t, p.beta)
    return float(out) if np.ndim(out) == 0 else out


def integral_V2(p: WaveParams, T):
    out = int_V2(p.lam, T, p.beta)
    return float(out) if np.ndim(out) == 0 else out


def laplace_V2(alpha: float, p: WaveParams) -> float:
    """Closed form of the integral of exp(-2 alpha t) V(lam, t)**2 over [0, inf)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    b, l = p.beta, p.lam
    return 1.0 / (4.0 * (alpha + b) * (alpha**2 + 2 * alpha * b + l))


def mode_transition(p: WaveParams, h: float) -> ModeTransition:
    if not h > 0:
        raise ValueError("step h must be positive")
    Phi, Q = transition_arrays(p.lam, h, p.beta)
    return ModeTransition(h=float(h), Phi=Phi, Q=Q)


def stationary_variance(p: WaveParams) -> float:
    """Limit of Var Y(t) as t -> inf, 1 / (4 beta lam)."""
    if p.beta == 0:
        raise ValueError("beta = 0: the variance grows without bound, no stationary law")
    if p.lam == 0:
        raise ValueError("lam = 0: the zero mode is not square integrable, no stationary law")
    return 1.0 / (4.0 * p.beta * p.lam)


def increment_variance(p: WaveParams, s: float, t: float) -> float:
    return float(increment_var(p.lam, s, t, p.beta))


def sup_V_bound(beta: float, t):
    """Supremum over lam >= 0 of |V_beta(lam, t)|, attained at lam = 0."""
    t = np.asarray(t, dtype=float)
    if beta == 0:
        return t
    return -np.expm1(-2 * beta * t) / (2 * beta)


def kernel_table(p: WaveParams, times) -> np.ndarray:
    """Columns (t, V, Vdot)."""
    t = np.asarray(times, dtype=float)
    V, Vd = _V_Vdot(p.lam, t, p.beta)
    return np.column_stack([t, V, Vd])

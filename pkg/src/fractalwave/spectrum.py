"""Generalized eigenproblem (-H) phi = lambda M phi and Weyl-law diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import DimensionData, EnergySystem
from .errors import StructureError


@dataclass(frozen=True)
class Spectrum:
    """Lowest K eigenpairs; ``phi[:, k]`` is mass-orthonormal over ``system.kept``."""

    system: EnergySystem
    lam: np.ndarray
    phi: np.ndarray

    @property
    def K(self) -> int:
        return len(self.lam)

    @property
    def b(self) -> str:
        return self.system.b_label

    @property
    def level(self) -> int:
        return self.system.level

    def values_at(self, vertices) -> np.ndarray:
        """Eigenvector values (len(vertices) x K); pinned vertices give exact zeros."""
        cx = self.system.complex
        pos = {int(v): i for i, v in enumerate(self.system.kept)}
        out = np.zeros((len(vertices), self.K))
        for r, v in enumerate(vertices):
            idx = cx.lookup(v)
            if idx in pos:
                out[r] = self.phi[pos[idx]]
        return out

    def truncate(self, K: int) -> "Spectrum":
        if not 1 <= K <= self.K:
            raise ValueError(f"K must be in [1, {self.K}]")
        return Spectrum(self.system, self.lam[:K], self.phi[:, :K])

    def local_measure(self, x, K: int | None = None) -> "SpectralMeasure":
        """Atoms lambda_k with weights phi_k(x)**2, k <= K."""
        K = self.K if K is None else K
        w = self.values_at([x])[0, :K] ** 2
        return SpectralMeasure(self.lam[:K].copy(), w, "exact")

    def trace_measure(self, K: int | None = None) -> "SpectralMeasure":
        """Atoms lambda_k with unit weights, k <= K."""
        K = self.K if K is None else K
        return SpectralMeasure(self.lam[:K].copy(), np.ones(K), "exact")


@dataclass(frozen=True)
class SpectralMeasure:
    """Discrete measure sum_j weights[j] delta_{nodes[j]} on the spectrum.

    Integrating g against it gives sum_k g(lambda_k) phi_k(x)**2 (local) or
    sum_k g(lambda_k) (trace).  Stochastic trace estimates concatenate the
    rules of all probes and tag each node with its probe index.
    """

    nodes: np.ndarray
    weights: np.ndarray
    source: str
    probe: np.ndarray | None = None

    def integrate(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Integral of g given its node values (nodes along axis 0); returns (value, stderr)."""
        values = np.asarray(values, dtype=float)
        if self.probe is None:
            return np.tensordot(self.weights, values, axes=(0, 0)), np.zeros(values.shape[1:])
        n_probe = int(self.probe.max()) + 1
        per = np.stack(
            [np.tensordot(self.weights[self.probe == j], values[self.probe == j], axes=(0, 0)) for j in range(n_probe)]
        )
        err = per.std(axis=0, ddof=1) / np.sqrt(n_probe) if n_probe > 1 else np.full(per.shape[1:], np.nan)
        return per.mean(axis=0), err


@dataclass(frozen=True)
class WeylFit:
    slope: float
    intercept: float
    d_s_estimate: float
    d_s_reference: float | None
    window: tuple[int, int]
    residual_std: float

    @property
    def deviation(self) -> float | None:
        if self.d_s_reference is None:
            return None
        return self.d_s_estimate - self.d_s_reference


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _lowest(A: np.ndarray, K: int):
    if K >= A.shape[0]:
        return sla.eigh(A, driver="evd")
    return sla.eigh(A, subset_by_index=[0, K - 1], driver="evr")


def _eigh_deflated(A: np.ndarray, q: np.ndarray, K: int):
    # A q = 0 exactly in exact arithmetic (zero row sums); split it off with a
    # Householder reflector so the zero mode is exact and the rest stays orthogonal.
    n = A.shape[0]
    q = q / np.linalg.norm(q)
    v = q.copy()
    v[0] += 1.0 if q[0] >= 0 else -1.0
    v /= np.linalg.norm(v)
    Av = A @ v
    HAH = A - 2.0 * np.outer(v, Av) - 2.0 * np.outer(Av, v) + 4.0 * (v @ Av) * np.outer(v, v)
    B = HAH[1:, 1:]
    B = 0.5 * (B + B.T)
    if K > 1:
        mu, Y = _lowest(B, K - 1)
    else:
        mu, Y = np.zeros(0), np.zeros((n - 1, 0))
    Z = np.vstack([np.zeros((1, Y.shape[1])), Y])
    Z = Z - 2.0 * np.outer(v, v @ Z)
    return np.r_[0.0, mu], np.column_stack([q, Z])


def solve_spectrum(system: EnergySystem, K: int | None = None, method: str = "dense") -> Spectrum:
    """Lowest K eigenpairs via the symmetric scaling M^{-1/2}(-H)M^{-1/2}.

    ``method="dense"`` uses LAPACK on the full matrix; ``method="sparse"`` runs
    shift-invert Lanczos and is meant for K much smaller than the dimension.
    """
    n = system.dim
    K = n if K is None else int(K)
    if not 1 <= K <= n:
        raise ValueError(f"K = {K} outside [1, {n}]")
    m = system.mass
    if np.any(m <= 0):
        raise StructureError("non-positive lumped mass")
    d = 1.0 / np.sqrt(m)
    S = sp.diags(d) @ (-system.H) @ sp.diags(d)
    if method == "dense":
        A = S.toarray()
        A = 0.5 * (A + A.T)
        if system.is_neumann:
            lam, U = _eigh_deflated(A, np.sqrt(m), K)
        else:
            lam, U = _lowest(A, K)
    elif method == "sparse":
        if K >= n - 1:
            raise ValueError("sparse path needs K < dim - 1")
        lam, U = spla.eigsh(S.tocsc(), k=K, sigma=-1e-8, which="LM")
        order = np.argsort(lam)
        lam, U = lam[order], U[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    phi = _fix_signs(d[:, None] * U)
    return Spectrum(system=system, lam=lam, phi=phi)


def _scaled_operator(system: EnergySystem) -> sp.csr_matrix:
    d = 1.0 / np.sqrt(system.mass)
    return (sp.diags(d) @ (-system.H) @ sp.diags(d)).tocsr()


def _lanczos(S, q: np.ndarray, steps: int):
    """Jacobi matrix of S from start vector q (no reorthogonalization)."""
    q = q / np.linalg.norm(q)
    alpha, beta = [], []
    q_prev = np.zeros_like(q)
    b = 0.0
    scale = 0.0
    for _ in range(steps):
        w = S @ q - b * q_prev
        a = float(q @ w)
        w -= a * q
        alpha.append(a)
        b = float(np.linalg.norm(w))
        scale = max(scale, abs(a), b)
        # invariant Krylov subspace reached (symmetric start vectors hit this early)
        if b <= 1e-9 * scale:
            break
        beta.append(b)
        q_prev, q = q, w / b
    alpha = np.array(alpha)
    beta = np.array(beta[: len(alpha) - 1])
    return alpha, beta


def _gauss_rule(alpha, beta):
    try:
        theta, Z = sla.eigh_tridiagonal(alpha, beta)
    except np.linalg.LinAlgError:
        # stemr occasionally fails on nearly split matrices; the dense solver does not
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        theta, Z = sla.eigh(T, driver="evd")
    return np.maximum(theta, 0.0), Z[0] ** 2


def local_spectral_measure(system: EnergySystem, x, steps: int = 1500) -> SpectralMeasure:
    """Gauss rule for the spectral measure of vertex x via Lanczos.

    Integrates polynomials of degree < 2 * steps exactly against
    sum_k phi_k(x)**2 delta_{lambda_k} over all modes of the system, without
    forming eigenvectors.  Meant for levels too large for dense solves.
    """
    cx = system.complex
    v = cx.lookup(x)
    pos = np.searchsorted(system.kept, v)
    if pos >= system.dim or system.kept[pos] != v:
        return SpectralMeasure(np.zeros(1), np.zeros(1), "lanczos")
    S = _scaled_operator(system)
    e = np.zeros(system.dim)
    e[pos] = 1.0
    theta, w = _gauss_rule(*_lanczos(S, e, steps))
    # e_x^T g(S) e_x / m_x = sum_k g(lambda_k) phi_k(x)**2
    w = w / system.mass[pos]
    return SpectralMeasure(theta, w, "lanczos")


def trace_spectral_measure(system: EnergySystem, steps: int = 1500, probes: int = 4, seed: int = 0) -> SpectralMeasure:
    """Stochastic Lanczos quadrature for sum_k delta_{lambda_k} (Rademacher probes)."""
    if probes < 1:
        raise ValueError("need at least one probe")
    S = _scaled_operator(system)
    n = system.dim
    rng = np.random.default_rng(seed)
    nodes, weights, tags = [], [], []
    for j in range(probes):
        z = rng.choice([-1.0, 1.0], size=n)
        theta, w = _gauss_rule(*_lanczos(S, z, steps))
        nodes.append(theta)
        weights.append(n * w)
        tags.append(np.full(len(theta), j))
    w = np.concatenate(weights)
    return SpectralMeasure(np.concatenate(nodes), w, "slq", probe=np.concatenate(tags))


def weyl_diagnostics(spectrum: Spectrum, dims: DimensionData | None = None, window=(2, 50)) -> WeylFit:
    """Least-squares slope of log lambda_k against log k over ``window`` (1-based, inclusive)."""
    k0, k1 = int(window[0]), int(window[1])
    if k0 < 1 or k1 > spectrum.K or k1 - k0 < 2:
        raise ValueError(f"window {window} empty or outside computed modes 1..{spectrum.K}")
    k = np.arange(k0, k1 + 1)
    lam = spectrum.lam[k - 1]
    if np.any(lam <= 0):
        raise ValueError("window contains non-positive eigenvalues")
    X = np.log(k)
    Y = np.log(lam)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    return WeylFit(
        slope=float(slope),
        intercept=float(intercept),
        d_s_estimate=float(2.0 / slope),
        d_s_reference=None if dims is None else dims.d_s,
        window=(k0, k1),
        residual_std=float(np.std(resid)),
    )


def write_spectrum_csv(path, spectrum: Spectrum) -> None:
    with open(path, "w") as fh:
        fh.write("k,lambda\n")
        for k, lam in enumerate(spectrum.lam, start=1):
            fh.write(f"{k},{float(lam)!r}\n")


def write_eigenvectors_csv(path, spectrum: Spectrum) -> None:
    """One row per vertex of V_n (pinned vertices included as zeros)."""
    cx = spectrum.system.complex
    vals = spectrum.values_at(range(cx.n_vertices))
    names = cx.names()
    with open(path, "w") as fh:
        fh.write("vertex_id," + ",".join(f"phi_{k}" for k in range(1, spectrum.K + 1)) + "\n")
        for name, row in zip(names, vals):
            fh.write(name + "," + ",".join(repr(float(x)) for x in row) + "\n")

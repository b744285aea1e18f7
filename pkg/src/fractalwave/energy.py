"""Renormalized energies, lumped masses, boundary pinning and resistance metric.

Matrices follow the Laplacian sign convention of A0: negative diagonal,
non-negative off-diagonal, zero row sums.  Eigenproblems and resistances work
with ``-H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import StructureError
from .topology import CellTable, FractalSpec, VertexComplex, cell_table, expand_complex


@dataclass(frozen=True)
class HarmonicStructure:
    A0: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        A0 = np.asarray(self.A0, dtype=float)
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "r", r)
        if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
            raise ValueError("A0 must be square")
        if not np.allclose(A0, A0.T, atol=1e-14):
            raise ValueError("A0 must be symmetric")
        if np.max(np.abs(A0.sum(axis=1))) > 1e-12:
            raise ValueError("A0 rows must sum to zero")
        off = A0 - np.diag(np.diag(A0))
        if np.any(off < 0):
            raise ValueError("A0 off-diagonal entries must be non-negative")
        if not _connected(off > 0):
            raise ValueError("A0 is not irreducible")
        if np.any((r <= 0) | (r >= 1)):
            raise ValueError(f"harmonic structure is not regular: r = {r.tolist()}")

    @classmethod
    def from_spec(cls, spec: FractalSpec) -> "HarmonicStructure":
        if not spec.harmonic:
            raise StructureError(f"fractal {spec.name!r} carries no harmonic structure")
        return cls(spec.harmonic["A0"], spec.harmonic["r"])


@dataclass(frozen=True)
class DimensionData:
    d_H: float
    d_s: float


@dataclass(frozen=True)
class EnergySystem:
    """Energy matrix and lumped mass on the kept vertices of V_n.

    ``kept`` maps reduced indices to vertex indices of ``complex``; vertices of
    F0 outside ``b`` are pinned to zero and removed.  ``H_full`` is the
    unpinned energy, used for resistances whatever ``b`` is.
    """

    complex: VertexComplex
    H: sp.csr_matrix
    mass: np.ndarray
    b: tuple[str, ...]
    kept: np.ndarray
    boundary: tuple[str, ...]
    H_full: sp.csr_matrix | None = None

    @property
    def level(self) -> int:
        return self.complex.level

    @property
    def dim(self) -> int:
        return len(self.kept)

    @property
    def is_neumann(self) -> bool:
        return set(self.b) == set(self.boundary)

    @property
    def b_label(self) -> str:
        if self.is_neumann:
            return "N"
        if not self.b:
            return "D"
        return "{" + ",".join(self.b) + "}"


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == n


def dimension_exponents(r) -> DimensionData:
    """d_H solving sum r_i**d = 1 (bisection-grade root) and d_s = 2 d_H / (d_H + 1)."""
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r >= 1)):
        raise ValueError(f"weights must lie in (0, 1): {r.tolist()}")

    def g(d):
        return float(np.sum(r**d) - 1.0)

    lo, hi = 1e-9, 64.0
    if g(hi) > 0:
        raise ValueError("d_H exceeds 64; weights too close to 1")
    d_H = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return DimensionData(d_H=d_H, d_s=2.0 * d_H / (d_H + 1.0))


def assemble_energy(complex_: VertexComplex, hs: HarmonicStructure, cells: CellTable) -> sp.csr_matrix:
    """H_n = sum_w r_w^{-1} scatter(A0, cell w)."""
    if complex_.level != cells.level:
        raise ValueError(f"level mismatch: complex {complex_.level}, cells {cells.level}")
    N0 = hs.A0.shape[0]
    if complex_.cells.shape[1] != N0:
        raise ValueError("A0 size does not match the number of boundary points")
    C = complex_.cells
    w = 1.0 / cells.r
    rows = np.repeat(C, N0, axis=1).ravel()
    cols = np.tile(C, (1, N0)).ravel()
    vals = (w[:, None] * hs.A0.ravel()[None, :]).ravel()
    n = complex_.n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_mass(complex_: VertexComplex, cells: CellTable) -> np.ndarray:
    """Lumped mass: each cell hands mu_w / N0 to each of its vertices."""
    if complex_.level != cells.level:
        raise ValueError(f"level mismatch: complex {complex_.level}, cells {cells.level}")
    N0 = complex_.cells.shape[1]
    m = np.zeros(complex_.n_vertices)
    np.add.at(m, complex_.cells.ravel(), np.repeat(cells.mu / N0, N0))
    return m


def parse_boundary(b, boundary: tuple[str, ...]) -> tuple[str, ...]:
    """Normalize a boundary condition to the tuple of free labels (in F0 order)."""
    if isinstance(b, str):
        if b == "N":
            return tuple(boundary)
        if b == "D":
            return ()
        b = [s for s in b.strip("{}").split(",") if s]
    b = [str(x) for x in b]
    unknown = [x for x in b if x not in boundary]
    if unknown:
        raise ValueError(f"unknown boundary labels {unknown}; F0 = {list(boundary)}")
    return tuple(p for p in boundary if p in b)


def reduce_boundary(complex_: VertexComplex, H, mass: np.ndarray, b, boundary: tuple[str, ...]) -> EnergySystem:
    """Pin F0 \\ b to zero by deleting the corresponding rows, columns and masses."""
    free = parse_boundary(b, boundary)
    pinned = [complex_.boundary_index[k] for k, p in enumerate(boundary) if p not in free]
    kept = np.setdiff1d(np.arange(complex_.n_vertices, dtype=np.int64), pinned)
    H = sp.csr_matrix(H)
    return EnergySystem(
        complex=complex_,
        H=H[kept][:, kept].tocsr(),
        mass=np.asarray(mass)[kept],
        b=free,
        kept=kept,
        boundary=tuple(boundary),
        H_full=H,
    )


def build_system(spec: FractalSpec, n: int, b="N", hs: HarmonicStructure | None = None) -> EnergySystem:
    """Convenience pipeline: complex, cells, energy, mass and pinning at level n."""
    hs = hs or HarmonicStructure.from_spec(spec)
    dims = dimension_exponents(hs.r)
    cx = expand_complex(spec, n)
    cells = cell_table(spec, hs.r, dims.d_H, n)
    H = assemble_energy(cx, hs, cells)
    m = assemble_mass(cx, cells)
    return reduce_boundary(cx, H, m, b, spec.boundary)


def schur_to_boundary(H, boundary_index) -> np.ndarray:
    """Schur complement of -H onto the given vertices (dense)."""
    K = -np.asarray(sp.csr_matrix(H).todense())
    B = np.asarray(boundary_index)
    interior = np.setdiff1d(np.arange(K.shape[0]), B)
    Kbb = K[np.ix_(B, B)]
    if interior.size == 0:
        return Kbb
    Kii = K[np.ix_(interior, interior)]
    Kib = K[np.ix_(interior, B)]
    try:
        X = np.linalg.solve(Kii, Kib)
    except np.linalg.LinAlgError as exc:
        raise StructureError("interior energy block is singular") from exc
    if not np.all(np.isfinite(X)) or np.linalg.cond(Kii) > 1e14:
        raise StructureError("interior energy block is singular")
    return Kbb - Kib.T @ X


def verify_harmonic_structure(spec: FractalSpec, hs: HarmonicStructure) -> dict:
    """Check that the level-1 energy traces back onto A0 on F0."""
    dims = dimension_exponents(hs.r)
    cx = expand_complex(spec, 1)
    cells = cell_table(spec, hs.r, dims.d_H, 1)
    H1 = assemble_energy(cx, hs, cells)
    S = schur_to_boundary(H1, cx.boundary_index)
    residual = float(np.max(np.abs(S - (-hs.A0))))
    return {"pass": residual < 1e-10, "residual": residual}


def effective_resistance(system: EnergySystem, x, y) -> float:
    """R(x, y) on the full network via one grounded linear solve (pinning is ignored)."""
    cx = system.complex
    i, j = cx.lookup(x), cx.lookup(y)
    if i == j:
        return 0.0
    return float(resistance_rows(system, i, [j])[0])


def resistance_rows(system: EnergySystem, x, ys) -> np.ndarray:
    """R(x, y) for many y with a single factorization grounded at x."""
    cx = system.complex
    i = cx.lookup(x)
    if system.H_full is None:
        raise ValueError("system carries no unpinned energy matrix")
    K = (-system.H_full).tocsc()
    n = K.shape[0]
    keep = np.r_[0:i, i + 1 : n]
    Kg = K[keep][:, keep].tocsc()
    js = np.array([cx.lookup(y) for y in ys], dtype=np.int64)
    # R(x, y) = G_yy where G is the inverse of -H grounded at x
    try:
        lu = spla.splu(Kg)
    except RuntimeError as exc:
        raise StructureError("network is disconnected") from exc
    pos = np.searchsorted(keep, js)
    out = np.zeros(len(js))
    mask = js != i
    if mask.any():
        rhs = np.zeros((n - 1, int(mask.sum())))
        rhs[pos[mask], np.arange(int(mask.sum()))] = 1.0
        sol = lu.solve(rhs)
        vals = sol[pos[mask], np.arange(int(mask.sum()))]
        if not np.all(np.isfinite(vals)):
            raise StructureError("network is disconnected")
        out[mask] = vals
    return out


def resistance_table(system: EnergySystem, pairs) -> np.ndarray:
    """R for a list of vertex pairs; groups solves by first vertex."""
    cx = system.complex
    idx = [(cx.lookup(a), cx.lookup(b)) for a, b in pairs]
    out = np.zeros(len(idx))
    by_first: dict[int, list[int]] = {}
    for k, (a, _) in enumerate(idx):
        by_first.setdefault(a, []).append(k)
    for a, ks in by_first.items():
        out[ks] = resistance_rows(system, a, [idx[k][1] for k in ks])
    return out


def write_coo(path, H) -> None:
    """Write a sparse matrix as ``row col value`` lines with a size header."""
    C = sp.coo_matrix(H)
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {float(v)!r}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().lstrip("%").split()
        n, m, _ = (int(s) for s in header)
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, m))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))

"""Combinatorial description of p.c.f. self-similar sets and their level-n vertex complexes.

A fractal is given by M contractions acting on a finite boundary set F0.  The
only geometric information needed is which level-1 boundary images coincide
(the gluing pairs) and which boundary points of F0 reappear as images of
boundary points under a single contraction.  Everything else is propagated
self-similarly.

Vertices are identified by their canonical representative ``(word, label)``:
the shortest word (ties broken lexicographically, then by boundary order)
among all addresses of the same point.  Because the representative of a
level-m point never changes when the complex is refined, ids are stable across
levels.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import StructureError

Word = tuple[int, ...]


@dataclass(frozen=True)
class FractalSpec:
    """Combinatorial IFS.

    ``images[i][p]`` is the boundary label hit by the (i+1)-th contraction at
    boundary point ``p``, or ``None`` for a point that is not in F0.
    ``gluings`` holds pairs ``((i, p), (j, q))`` with 1-based contraction
    indices meaning psi_i(p) = psi_j(q).
    """

    M: int
    boundary: tuple[str, ...]
    images: tuple[dict, ...]
    gluings: tuple[tuple[tuple[int, str], tuple[int, str]], ...]
    name: str = "custom"
    embedding: dict | None = None
    harmonic: dict | None = None

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @classmethod
    def from_dict(cls, data: dict, name: str | None = None) -> "FractalSpec":
        try:
            M = int(data["M"])
            boundary = tuple(str(b) for b in data["boundary"])
            images = tuple(
                {str(k): (None if v is None else str(v)) for k, v in img.items()}
                for img in data["images"]
            )
            gluings = tuple(
                ((int(a[0]), str(a[1])), (int(b[0]), str(b[1])))
                for a, b in data["gluings"]
            )
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise StructureError(f"bad fractal spec: {exc!r}") from exc
        return cls(
            M=M,
            boundary=boundary,
            images=images,
            gluings=gluings,
            name=name or data.get("name", "custom"),
            embedding=copy.deepcopy(data.get("embedding")),
            harmonic=copy.deepcopy(data.get("harmonic")),
        )

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "M": self.M,
            "boundary": list(self.boundary),
            "images": [dict(img) for img in self.images],
            "gluings": [[list(a), list(b)] for a, b in self.gluings],
        }
        # nested dicts are copied so callers cannot mutate a frozen spec
        if self.embedding is not None:
            out["embedding"] = copy.deepcopy(self.embedding)
        if self.harmonic is not None:
            out["harmonic"] = copy.deepcopy(self.harmonic)
        return out


@dataclass(frozen=True)
class VertexComplex:
    """Level-n vertex set V_n with its cells.

    ``cells[c]`` lists the vertex indices of ``psi_w(F0)`` in boundary order for
    the c-th level-n word (lexicographic).  Vertex v has canonical address
    ``(word, label)`` stored as integer arrays: word length, word code (base M,
    first letter most significant) and label rank.  Vertices are sorted by
    that key.
    """

    level: int
    M: int
    boundary: tuple[str, ...]
    word_len: np.ndarray
    word_code: np.ndarray
    label_rank: np.ndarray
    cells: np.ndarray
    boundary_index: tuple[int, ...]
    refine: tuple[tuple[int, int], ...] = ()

    @property
    def n_vertices(self) -> int:
        return len(self.word_len)

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @cached_property
    def ids(self) -> tuple[tuple[Word, str], ...]:
        return tuple(
            (_decode_word(int(c), int(L), self.M), self.boundary[int(k)])
            for L, c, k in zip(self.word_len, self.word_code, self.label_rank)
        )

    @property
    def words(self):
        return itertools.product(range(1, self.M + 1), repeat=self.level)

    def names(self) -> list[str]:
        return [vertex_name(w, p) for w, p in self.ids]

    def name(self, v: int) -> str:
        word = _decode_word(int(self.word_code[v]), int(self.word_len[v]), self.M)
        return vertex_name(word, self.boundary[int(self.label_rank[v])])

    def lookup(self, vertex) -> int:
        """Index of a vertex given as index, name string or ``(word, label)``."""
        if isinstance(vertex, (int, np.integer)):
            if not 0 <= int(vertex) < self.n_vertices:
                raise KeyError(f"vertex index {vertex} out of range")
            return int(vertex)
        if isinstance(vertex, str):
            vertex = parse_vertex_name(vertex)
        word, label = tuple(vertex[0]), str(vertex[1])
        ok = label in self.boundary and len(word) <= self.level and all(1 <= i <= self.M for i in word)
        if ok:
            # any address works: push it down to a level-n cell corner
            k = self.boundary.index(label)
            w = list(word)
            while len(w) < self.level:
                i, k = self.refine[k]
                w.append(i)
            row = 0
            for i in w:
                row = row * self.M + (i - 1)
            return int(self.cells[row, k])
        raise KeyError(f"unknown vertex {vertex_name(word, label)!r}")


@dataclass(frozen=True)
class CellTable:
    """Resistance weight r_w and measure mu_w = r_w**d_H for every level-n word (lexicographic)."""

    level: int
    M: int
    r: np.ndarray
    mu: np.ndarray

    @property
    def words(self):
        return itertools.product(range(1, self.M + 1), repeat=self.level)


def vertex_name(word: Word, label: str) -> str:
    if not word:
        return label
    return ".".join(str(i) for i in word) + ":" + label


def parse_vertex_name(name: str) -> tuple[Word, str]:
    if ":" not in name:
        return (), name
    w, label = name.split(":", 1)
    return tuple(int(i) for i in w.split(".")), label


def _check_structure(spec: FractalSpec) -> None:
    if spec.M < 2:
        raise StructureError(f"need M >= 2 contractions, got {spec.M}")
    if len(spec.boundary) < 2 or len(set(spec.boundary)) != len(spec.boundary):
        raise StructureError("boundary labels must be >= 2 distinct symbols")
    if len(spec.images) != spec.M:
        raise StructureError(f"expected {spec.M} image maps, got {len(spec.images)}")
    labels = set(spec.boundary)
    for i, img in enumerate(spec.images, start=1):
        if set(img) != labels:
            raise StructureError(f"image map of contraction {i} must cover exactly {sorted(labels)}")
        for p, q in img.items():
            if q is not None and q not in labels:
                raise StructureError(f"contraction {i} maps {p!r} to unknown label {q!r}")
    for pair in spec.gluings:
        (i, p), (j, q) = pair
        if not (1 <= i <= spec.M and 1 <= j <= spec.M):
            raise StructureError(f"gluing pair {pair} references contraction outside 1..{spec.M}")
        if p not in labels or q not in labels:
            raise StructureError(f"gluing pair {pair} references label outside F0")
        if i == j:
            raise StructureError(f"gluing pair {pair} glues a cell to itself")
        if spec.images[i - 1][p] is not None or spec.images[j - 1][q] is not None:
            raise StructureError(f"gluing pair {pair} involves a point already in F0")


def _refinements(spec: FractalSpec) -> dict[str, tuple[int, str]]:
    """For each boundary label p, the unique (i, q) with psi_i(q) = p."""
    out: dict[str, tuple[int, str]] = {}
    for i, img in enumerate(spec.images, start=1):
        for q in spec.boundary:
            p = img[q]
            if p is None:
                continue
            if p in out:
                raise StructureError(f"boundary label {p!r} is the image of two level-1 points")
            out[p] = (i, q)
    missing = [p for p in spec.boundary if p not in out]
    if missing:
        raise StructureError(f"boundary labels {missing} do not appear in F1")
    return out


def verify_gluing(spec: FractalSpec) -> dict:
    """Validate the encoding and return diagnostics about the level-1 complex.

    Raises StructureError on malformed input or when V_1 is disconnected.
    """
    _check_structure(spec)
    _refinements(spec)
    cx = expand_complex(spec, 1, _checked=True)
    n_pairs = spec.M * spec.n_boundary
    # connectivity of the cell graph: cells joined when they share a vertex
    parent = list(range(spec.M))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner: dict[int, int] = {}
    for c, verts in enumerate(cx.cells):
        for v in verts:
            if v in owner:
                parent[find(c)] = find(owner[v])
            else:
                owner[v] = c
    connected = len({find(c) for c in range(spec.M)}) == 1
    if not connected:
        raise StructureError("level-1 complex is disconnected")
    if len(set(cx.boundary_index)) != spec.n_boundary:
        raise StructureError("F0 does not inject into V_1")
    return {
        "valid": True,
        "connected": connected,
        "identifications": len(spec.gluings),
        "n_vertices_level1": cx.n_vertices,
        "merged_points": n_pairs - cx.n_vertices,
    }


def _encode(L, wc, lab, M: int, N0: int):
    # (len, word, label) -> one integer with the same ordering
    L = np.asarray(L, dtype=np.int64)
    offset = N0 * (np.power(np.int64(M), L) - 1) // (M - 1)
    return offset + np.asarray(wc, dtype=np.int64) * N0 + np.asarray(lab, dtype=np.int64)


def _decode_word(code: int, L: int, M: int) -> Word:
    out = []
    for _ in range(L):
        code, d = divmod(code, M)
        out.append(d + 1)
    return tuple(reversed(out))


def expand_complex(spec: FractalSpec, n: int, _checked: bool = False) -> VertexComplex:
    """Level-n vertex complex with canonical, level-stable vertex ids.

    Built recursively: V_{m+1} is M relabelled copies of V_m glued along the
    copies' boundary points.  A point interior to copy i keeps its address
    with i prepended; only copy-boundary points need the equivalence classes
    of the gluing rule, so the work per level is linear in the vertex count.
    """
    if n < 0:
        raise ValueError("level must be >= 0")
    if not _checked:
        _check_structure(spec)
    refine = _refinements(spec)
    M, N0 = spec.M, spec.n_boundary
    if N0 * M ** (n + 1) >= 2**62:
        raise ValueError(f"level {n} is too deep for integer vertex keys")
    rank = {p: k for k, p in enumerate(spec.boundary)}

    L = np.zeros(N0, dtype=np.int64)
    wc = np.zeros(N0, dtype=np.int64)
    lab = np.arange(N0, dtype=np.int64)
    cells = np.arange(N0, dtype=np.int64)[None, :]
    bidx = np.arange(N0, dtype=np.int64)

    for _ in range(n):
        nv = len(L)
        offs = np.arange(M, dtype=np.int64)[:, None] * nv
        cL = np.tile(L + 1, M)
        cwc = (np.arange(M, dtype=np.int64)[:, None] * np.power(np.int64(M), L)[None, :] + wc[None, :]).ravel()
        clab = np.tile(lab, M)
        code = _encode(cL, cwc, clab, M, N0)

        # equivalence classes among copy-boundary nodes
        parent: dict[int, int] = {}

        def find(a: int) -> int:
            parent.setdefault(a, a)
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for (i, p), (j, q) in spec.gluings:
            a = find(int(offs[i - 1, 0] + bidx[rank[p]]))
            b = find(int(offs[j - 1, 0] + bidx[rank[q]]))
            if a != b:
                parent[b] = a
        f0_node = {}
        for p in spec.boundary:
            i, q = refine[p]
            f0_node[p] = int(offs[i - 1, 0] + bidx[rank[q]])
            find(f0_node[p])
            cL[f0_node[p]], cwc[f0_node[p]], clab[f0_node[p]] = 0, 0, rank[p]
            code[f0_node[p]] = _encode(0, 0, rank[p], M, N0)

        root = np.arange(M * nv, dtype=np.int64)
        classes: dict[int, list[int]] = {}
        for a in parent:
            classes.setdefault(find(a), []).append(a)
        for members in classes.values():
            best = min(members, key=lambda a: code[a])
            root[members] = best

        reps = np.flatnonzero(root == np.arange(M * nv))
        order = reps[np.argsort(code[reps], kind="stable")]
        new_index = np.empty(M * nv, dtype=np.int64)
        new_index[order] = np.arange(len(order))
        new_index = new_index[root]

        L, wc, lab = cL[order], cwc[order], clab[order]
        cells = new_index[(cells[None, :, :] + offs[:, :, None]).reshape(-1, N0)]
        bidx = np.array([new_index[f0_node[p]] for p in spec.boundary], dtype=np.int64)

    srt = np.sort(cells, axis=1)
    bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
    if bad.size:
        w = _decode_word(int(bad[0]), n, M)
        raise StructureError(f"cell {w} has coincident boundary points")
    return VertexComplex(
        level=n,
        M=M,
        boundary=tuple(spec.boundary),
        word_len=L,
        word_code=wc,
        label_rank=lab,
        cells=cells,
        boundary_index=tuple(int(b) for b in bidx),
        refine=tuple((refine[p][0], rank[refine[p][1]]) for p in spec.boundary),
    )


def cell_table(spec: FractalSpec, r, d_H: float, n: int) -> CellTable:
    r = np.asarray(r, dtype=float)
    if r.shape != (spec.M,):
        raise ValueError(f"need {spec.M} resistance weights, got shape {r.shape}")
    if np.any((r <= 0) | (r >= 1)):
        raise ValueError(f"resistance weights must lie in (0, 1): {r.tolist()}")
    if d_H <= 0:
        raise ValueError("d_H must be positive")
    rw = np.ones(1)
    for _ in range(n):
        rw = np.multiply.outer(r, rw).ravel()
    return CellTable(level=n, M=spec.M, r=rw, mu=rw**d_H)


def vertex_coordinates(spec: FractalSpec, complex_: VertexComplex) -> np.ndarray:
    """Embed vertices with the optional affine maps; raises if no embedding."""
    emb = spec.embedding
    if not emb:
        raise StructureError(f"fractal {spec.name!r} has no embedding")
    base = {p: np.asarray(x, dtype=float) for p, x in emb["boundary"].items()}
    maps = [(np.asarray(m["A"], dtype=float), np.asarray(m["b"], dtype=float)) for m in emb["maps"]]
    out = []
    for word, label in complex_.ids:
        x = base[label]
        for i in reversed(word):
            A, b = maps[i - 1]
            x = A @ x + b
        out.append(x)
    return np.array(out)


PRESETS = ("interval", "gasket", "hata")


def load_spec(source: str | Path) -> FractalSpec:
    """Load a fractal spec from a preset name or a JSON file path."""
    src = str(source)
    if src in PRESETS:
        text = resources.files("fractalwave.presets").joinpath(f"{src}.json").read_text()
        return FractalSpec.from_dict(json.loads(text), name=src)
    path = Path(src)
    if not path.exists():
        raise FileNotFoundError(f"no preset or file named {src!r}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StructureError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return FractalSpec.from_dict(data, name=data.get("name", path.stem))


def hata_spec(h: float = 2.0, c: complex = 0.4 + 0.3j) -> FractalSpec:
    """Hata's tree-like set with harmonic structure parameter h > 1.

    Boundary order is (c, 0, 1); psi_1(z) = c * conj(z), psi_2(z) = (1-|c|^2) conj(z) + |c|^2.
    """
    if not h > 1:
        raise ValueError("Hata harmonic structures need h > 1")
    base = json.loads(resources.files("fractalwave.presets").joinpath("hata.json").read_text())
    base["harmonic"] = {
        "A0": [[-h, h, 0.0], [h, -(h + 1.0), 1.0], [0.0, 1.0, -1.0]],
        "r": [1.0 / h, 1.0 - h**-2],
        "h": h,
    }
    a, b = c.real, c.imag
    s = 1.0 - abs(c) ** 2
    base["embedding"] = {
        "boundary": {"c": [a, b], "0": [0.0, 0.0], "1": [1.0, 0.0]},
        "maps": [
            {"A": [[a, b], [b, -a]], "b": [0.0, 0.0]},
            {"A": [[s, 0.0], [0.0, -s]], "b": [abs(c) ** 2, 0.0]},
        ],
    }
    return FractalSpec.from_dict(base, name="hata")

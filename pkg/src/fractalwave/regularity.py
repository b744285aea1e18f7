"""Second-moment variograms in space and time, and log-log exponent fits.

The field is centred Gaussian with independent modes, so the exact tables
below are mode sums of per-mode second moments.  Temporal tables accept any
:class:`SpectralMeasure`: exact eigenpairs for small levels, or a Lanczos
Gauss rule when the lags of interest sit below the resolution of a dense
solve (lags much shorter than 1/sqrt(lambda_max) only see the t**2 regime).

Known results bound these moments from above only; a fitted slope checks a
two-sided power law numerically and is not a proved lower bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .energy import EnergySystem, resistance_table
from .kernel import increment_var, int_V2
from .simulate import FieldSample
from .spectrum import SpectralMeasure, Spectrum, local_spectral_measure, trace_spectral_measure


@dataclass(frozen=True)
class VariogramTable:
    """Rows (separation, value[, stderr]); ``kind`` is spatial, temporal or l2."""

    kind: str
    separation: np.ndarray
    value: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.separation) != len(self.value):
            raise ValueError("separation and value lengths differ")
        if np.any(self.value < 0):
            raise ValueError("variogram values must be non-negative")

    def __len__(self) -> int:
        return len(self.value)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    half_width: float
    window: tuple[float, float]
    n_points: int

    @property
    def interval(self) -> tuple[float, float]:
        return self.slope - self.half_width, self.slope + self.half_width

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "ci95": list(self.interval),
            "half_width": self.half_width,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def _lags(lags) -> np.ndarray:
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    if lags.size == 0:
        raise ValueError("no lags given")
    if np.any(lags <= 0):
        raise ValueError("lags must be positive")
    return lags


def _check_K(spectrum: Spectrum, K):
    K = spectrum.K if K is None else int(K)
    if not 1 <= K <= spectrum.K:
        raise ValueError(f"K = {K} outside [1, {spectrum.K}]")
    return K


def cell_edge_pairs(complex_, word, levels) -> list[tuple]:
    """Corner pairs (psi_w(p), psi_w(q)) of the cells w = word[:m] for m in ``levels``.

    On the interval with word (2, 1, 1, ...) these are the dyadic pairs
    (1/2, 1/2 + 2**-m).
    """
    labels = complex_.boundary
    out = []
    for m in levels:
        if not 0 <= m <= min(len(word), complex_.level):
            raise ValueError(f"level {m} outside the word or the complex")
        w = tuple(word[:m])
        for a in range(len(labels)):
            for b in range(a + 1, len(labels)):
                out.append(((w, labels[a]), (w, labels[b])))
    return out


def spatial_variogram_exact(spectrum: Spectrum, beta: float, t: float, pairs, K: int | None = None) -> VariogramTable:
    """E[(u(t,x) - u(t,y))**2] for the K-mode field, against R(x, y)."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty pair list")
    if t < 0:
        raise ValueError("t must be >= 0")
    K = _check_K(spectrum, K)
    cx = spectrum.system.complex
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    I = int_V2(spectrum.lam[:K], t, beta)
    D = spectrum.values_at(xs)[:, :K] - spectrum.values_at(ys)[:, :K]
    value = (D * D) @ I
    sep = resistance_table(spectrum.system, pairs)
    labels = tuple(f"{cx.name(cx.lookup(a))}|{cx.name(cx.lookup(b))}" for a, b in pairs)
    meta = {"t": float(t), "K": K, "level": spectrum.level, "b": spectrum.b, "beta": float(beta)}
    return VariogramTable("spatial", sep, np.maximum(value, 0.0), None, meta, labels)


def measure_increment_table(
    measure: SpectralMeasure, beta: float, s: float, lags, kind: str, meta: dict
) -> VariogramTable:
    """Integrate the per-mode increment variance against a spectral measure."""
    if s < 0:
        raise ValueError("s must be >= 0")
    lags = _lags(lags)
    G = increment_var(measure.nodes[:, None], s, lags[None, :], beta)
    value, err = measure.integrate(G)
    stderr = err if measure.probe is not None else None
    return VariogramTable(kind, lags, np.maximum(value, 0.0), stderr, dict(meta, s=float(s), beta=float(beta)))


def temporal_variogram_exact(spectrum: Spectrum, beta: float, x, s: float, lags, K: int | None = None) -> VariogramTable:
    """E[(u(s+t,x) - u(s,x))**2] = sum_k increment_var(lambda_k; s, t) phi_k(x)**2."""
    K = _check_K(spectrum, K)
    cx = spectrum.system.complex
    meta = {"x": cx.name(cx.lookup(x)), "K": K, "level": spectrum.level, "b": spectrum.b}
    return measure_increment_table(spectrum.local_measure(x, K), beta, s, lags, "temporal", meta)


def temporal_variogram_lanczos(system: EnergySystem, beta: float, x, s: float, lags, steps: int = 1000) -> VariogramTable:
    """Temporal variogram over all modes of ``system`` via a Lanczos Gauss rule."""
    cx = system.complex
    v = cx.lookup(x)
    meta = {
        "x": cx.name(v),
        "K": system.dim,
        "level": system.level,
        "b": system.b_label,
        "method": f"lanczos({steps})",
    }
    return measure_increment_table(local_spectral_measure(system, v, steps), beta, s, lags, "temporal", meta)


def l2_modulus_exact(spectrum: Spectrum, beta: float, s: float, lags, K: int | None = None) -> VariogramTable:
    """E||u(s+t) - u(s)||_mu**2 = sum_k increment_var(lambda_k; s, t)."""
    K = _check_K(spectrum, K)
    meta = {"K": K, "level": spectrum.level, "b": spectrum.b}
    return measure_increment_table(spectrum.trace_measure(K), beta, s, lags, "l2", meta)


def l2_modulus_slq(
    system: EnergySystem, beta: float, s: float, lags, steps: int = 1000, probes: int = 4, seed: int = 0
) -> VariogramTable:
    """L2 modulus over all modes via stochastic Lanczos quadrature; stderr across probes."""
    meta = {
        "K": system.dim,
        "level": system.level,
        "b": system.b_label,
        "method": f"slq({steps}x{probes})",
        "seed": seed,
    }
    measure = trace_spectral_measure(system, steps, probes, seed)
    return measure_increment_table(measure, beta, s, lags, "l2", meta)


def empirical_variogram(samples, pairs=None, separations=None, vertex=None) -> VariogramTable:
    """Monte Carlo variogram with standard errors.

    Spatial: one FieldSample, ``pairs`` of vertex names present in it and their
    ``separations``.  Temporal: ``samples[0]`` at time s and the rest at later
    times, all with the same replicas; ``vertex`` picks the column.
    """
    if isinstance(samples, FieldSample):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    R = samples[0].values.shape[0]
    if any(smp.values.shape[0] != R for smp in samples):
        raise ValueError("samples have different replica counts")
    if R < 2:
        raise ValueError("need at least 2 replicas for standard errors")

    if pairs is not None:
        smp = samples[0]
        col = {v: i for i, v in enumerate(smp.vertices)}
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty pair list")
        sep = np.asarray(separations, dtype=float) if separations is not None else np.arange(len(pairs), dtype=float)
        if len(sep) != len(pairs):
            raise ValueError("need one separation per pair")
        try:
            d = np.stack([smp.values[:, col[a]] - smp.values[:, col[b]] for a, b in pairs], axis=1)
        except KeyError as exc:
            raise ValueError(f"vertex {exc.args[0]!r} not in the sample") from None
        meta = {"t": smp.t, "replicas": R}
        kind = "spatial"
    else:
        if len(samples) < 2 or vertex is None:
            raise ValueError("temporal variogram needs a base sample, later samples and a vertex")
        base = samples[0]
        if any(smp.vertices != base.vertices for smp in samples):
            raise ValueError("samples cover different vertices")
        if vertex not in base.vertices:
            raise ValueError(f"vertex {vertex!r} not in the samples")
        j = base.vertices.index(vertex)
        sep = np.array([smp.t - base.t for smp in samples[1:]])
        d = np.stack([smp.values[:, j] - base.values[:, j] for smp in samples[1:]], axis=1)
        meta = {"s": base.t, "x": vertex, "replicas": R}
        kind = "temporal"
    sq = d * d
    return VariogramTable(kind, sep, sq.mean(axis=0), sq.std(axis=0, ddof=1) / np.sqrt(R), meta)


def fit_exponent(table: VariogramTable, window=None) -> ExponentFit:
    """OLS of log value on log separation over ``window`` (inclusive), with a 95% t half-width."""
    sep, val = table.separation, table.value
    lo, hi = (-np.inf, np.inf) if window is None else (float(window[0]), float(window[1]))
    mask = (sep >= lo * (1 - 1e-12)) & (sep <= hi * (1 + 1e-12)) & (sep > 0) & (val > 0)
    n = int(mask.sum())
    if n < 3:
        raise ValueError(f"fit window {window} holds {n} usable rows; need >= 3")
    X, Y = np.log(sep[mask]), np.log(val[mask])
    if np.ptp(X) == 0:
        raise ValueError("degenerate fit window: all separations equal")
    if np.ptp(Y) <= 1e-12 * max(1.0, np.max(np.abs(Y))):
        raise ValueError("degenerate fit: log-values have zero variance")
    res = stats.linregress(X, Y)
    half = float(stats.t.ppf(0.975, n - 2) * res.stderr) if n > 2 else float("nan")
    return ExponentFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        half_width=half,
        window=(float(sep[mask].min()), float(sep[mask].max())),
        n_points=n,
    )


def truncation_resolution(spectrum: Spectrum, beta: float, s: float, lags, K: int, x=None, tol: float = 0.01) -> float:
    """Largest lag whose value moves by more than ``tol`` (relative) when K doubles.

    Uses the local measure at x, or the L2 modulus when x is None.  Returns 0
    when no lag moves.
    """
    if 2 * K > spectrum.K:
        raise ValueError(f"doubling K = {K} needs {2 * K} computed modes, have {spectrum.K}")
    lags = _lags(lags)
    if x is None:
        a = l2_modulus_exact(spectrum, beta, s, lags, K).value
        b = l2_modulus_exact(spectrum, beta, s, lags, 2 * K).value
    else:
        a = temporal_variogram_exact(spectrum, beta, x, s, lags, K).value
        b = temporal_variogram_exact(spectrum, beta, x, s, lags, 2 * K).value
    moved = np.abs(b - a) > tol * np.abs(b)
    return float(lags[moved].max()) if moved.any() else 0.0


def write_variogram_csv(path, table: VariogramTable) -> None:
    with open(path, "w") as fh:
        has_err = table.stderr is not None
        fh.write("separation,value" + (",stderr" if has_err else "") + "\n")
        for i in range(len(table)):
            row = f"{float(table.separation[i])!r},{float(table.value[i])!r}"
            if has_err:
                row += f",{float(table.stderr[i])!r}"
            fh.write(row + "\n")


def write_fit_json(path, fit: ExponentFit, extra: dict | None = None) -> None:
    data = fit.to_dict()
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")

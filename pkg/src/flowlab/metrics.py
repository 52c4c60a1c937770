"""Distances between sets on the torus and exponential-decay fitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FitDomainError, NotAGraph
from .geometry import BoundarySet, normal_graph, wrap
from .grid import DEFAULT_M, cell_fractions

CSV_COLUMNS = (
    "t",
    "volume",
    "area",
    "nonlocal",
    "J",
    "dissipation",
    "alpha_to_reference",
    "D_to_reference",
    "min_ds",
    "dt",
)


def grid_tolerance(b: BoundarySet, m: int = DEFAULT_M) -> float:
    """Resolution floor 2 |dE| / M of the rasterised set distances."""
    return 2.0 * b.length / m


def _peak_offset(lo: float, mid: float, hi: float) -> float:
    den = lo - 2.0 * mid + hi
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (lo - hi) / den, -0.5, 0.5))


def _symmetric_difference(fe: np.ndarray, b: BoundarySet, m: int) -> float:
    return float(np.abs(fe - cell_fractions(b, m)).sum()) / m**2


def alpha_distance(E: BoundarySet, F: BoundarySet, m: int = DEFAULT_M) -> tuple[float, np.ndarray]:
    """min over eta of Vol(E sym-diff (F + eta)) and the minimising eta.

    The overlap |E n (F + eta)| is the cross-correlation of the two indicators;
    its maximum over grid shifts is located by FFT and refined by a parabola
    through the neighbouring shifts.
    """
    fe = cell_fractions(E, m)
    ff = cell_fractions(F, m)
    corr = np.fft.ifft2(np.fft.fft2(fe) * np.conj(np.fft.fft2(ff))).real
    i, j = np.unravel_index(int(np.argmax(corr)), corr.shape)
    di = _peak_offset(corr[(i - 1) % m, j], corr[i, j], corr[(i + 1) % m, j])
    dj = _peak_offset(corr[i, (j - 1) % m], corr[i, j], corr[i, (j + 1) % m])
    coarse = wrap(np.array([i, j], dtype=float) / m)
    refined = wrap(np.array([i + di, j + dj]) / m)
    best = None
    for eta in (refined, coarse):
        val = _symmetric_difference(fe, F.translated(eta), m)
        if best is None or val < best[0] - 1e-15:
            best = (val, eta)
    return best


def best_translation(reference: BoundarySet, F: BoundarySet, eta0=(0.0, 0.0), iterations: int = 3) -> np.ndarray:
    """Gauss-Newton on eta for min int psi^2, psi the normal graph of F + eta over the reference."""
    eta = np.asarray(eta0, dtype=float).copy()
    nu = reference.stack("normal")
    ds = reference.stack("ds")
    a = (nu * ds[:, None]).T @ nu
    for _ in range(iterations):
        psi = normal_graph(reference, F.translated(eta))
        rhs = (nu * (psi * ds)[:, None]).sum(axis=0)
        step = np.linalg.lstsq(a, -rhs, rcond=1e-10)[0]
        eta += step
        if np.abs(step).max() < 1e-14:
            break
    return wrap(eta)


def _graph_distance(E: BoundarySet, psi: np.ndarray) -> float:
    # int_{F sym-diff E} d(x, dE) dx in normal coordinates, area element (1 + t kappa) dt ds
    kappa = E.stack("kappa")
    return float(np.sum((0.5 * psi**2 + kappa * psi**3 / 3.0) * E.stack("ds")))


def _grid_distance(E: BoundarySet, F: BoundarySet, m: int) -> float:
    diff = np.abs(cell_fractions(E, m) - cell_fractions(F, m))
    ix, iy = np.nonzero(diff > 0)
    if ix.size == 0:
        return 0.0
    centres = (np.column_stack([ix, iy]) + 0.5) / m
    d = E.projector.distance(centres)
    return float(np.sum(diff[ix, iy] * d)) / m**2


def d_distance(E: BoundarySet, F: BoundarySet, m: int = DEFAULT_M, method: str = "auto") -> float:
    """D(F) = int over F sym-diff E of the distance to dE.

    ``graph`` integrates the normal graph of dF over dE exactly in normal
    coordinates; ``grid`` sums |signed distance| over the rasterised symmetric
    difference.  ``auto`` uses the graph when dF lies in the tube around dE.
    """
    if method not in ("auto", "graph", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if method != "grid":
        try:
            psi = normal_graph(E, F)
        except NotAGraph:
            if method == "graph":
                raise
        else:
            return _graph_distance(E, psi)
    return _grid_distance(E, F, m)


# ---------------------------------------------------------------------------
# normal-graph diagnostics


def graph_norms(reference: BoundarySet, psi: np.ndarray) -> dict:
    """L2, sup and discrete H1 norms of heights psi over the reference nodes."""
    ds = reference.stack("ds")
    l2 = float(np.sqrt(np.sum(psi**2 * ds)))
    h1 = 0.0
    for part, f in zip(reference.split(psi), reference.frames):
        h1 += float(np.sum((np.roll(part, -1) - part) ** 2 / f.chord))
    return {"L2": l2, "C0": float(np.abs(psi).max()), "H1": float(np.sqrt(l2**2 + h1))}


def mode_amplitudes(psi: np.ndarray, modes=(1, 2, 3)) -> dict:
    """|c_k| of psi = sum_k c_k e^{ik theta} + c.c. on equispaced nodes (amplitude of a cos(k theta))."""
    c = np.fft.rfft(psi) / len(psi)
    return {k: float(2.0 * np.abs(c[k])) for k in modes}


def mode_amplitude(reference: BoundarySet, F: BoundarySet, k: int, eta=None) -> float:
    """Amplitude of mode k of the normal graph of the best translate of F over a one-component reference."""
    if eta is None:
        eta = best_translation(reference, F)
    psi = normal_graph(reference, F.translated(eta))
    return mode_amplitudes(psi, (k,))[k]


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    field: str
    beta: float
    C: float
    r2: float
    window: tuple

    def as_dict(self) -> dict:
        return {"field": self.field, "beta": self.beta, "C": self.C, "r2": self.r2, "window": list(self.window)}


def fit_decay(t, values, burn_in: float = 0.2, min_samples: int = 20, field: str = "value") -> DecayFit:
    """Least-squares line log y = log C - beta t over samples after the burn-in fraction."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape:
        raise ValueError("times and values differ in length")
    start = int(np.floor(burn_in * len(t)))
    tw, yw = t[start:], y[start:]
    if len(tw) < min_samples:
        raise FitDomainError(f"{len(tw)} samples in the fit window, need {min_samples}")
    if np.any(~np.isfinite(yw)) or np.any(yw <= 0):
        raise FitDomainError("non-positive samples in the fit window")
    ly = np.log(yw)
    slope, intercept = np.polyfit(tw, ly, 1)
    resid = ly - (slope * tw + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-24 * len(ly):
        # a flat series is fitted exactly by the flat line
        r2 = 1.0
    else:
        r2 = float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    return DecayFit(field=field, beta=float(-slope), C=float(np.exp(intercept)), r2=r2, window=(float(tw[0]), float(tw[-1])))


@dataclass
class RunRecord:
    """Per-sample diagnostics of a run plus the final decay fit."""

    columns: dict = field(default_factory=lambda: {c: [] for c in CSV_COLUMNS})
    eta: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)  # named series such as mode amplitudes
    decay: DecayFit | None = None

    def append(self, row: dict, eta=None, **extra) -> None:
        if self.columns["t"] and row["t"] <= self.columns["t"][-1]:
            raise ValueError("sample times must increase")
        for c in CSV_COLUMNS:
            self.columns[c].append(float(row[c]))
        self.eta.append(None if eta is None else [float(e) for e in eta])
        for k, v in extra.items():
            self.extra.setdefault(k, []).append(float(v))

    def __len__(self) -> int:
        return len(self.columns["t"])

    def series(self, name: str) -> np.ndarray:
        if name in self.columns:
            return np.asarray(self.columns[name])
        return np.asarray(self.extra[name])

    def fit_field(self, name: str, burn_in: float = 0.2, min_samples: int = 20) -> DecayFit:
        fit = fit_decay(self.series("t"), self.series(name), burn_in, min_samples, field=name)
        self.decay = fit
        return fit

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for i in range(len(self)):
                w.writerow([repr(self.columns[c][i]) for c in CSV_COLUMNS])

    @classmethod
    def read_csv(cls, path) -> "RunRecord":
        rec = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                for c in CSV_COLUMNS:
                    rec.columns[c].append(float(row[c]))
                rec.eta.append(None)
        return rec


__all__ = [
    "CSV_COLUMNS",
    "DecayFit",
    "RunRecord",
    "alpha_distance",
    "best_translation",
    "d_distance",
    "fit_decay",
    "graph_norms",
    "grid_tolerance",
    "mode_amplitude",
    "mode_amplitudes",
]

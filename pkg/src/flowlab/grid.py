"""Uniform periodic grids: cut-cell rasterisation and spectral Poisson solves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .errors import InvalidRegion
from .geometry import BoundarySet, TWO_PI

DEFAULT_M = 512
RASTER_UPSAMPLE = 4


@dataclass(frozen=True, eq=False)
class GridField:
    """M x M samples at cell centres ((i + 1/2)/M, (j + 1/2)/M), index [i, j] ~ (x1, x2)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = v.shape[0]
        if v.ndim != 2 or v.shape[1] != m or m & (m - 1):
            raise ValueError("grid fields are square with a power-of-two side")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @classmethod
    def from_function(cls, f, m: int) -> "GridField":
        x = (np.arange(m) + 0.5) / m
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return cls(f(X1, X2))

    def sample(self, points: np.ndarray, order: int = 3) -> np.ndarray:
        """Periodic spline interpolation at arbitrary points."""
        pts = np.atleast_2d(points)
        coords = (pts * self.m - 0.5).T
        return ndimage.map_coordinates(self.values, coords, order=order, mode="grid-wrap")

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"torus-field v1 M={self.m}\n")
            np.savetxt(fh, self.values.reshape(-1), fmt="%.17g")

    @classmethod
    def load(cls, path) -> "GridField":
        with open(path) as fh:
            head = fh.readline().split()
            if head[:2] != ["torus-field", "v1"]:
                raise ValueError(f"{path}: not a torus-field v1 file")
            m = int(head[2].split("=")[1])
            vals = np.loadtxt(fh)
        return cls(vals.reshape(m, m))


def _wavevectors(m: int):
    k = np.fft.fftfreq(m, 1.0 / m)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    return k1, k2


def _inverse_laplacian_symbol(m: int) -> np.ndarray:
    k1, k2 = _wavevectors(m)
    k2sum = 4 * math.pi**2 * (k1**2 + k2**2)
    k2sum[0, 0] = np.inf
    return 1.0 / k2sum


def poisson_solve(rhs: GridField) -> GridField:
    """Zero-mean v with -Lap v = rhs - mean(rhs), spectrally."""
    f = np.fft.fft2(rhs.values)
    f *= _inverse_laplacian_symbol(rhs.m)
    return GridField(np.fft.ifft2(f).real)


def spectral_laplacian(v: GridField) -> GridField:
    k1, k2 = _wavevectors(v.m)
    f = np.fft.fft2(v.values) * (-4 * math.pi**2 * (k1**2 + k2**2))
    return GridField(np.fft.ifft2(f).real)


# ---------------------------------------------------------------------------
# cut-cell rasterisation


@numba.njit(cache=True)
def _clamp_primitive(y, yj, h):
    t = y - yj
    if t <= 0.0:
        return 0.0
    if t <= h:
        return 0.5 * t * t
    return 0.5 * h * h + h * (t - h)


@numba.njit(cache=True)
def _accumulate(px, py, m, row0, nrows, acc, diff):
    """Add -int clamp(y(x) - y_j, 0, h) dx for every polygon edge (closed by the caller)."""
    h = 1.0 / m
    n = px.shape[0] - 1
    for e in range(n):
        xa, ya, xb, yb = px[e], py[e], px[e + 1], py[e + 1]
        if xa == xb:
            continue
        sgn = 1.0
        if xb < xa:
            xa, xb, ya, yb = xb, xa, yb, ya
            sgn = -1.0
        slope = (yb - ya) / (xb - xa)
        ca = int(math.floor(xa / h))
        cb = int(math.floor(xb / h))
        for col in range(ca, cb + 1):
            x0 = max(xa, col * h)
            x1 = min(xb, (col + 1) * h)
            if x1 <= x0:
                continue
            y0 = ya + slope * (x0 - xa)
            y1 = ya + slope * (x1 - xa)
            dx = x1 - x0
            lo = min(y0, y1)
            hi = max(y0, y1)
            jlo = int(math.floor(lo / h))
            jhi = int(math.floor(hi / h))
            cm = col % m
            # rows entirely below the segment
            diff[cm, 0] += -sgn * h * dx
            diff[cm, jlo - row0] -= -sgn * h * dx
            for j in range(jlo, jhi + 1):
                yj = j * h
                if hi - lo > 1e-14:
                    avg = (_clamp_primitive(hi, yj, h) - _clamp_primitive(lo, yj, h)) / (hi - lo)
                else:
                    t = 0.5 * (lo + hi) - yj
                    avg = min(max(t, 0.0), h)
                acc[cm, j - row0] += -sgn * avg * dx


def cell_fractions(b: BoundarySet, m: int = DEFAULT_M, upsample: int = RASTER_UPSAMPLE) -> np.ndarray:
    """Exact area fraction of each cell covered by E, for the upsampled polygon of dE."""
    polys = []
    for c in b.components:
        k = c.n * upsample
        u = TWO_PI * np.arange(k + 1) / k
        p = c.trig(u)
        w = np.asarray(c.winding, dtype=float)
        if w.any():
            # Close the lift through the origin: P + W -> W -> 0 -> P.  Disjoint
            # essential curves are parallel with windings cancelling in pairs,
            # so these closing loops cancel on the torus.
            p = np.vstack([p, w, np.zeros(2), p[:1]])
        polys.append(p)
    ymin = min(p[:, 1].min() for p in polys)
    ymax = max(p[:, 1].max() for p in polys)
    h = 1.0 / m
    row0 = int(math.floor(ymin / h)) - 1
    nrows = int(math.floor(ymax / h)) - row0 + 2
    acc = np.zeros((m, nrows))
    diff = np.zeros((m, nrows + 1))
    for p in polys:
        _accumulate(np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]), m, row0, nrows, acc, diff)
    acc += np.cumsum(diff[:, :-1], axis=1)
    folded = np.zeros((m, m))
    rows = (np.arange(nrows) + row0) % m
    np.add.at(folded.T, rows, acc.T)
    folded /= h * h
    # parity: the raw sum is the true volume up to an integer
    shift = round(b.volume - folded.sum() * h * h)
    folded += shift
    if folded.min() < -1e-8 or folded.max() > 1 + 1e-8:
        raise InvalidRegion("inconsistent region parity while rasterising")
    return np.clip(folded, 0.0, 1.0)


def _box_symbol(m: int) -> np.ndarray:
    k1, k2 = _wavevectors(m)
    return np.sinc(k1 / m) * np.sinc(k2 / m)


@dataclass(frozen=True, eq=False)
class Potential:
    """Grid solve of -Lap v = u_E - m for u_E = 2 chi_E - 1."""

    u_hat: np.ndarray  # Fourier coefficients of u_E (normalised, box-deconvolved)
    v: GridField
    energy: float
    energy_pairing: float
    fractions: np.ndarray

    def trace(self, points) -> np.ndarray:
        return self.v.sample(points)


def indicator_potential(b: BoundarySet, m: int = DEFAULT_M) -> Potential:
    frac = cell_fractions(b, m)
    u = 2.0 * frac - 1.0
    u_hat = np.fft.fft2(u) / (m * m)
    u_hat /= _box_symbol(m)
    inv = _inverse_laplacian_symbol(m)
    v_hat = u_hat * inv
    energy = float(np.sum(np.abs(u_hat) ** 2 * inv))
    v = np.fft.ifft2(v_hat).real * (m * m)
    # int v (u - m) on the same grid, as a second route to the same number
    pairing = float(np.sum(np.conj(v_hat) * u_hat).real)
    return Potential(u_hat=u_hat, v=GridField(v), energy=energy, energy_pairing=pairing, fractions=frac)

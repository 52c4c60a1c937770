"""Points, marker curves and boundaries on the unit flat torus.

Curves are stored as *lifts*: an ``(N, 2)`` array of real coordinates in which
consecutive nodes differ by their short (wrap-aware) displacement, together
with an integer winding vector ``w`` such that the node after the last one is
``nodes[0] + w``.  All differential quantities come from the trigonometric
interpolant of the periodic part ``nodes[j] - w * j / N`` in the node
parameter ``u = 2*pi*j/N``.

Orientation convention: the enclosed region lies to the left of the direction
of traversal, so the outward normal is the tangent rotated 90 degrees
clockwise and a counter-clockwise circle has curvature ``+1/r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCurve, InvalidRegion, NotAGraph, TooFewNodes

TWO_PI = 2.0 * math.pi
MIN_NODES = 8
MIN_SEGMENT = 1e-10


def canon(x):
    """Canonical representative in [0, 1) of a coordinate or coordinate array."""
    y = np.asarray(x, dtype=float) % 1.0
    # float modulo can round tiny negatives up to exactly 1.0
    return np.where(y >= 1.0, 0.0, y)


def wrap(d):
    """Reduce a displacement to its representative with components in [-1/2, 1/2)."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


@dataclass(frozen=True)
class TorusPoint:
    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(canon(self.x1)))
        object.__setattr__(self, "x2", float(canon(self.x2)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


def _xy(p) -> np.ndarray:
    if isinstance(p, TorusPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def wrap_diff(p, q) -> np.ndarray:
    """Displacement p - q on the torus, components in [-1/2, 1/2)."""
    return wrap(_xy(p) - _xy(q))


# ---------------------------------------------------------------------------
# spectral helpers


def _wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n)


def spectral_derivatives(values: np.ndarray, orders=(1, 2)) -> list[np.ndarray]:
    """Derivatives in u = 2*pi*j/N of periodic samples along axis 0.

    The Nyquist coefficient is dropped for odd orders and kept for even ones,
    which is the convention that keeps the cosine interpolant real.
    """
    n = values.shape[0]
    k = _wavenumbers(n)
    # the mean carries no derivative information but feeds rounding into every mode
    c = np.fft.fft(values - values.mean(axis=0), axis=0)
    out = []
    shape = (n,) + (1,) * (values.ndim - 1)
    for order in orders:
        mult = (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            mult[n // 2] = 0.0
        out.append(np.fft.ifft(c * mult.reshape(shape), axis=0).real)
    return out


class TrigCurve:
    """Trigonometric interpolant of a lifted closed curve, evaluable at any u."""

    def __init__(self, lift: np.ndarray, winding: np.ndarray):
        self.n = lift.shape[0]
        self.winding = np.asarray(winding, dtype=float)
        j = np.arange(self.n)
        periodic = lift - np.outer(j / self.n, self.winding)
        self.coef = np.fft.fft(periodic, axis=0) / self.n
        self.k = _wavenumbers(self.n)
        self.nyquist = self.n % 2 == 0

    def __call__(self, u, order: int = 0) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        k = self.k
        coef = self.coef.copy()
        nyq = None
        if self.nyquist:
            nyq = coef[self.n // 2].real.copy()
            coef[self.n // 2] = 0.0
        phase = np.exp(1j * np.outer(u, k))
        vals = ((phase * (1j * k) ** order) @ coef).real
        if nyq is not None:
            m = self.n // 2
            trig = [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin][order % 4]
            vals += (m**order) * np.outer(trig(m * u), nyq)
        if order == 0:
            vals += np.outer(u / TWO_PI, self.winding)
        elif order == 1:
            vals += self.winding / TWO_PI
        return vals


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class CurveFrame:
    """Per-node geometry of a marker curve.

    ds are the trapezoid arclength weights, so ``ds.sum()`` is the length and
    ``(f * ds).sum()`` integrates a nodal function against arclength.
    """

    ds: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray
    speed: np.ndarray
    chord: np.ndarray  # distance from node i to node i+1

    @property
    def length(self) -> float:
        return float(self.ds.sum())


@dataclass(frozen=True, eq=False)
class MarkerCurve:
    nodes: np.ndarray
    winding: tuple = (0, 0)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N, 2)")
        if nodes.shape[0] < MIN_NODES:
            raise TooFewNodes(f"a marker curve needs at least {MIN_NODES} nodes, got {nodes.shape[0]}")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "winding", tuple(int(w) for w in self.winding))
        seg = np.linalg.norm(self.segments, axis=1)
        if seg.min() < MIN_SEGMENT:
            raise DegenerateCurve(f"segment of length {seg.min():.3e} at node {int(seg.argmin())}")

    @classmethod
    def from_points(cls, points, winding=None) -> "MarkerCurve":
        """Lift canonical (or arbitrary) points by accumulating short displacements."""
        pts = np.asarray([_xy(p) for p in points], dtype=float)
        steps = wrap(np.diff(pts, axis=0))
        lift = np.vstack([pts[:1], pts[0] + np.cumsum(steps, axis=0)])
        closing = lift[-1] + wrap(pts[0] - pts[-1])
        w = np.rint(closing - lift[0]).astype(int)
        if winding is not None and tuple(w) != tuple(int(v) for v in winding):
            raise InvalidRegion(f"declared winding {tuple(winding)} does not match nodes {tuple(w)}")
        return cls(lift, tuple(w))

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def segments(self) -> np.ndarray:
        nxt = np.vstack([self.nodes[1:], self.nodes[:1] + np.asarray(self.winding)])
        return nxt - self.nodes

    @cached_property
    def trig(self) -> TrigCurve:
        return TrigCurve(self.nodes, np.asarray(self.winding))

    @cached_property
    def frame(self) -> CurveFrame:
        return build_frame(self)

    def points(self) -> list[TorusPoint]:
        return [TorusPoint(*p) for p in self.nodes]

    def translated(self, eta) -> "MarkerCurve":
        return MarkerCurve(self.nodes + np.asarray(eta, dtype=float), self.winding)

    def reversed(self) -> "MarkerCurve":
        rev = self.nodes[::-1].copy()
        return MarkerCurve.from_points(rev)


def build_frame(c: MarkerCurve) -> CurveFrame:
    n = c.n
    j = np.arange(n)
    w = np.asarray(c.winding, dtype=float)
    periodic = c.nodes - np.outer(j / n, w)
    d1, d2 = spectral_derivatives(periodic, (1, 2))
    d1 = d1 + w / TWO_PI
    speed = np.hypot(d1[:, 0], d1[:, 1])
    if speed.min() * TWO_PI / n < MIN_SEGMENT:
        raise DegenerateCurve("vanishing parametric speed")
    tangent = d1 / speed[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    chord = np.linalg.norm(c.segments, axis=1)
    if chord.min() < MIN_SEGMENT:
        raise DegenerateCurve(f"segment of length {chord.min():.3e}")
    ds = speed * TWO_PI / n
    return CurveFrame(ds=ds, tangent=tangent, normal=normal, kappa=kappa, speed=speed, chord=chord)


def turning_number(c: MarkerCurve) -> float:
    """Total tangent rotation / 2pi, by summing the angles between consecutive chords."""
    seg = c.segments
    ang = np.arctan2(seg[:, 1], seg[:, 0])
    turn = wrap((np.roll(ang, -1) - ang) / TWO_PI)
    return float(turn.sum())


def _arclength_table(c: MarkerCurve, upsample: int = 4):
    """Fourier representation of the arclength function s(u) of the interpolant."""
    m = c.n * upsample
    u = TWO_PI * np.arange(m) / m
    speed = np.linalg.norm(c.trig(u, 1), axis=1)
    sc = np.fft.fft(speed) / m
    k = _wavenumbers(m)
    length = sc[0].real * TWO_PI
    return sc, k, length


def _eval_arclength(sc, k, u):
    u = np.atleast_1d(u)
    mean = sc[0].real
    kk = k.copy()
    kk[0] = 1.0
    integ = sc / (1j * kk)
    integ[0] = 0.0
    if len(k) % 2 == 0:
        integ[len(k) // 2] = 0.0
    ph = np.exp(1j * np.outer(u, k))
    s = mean * u + (ph @ integ).real - integ.sum().real
    sp = (ph @ np.where(np.arange(len(k)) == len(k) // 2, 0.0, sc)).real
    return s, sp


def resample_equal_arclength(c: MarkerCurve, n: int) -> MarkerCurve:
    """Redistribute nodes at equal arclength along the interpolant, keeping node 0 fixed."""
    if n < MIN_NODES:
        raise TooFewNodes(f"cannot resample to {n} < {MIN_NODES} nodes")
    sc, k, length = _arclength_table(c)
    target = length * np.arange(n) / n
    u = TWO_PI * np.arange(n) / n
    for _ in range(30):
        s, sp = _eval_arclength(sc, k, u)
        step = (s - target) / sp
        u = u - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return MarkerCurve(c.trig(u), c.winding)


# ---------------------------------------------------------------------------
# boundaries


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Boundary of a region E of the torus as a list of oriented components.

    ``inside`` records, per component, whether the stored node order has E on
    its left (1) or on its right (0).  Constructors normalise every component
    to the left-hand convention so ``inside`` is all ones after construction;
    the flags only matter when reading external snapshot files.
    """

    components: tuple
    inside: tuple = field(default=())

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidRegion("a boundary needs at least one component")
        flags = tuple(self.inside) if self.inside else (1,) * len(comps)
        if len(flags) != len(comps) or any(f not in (0, 1) for f in flags):
            raise InvalidRegion("inside flags must be 0/1, one per component")
        comps = tuple(c if f == 1 else c.reversed() for c, f in zip(comps, flags))
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "inside", (1,) * len(comps))
        total = np.sum([c.winding for c in comps], axis=0)
        if np.any(total != 0):
            raise InvalidRegion(f"component windings do not cancel: total {tuple(total)}")
        vol = self.volume
        if not (1e-12 < vol < 1 - 1e-12):
            raise InvalidRegion(f"enclosed volume {vol!r} outside (0, 1)")

    @property
    def n_nodes(self) -> int:
        return sum(c.n for c in self.components)

    @cached_property
    def frames(self) -> list[CurveFrame]:
        return [c.frame for c in self.components]

    @cached_property
    def volume(self) -> float:
        return enclosed_volume(self)

    @property
    def length(self) -> float:
        return float(sum(f.length for f in self.frames))

    # stacked per-node views over all components
    @cached_property
    def nodes(self) -> np.ndarray:
        return np.vstack([c.nodes for c in self.components])

    def stack(self, attr: str) -> np.ndarray:
        return np.concatenate([getattr(f, attr) for f in self.frames])

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.cumsum([0] + [c.n for c in self.components])

    def split(self, values) -> list[np.ndarray]:
        values = np.asarray(values)
        return [values[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def with_nodes(self, nodes: np.ndarray) -> "BoundarySet":
        """Same topology, new lifted node positions (stacked)."""
        comps = [MarkerCurve(part, c.winding) for part, c in zip(self.split(nodes), self.components)]
        return BoundarySet(tuple(comps))

    def translated(self, eta) -> "BoundarySet":
        return BoundarySet(tuple(c.translated(eta) for c in self.components))

    def resampled(self, n: int | Sequence[int] | None = None) -> "BoundarySet":
        if n is None:
            ns = [c.n for c in self.components]
        elif np.isscalar(n):
            ns = [int(n)] * len(self.components)
        else:
            ns = list(n)
        return BoundarySet(tuple(resample_equal_arclength(c, m) for c, m in zip(self.components, ns)))

    def offset(self, psi) -> "BoundarySet":
        """Boundary {y + psi(y) nu(y)} for nodal heights psi."""
        psi = np.asarray(psi, dtype=float)
        return self.with_nodes(self.nodes + psi[:, None] * self.stack("normal"))

    @cached_property
    def projector(self) -> "ClosestPoint":
        return ClosestPoint(self)

    @cached_property
    def tube_width(self) -> float:
        return tube_width(self)


def _component_volume_term(c: MarkerCurve) -> float:
    n = c.n
    j = np.arange(n)
    w = np.asarray(c.winding, dtype=float)
    p = c.nodes - np.outer(j / n, w)
    (dp,) = spectral_derivatives(p, (1,))
    du = TWO_PI / n
    term = np.sum(p[:, 0] * dp[:, 1]) * du
    term += w[1] / TWO_PI * np.sum(p[:, 0]) * du
    term -= w[0] / TWO_PI * np.sum(p[:, 1]) * du
    term += 0.5 * w[0] * w[1]
    return float(term)


def enclosed_volume(b: BoundarySet) -> float:
    """Area of E: sum over components of a lift-independent Green's formula, mod 1.

    For a lift ``z`` with winding ``w`` the quantity ``int x dy - w1 * y(start)``
    does not depend on where the lift starts, and changes by an integer when a
    component is shifted by a lattice vector, so the sum is the area mod 1.
    """
    total = sum(_component_volume_term(c) for c in b.components)
    return float(total % 1.0)


def area(b: BoundarySet) -> float:
    """Total boundary length A(dE)."""
    return b.length


def check_simple(b: BoundarySet) -> bool:
    """True when no two non-adjacent chords intersect (on the torus). O(N^2)."""
    starts = b.nodes
    segs = np.vstack([c.segments for c in b.components])
    comp = np.concatenate([np.full(c.n, i) for i, c in enumerate(b.components)])
    idx = np.concatenate([np.arange(c.n) for c in b.components])
    sizes = np.concatenate([np.full(c.n, c.n) for c in b.components])
    a0 = starts[:, None, :]
    shift = wrap(starts[None, :, :] - a0) + a0 - starts[None, :, :]
    b0 = starts[None, :, :] + shift
    d1 = segs[:, None, :]
    d2 = np.broadcast_to(segs[None, :, :], b0.shape)
    r = b0 - a0
    den = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / den
        s = (r[..., 0] * d1[..., 1] - r[..., 1] * d1[..., 0]) / den
    hit = (np.abs(den) > 0) & (t >= 0) & (t < 1) & (s >= 0) & (s < 1)
    same = comp[:, None] == comp[None, :]
    gap = np.abs(idx[:, None] - idx[None, :])
    adjacent = same & ((gap <= 1) | (gap == sizes[:, None] - 1))
    hit &= ~adjacent
    return not bool(hit.any())


def tube_width(b: BoundarySet) -> float:
    """Half-width of a tubular neighbourhood where the closest point is unique.

    0.4 times the smaller of the curvature reach 1/max|kappa| and half the
    minimum separation between boundary points that are far apart along the
    curve (different components, periodic images, or opposite sides).
    """
    kap = np.abs(b.stack("kappa")).max()
    reach = min(1.0, 1.0 / kap) if kap > 0 else 1.0
    pts = b.nodes
    d = np.linalg.norm(wrap(pts[:, None, :] - pts[None, :, :]), axis=2)
    comp = np.concatenate([np.full(c.n, i) for i, c in enumerate(b.components)])
    arc = []
    for c, f in zip(b.components, b.frames):
        s = np.concatenate([[0.0], np.cumsum(f.ds)[:-1]])
        sep = np.abs(s[:, None] - s[None, :])
        arc.append(np.minimum(sep, f.length - sep))
    big = np.full(d.shape, np.inf)
    for i, (lo, hi) in enumerate(zip(b.offsets[:-1], b.offsets[1:])):
        big[lo:hi, lo:hi] = arc[i]
    far = (comp[:, None] != comp[None, :]) | (big >= math.pi * reach)
    sep = d[far].min() if far.any() else 1.0
    return 0.4 * min(reach, 0.5 * sep)


# ---------------------------------------------------------------------------
# closest point machinery


class ClosestPoint:
    """Nearest-point queries onto the interpolated boundary (kd-tree + Newton)."""

    def __init__(self, b: BoundarySet, upsample: int = 8):
        self.b = b
        samples, owner, params, nxt, prv = [], [], [], [], []
        start = 0
        for i, c in enumerate(b.components):
            m = c.n * upsample
            u = TWO_PI * np.arange(m) / m
            samples.append(c.trig(u))
            owner.append(np.full(m, i))
            params.append(u)
            j = np.arange(m)
            nxt.append(start + (j + 1) % m)
            prv.append(start + (j - 1) % m)
            start += m
        self.samples = np.vstack(samples)
        self.owner = np.concatenate(owner)
        self.params = np.concatenate(params)
        self._next = np.concatenate(nxt)
        self._prev = np.concatenate(prv)
        self.tree = cKDTree(canon(self.samples), boxsize=1.0)

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance to the fine polyline through the samples (no Newton polish)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self.tree.query(canon(pts))
        a = self.samples[idx]
        rel = wrap(pts - a)
        best = np.linalg.norm(rel, axis=1)
        for other in (self._next[idx], self._prev[idx]):
            seg = wrap(self.samples[other] - a)
            t = np.clip(np.einsum("ij,ij->i", rel, seg) / np.einsum("ij,ij->i", seg, seg), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(rel - t[:, None] * seg, axis=1))
        return best

    def project(self, points: np.ndarray, iterations: int = 12):
        """Return (signed distance, foot (lifted near point), outward normal at foot, component, u)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self.tree.query(canon(pts))
        comp = self.owner[idx]
        u = self.params[idx].copy()
        foot = np.empty_like(pts)
        normal = np.empty_like(pts)
        for i, c in enumerate(self.b.components):
            sel = np.nonzero(comp == i)[0]
            if sel.size == 0:
                continue
            uu = u[sel]
            anchor = c.trig(uu)
            target = anchor + wrap(pts[sel] - anchor)
            for _ in range(iterations):
                z = c.trig(uu)
                z1 = c.trig(uu, 1)
                z2 = c.trig(uu, 2)
                r = z - target
                g = np.einsum("ij,ij->i", r, z1)
                gp = np.einsum("ij,ij->i", z1, z1) + np.einsum("ij,ij->i", r, z2)
                step = g / gp
                uu = uu - step
                if np.max(np.abs(step)) < 1e-14:
                    break
            z = c.trig(uu)
            z1 = c.trig(uu, 1)
            t = z1 / np.linalg.norm(z1, axis=1)[:, None]
            # same lift as the query point
            foot[sel] = z - (target - pts[sel])
            normal[sel] = np.column_stack([t[:, 1], -t[:, 0]])
            u[sel] = uu
        disp = pts - foot
        dist = np.einsum("ij,ij->i", disp, normal)
        return dist, foot, normal, comp, u


def signed_distance(b: BoundarySet, p):
    """Signed distance (negative inside E), foot point, normal at the foot, and uniqueness flag."""
    pts = np.atleast_2d(_xy(p))
    d, foot, nrm, _, _ = b.projector.project(pts)
    unique = np.abs(d) < b.tube_width
    if np.ndim(_xy(p)) == 1:
        return float(d[0]), TorusPoint(*foot[0]), nrm[0], bool(unique[0])
    return d, foot, nrm, unique


def normal_graph(reference: BoundarySet, target: BoundarySet, upsample: int = 4) -> np.ndarray:
    """Heights psi with y + psi(y) nu(y) on the target, for every reference node y."""
    eps = reference.tube_width
    y = reference.nodes
    nu = reference.stack("normal")
    seg_a, seg_d, seg_c, seg_u = [], [], [], []
    for i, c in enumerate(target.components):
        m = c.n * upsample
        u = TWO_PI * np.arange(m + 1) / m
        z = c.trig(u)
        seg_a.append(z[:-1])
        seg_d.append(z[1:] - z[:-1])
        seg_c.append(np.full(m, i))
        seg_u.append(u[:-1])
    A = np.vstack(seg_a)
    D = np.vstack(seg_d)
    owner = np.concatenate(seg_c)
    u0 = np.concatenate(seg_u)
    du = np.concatenate([np.full(c.n * upsample, TWO_PI / (c.n * upsample)) for c in target.components])

    psi = np.empty(len(y))
    comp_of = np.empty(len(y), dtype=int)
    u_of = np.empty(len(y))
    chunk = 256
    for lo in range(0, len(y), chunk):
        yy = y[lo : lo + chunk, None, :]
        nn = nu[lo : lo + chunk, None, :]
        a = yy + wrap(A[None, :, :] - yy)
        r = a - yy
        den = nn[..., 0] * D[None, :, 1] - nn[..., 1] * D[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (r[..., 0] * D[None, :, 1] - r[..., 1] * D[None, :, 0]) / den
            s = (r[..., 0] * nn[..., 1] - r[..., 1] * nn[..., 0]) / den
        hit = (np.abs(den) > 1e-300) & (s >= -1e-9) & (s < 1 - 1e-9) & (np.abs(t) < eps)
        counts = hit.sum(axis=1)
        bad = np.nonzero(counts != 1)[0]
        if bad.size:
            k = lo + int(bad[0])
            raise NotAGraph(f"normal line at reference node {k} meets the target {int(counts[bad[0]])} times")
        col = hit.argmax(axis=1)
        rows = np.arange(len(col))
        psi[lo : lo + chunk] = t[rows, col]
        comp_of[lo : lo + chunk] = owner[col]
        u_of[lo : lo + chunk] = u0[col] + s[rows, col] * du[col]

    # Newton on y + psi nu = z(u) against the smooth target
    for i, c in enumerate(target.components):
        sel = np.nonzero(comp_of == i)[0]
        if sel.size == 0:
            continue
        yy, nn = y[sel], nu[sel]
        uu, tt = u_of[sel], psi[sel]
        for _ in range(20):
            z = c.trig(uu)
            z1 = c.trig(uu, 1)
            f = yy + tt[:, None] * nn - (yy + wrap(z - yy))
            det = -nn[:, 0] * z1[:, 1] + nn[:, 1] * z1[:, 0]
            dt = (-f[:, 0] * (-z1[:, 1]) + f[:, 1] * (-z1[:, 0])) / det
            dv = (-nn[:, 0] * f[:, 1] + nn[:, 1] * f[:, 0]) / det
            tt = tt + dt
            uu = uu + dv
            if max(np.abs(dt).max(), np.abs(dv).max()) < 1e-15:
                break
        psi[sel] = tt
    return psi


# ---------------------------------------------------------------------------
# fixtures


def circle(r: float, center=(0.5, 0.5), n: int = 256, modes: Iterable = (), outward: bool = True) -> BoundarySet:
    """Circle of radius r, optionally perturbed by sum a_k cos(k theta + phi_k) along the normal.

    ``modes`` is an iterable of (k, a_k) or (k, a_k, phi_k).
    """
    th = TWO_PI * np.arange(n) / n
    rad = np.full(n, float(r))
    for m in modes:
        k, a = m[0], m[1]
        ph = m[2] if len(m) > 2 else 0.0
        rad = rad + a * np.cos(k * th + ph)
    pts = np.asarray(center, dtype=float) + rad[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    c = MarkerCurve(pts, (0, 0))
    return BoundarySet((c if outward else c.reversed(),))


def lamella(width: float = 0.5, n: int = 128, center: float = 0.5, shift: float = 0.0) -> BoundarySet:
    """Horizontal stripe {center - width/2 <= x2 <= center + width/2}; n nodes per line."""
    x = shift + np.arange(n) / n
    lo, hi = center - width / 2.0, center + width / 2.0
    bottom = MarkerCurve(np.column_stack([x, np.full(n, lo)]), (1, 0))
    top = MarkerCurve(np.column_stack([shift + 1.0 - np.arange(n) / n, np.full(n, hi)]), (-1, 0))
    return BoundarySet((bottom, top))


def union(*sets: BoundarySet) -> BoundarySet:
    return BoundarySet(tuple(c for s in sets for c in s.components))


# ---------------------------------------------------------------------------
# snapshot files


def write_snapshot(b: BoundarySet, path) -> None:
    lines = [f"torus-curve v1 components={len(b.components)}"]
    for c in b.components:
        w1, w2 = c.winding
        lines.append(f"component n={c.n} winding={w1},{w2} inside=1")
        for x1, x2 in canon(c.nodes):
            lines.append(f"{x1:.17g} {x2:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path) -> BoundarySet:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[:2] != ["torus-curve", "v1"] or not head[2].startswith("components="):
        raise InvalidRegion(f"{path}: not a torus-curve v1 file")
    k = int(head[2].split("=")[1])
    comps, flags = [], []
    pos = 1
    for _ in range(k):
        fields = dict(tok.split("=") for tok in lines[pos].split()[1:])
        n = int(fields["n"])
        winding = tuple(int(v) for v in fields["winding"].split(","))
        flags.append(int(fields["inside"]))
        pts = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1 : pos + 1 + n]])
        comps.append(MarkerCurve.from_points(pts, winding))
        pos += 1 + n
    return BoundarySet(tuple(comps), tuple(flags))

"""Second variation of J at critical sets and the constrained spectrum."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalBreakdown, OutsideTube, TubeTooWide
from .functional import advect, area, boundary_trace, nonlocal_energy, richardson_ladder
from .geometry import BoundarySet, TrigCurve
from .grid import DEFAULT_M
from .layers import gram_matrix, single_layer

TRANSLATION_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class TranslationFrame:
    """Modes t_i = <nu, e_i> for the eigenbasis e_i of A_ij = int nu_i nu_j dmu."""

    directions: np.ndarray  # rows e_i
    norms2: np.ndarray  # ||t_i||_W^2 = eigenvalues of A
    modes: np.ndarray  # rows t_i, all directions
    active: tuple  # indices with norm above the floor (the set I_E)

    @property
    def active_modes(self) -> np.ndarray:
        return self.modes[list(self.active)]


def translation_frame(b: BoundarySet) -> TranslationFrame:
    nu = b.stack("normal")
    ds = b.stack("ds")
    a = (nu * ds[:, None]).T @ nu
    lam, vec = np.linalg.eigh(a)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    modes = (nu @ vec).T
    active = tuple(i for i in range(2) if lam[i] > TRANSLATION_FLOOR)
    return TranslationFrame(directions=vec.T, norms2=lam, modes=modes, active=active)


def _spectral_d1(n: int) -> np.ndarray:
    """Complex matrix of d/du on n periodic samples.

    The Nyquist mode keeps wavenumber +n/2, so |D1 phi|^2 carries its full
    k^2 energy instead of the zero that a real derivative would give.
    """
    k = np.abs(np.fft.fftfreq(n, 1.0 / n)) * np.sign(np.fft.fftfreq(n))
    if n % 2 == 0:
        k[n // 2] = n // 2
    return np.fft.ifft(1j * k[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)


def dirichlet_matrix(b: BoundarySet, kind: str = "spectral") -> np.ndarray:
    """Symmetric form with phi @ D @ phi ~ int phi_s^2 dmu.

    ``spectral`` differentiates the trigonometric interpolant of phi and is
    exact on trigonometric polynomials; ``stencil`` is the periodic 3-point
    form sum (phi_{i+1} - phi_i)^2 / l_{i+1/2} with chord lengths l.
    """
    n = b.n_nodes
    d = np.zeros((n, n))
    for (lo, hi), f in zip(zip(b.offsets[:-1], b.offsets[1:]), b.frames):
        if kind == "spectral":
            k = hi - lo
            du = _spectral_d1(k)
            w = (2 * np.pi / k) / f.speed
            d[lo:hi, lo:hi] = (du.conj().T @ (w[:, None] * du)).real
            continue
        if kind != "stencil":
            raise ValueError(f"unknown Dirichlet form {kind!r}")
        k = hi - lo
        i = np.arange(k) + lo
        j = (np.arange(k) + 1) % k + lo
        w = 1.0 / f.chord
        np.add.at(d, (i, i), w)
        np.add.at(d, (j, j), w)
        np.add.at(d, (i, j), -w)
        np.add.at(d, (j, i), -w)
    return d


@dataclass(frozen=True, eq=False)
class QuadraticFormMatrix:
    Q: np.ndarray
    W: np.ndarray  # diagonal of the mass matrix (arclength weights)
    mean: np.ndarray  # ones: the mean-zero subspace is {phi : mean @ (W phi) = 0}
    translations: TranslationFrame
    gamma: float
    n_nodes: int

    @property
    def index_set(self) -> tuple:
        return self.translations.active

    def value(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(phi @ self.Q @ phi)

    def mass(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(np.sum(self.W * phi * phi))

    def rayleigh(self, phi) -> float:
        return self.value(phi) / self.mass(phi)


def assemble_pi(b: BoundarySet, gamma: float, m: int = DEFAULT_M, dirichlet: str = "spectral") -> QuadraticFormMatrix:
    """Q = D - diag(kappa^2 ds) + 8 gamma K + 4 gamma diag(dv/dnu ds)."""
    ds = b.stack("ds")
    kappa = b.stack("kappa")
    q = dirichlet_matrix(b, dirichlet) - np.diag(kappa**2 * ds)
    if gamma > 0:
        s = single_layer(b)
        tr = boundary_trace(b, gamma, m)
        q += 8.0 * gamma * gram_matrix(b, s) + 4.0 * gamma * np.diag(tr.dv_dn * ds)
    q = 0.5 * (q + q.T)
    return QuadraticFormMatrix(
        Q=q, W=ds, mean=np.ones_like(ds), translations=translation_frame(b), gamma=float(gamma), n_nodes=b.n_nodes
    )


@dataclass(frozen=True, eq=False)
class StabilityReport:
    eigenvalues: np.ndarray
    translation_values: np.ndarray  # Q(t_i) for i in I_E
    translation_norms: np.ndarray  # ||t_i||_W^2
    zero_modes: int
    verdict: str
    gamma: float
    tolerance: float
    n_nodes: int
    extra: dict = field(default_factory=dict)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def as_dict(self) -> dict:
        out = {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "translation_values": [float(v) for v in self.translation_values],
            "translation_norms": [float(v) for v in self.translation_norms],
            "zero_modes": int(self.zero_modes),
            "verdict": self.verdict,
            "gamma": self.gamma,
            "zero_tolerance": self.tolerance,
            "n_nodes": self.n_nodes,
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def constrained_basis(qf: QuadraticFormMatrix) -> np.ndarray:
    """Columns z with phi = W^{-1/2} z spanning the W-complement of constants and active translations."""
    root = np.sqrt(qf.W)
    cons = [root * qf.mean] + [root * t for t in qf.translations.active_modes]
    c = np.column_stack(cons)
    full, _ = np.linalg.qr(c, mode="complete")
    return full[:, c.shape[1] :]


def constrained_spectrum(qf: QuadraticFormMatrix, extra: dict | None = None) -> StabilityReport:
    root = np.sqrt(qf.W)
    z = constrained_basis(qf)
    scaled = qf.Q / np.outer(root, root)
    h = z.T @ scaled @ z
    try:
        eig = scipy.linalg.eigh(0.5 * (h + h.T), eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalBreakdown(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(eig)):
        raise NumericalBreakdown("non-finite eigenvalues")
    zeta = 10.0 * float(np.abs(eig).max()) / qf.n_nodes**2
    tv = np.array([qf.value(t) for t in qf.translations.active_modes])
    tn = qf.translations.norms2[list(qf.index_set)]
    zero = int(np.sum(np.abs(tv) <= zeta * tn))
    if eig[0] > zeta:
        verdict = "strictly-stable"
    elif eig[0] < -zeta:
        verdict = "unstable"
    else:
        verdict = "stable"
    return StabilityReport(
        eigenvalues=eig,
        translation_values=tv,
        translation_norms=tn,
        zero_modes=zero,
        verdict=verdict,
        gamma=qf.gamma,
        tolerance=zeta,
        n_nodes=qf.n_nodes,
        extra=dict(extra or {}),
    )


# ---------------------------------------------------------------------------
# divergence-free extension and the second-variation check


class DivFreeField:
    """X(x) = phi(pi(x)) grad d(x) / (1 + d(x) kappa(pi(x))) in the tube around dE."""

    def __init__(self, b: BoundarySet, phi):
        phi = np.asarray(phi, dtype=float)
        ds = b.stack("ds")
        if abs(np.sum(phi * ds)) > 1e-8 * max(1.0, np.sqrt(np.sum(phi**2 * ds))):
            raise ValueError("the normal speed must have zero mean on the boundary")
        self.b = b
        self.width = b.tube_width
        self._phi = [TrigCurve(part[:, None], np.zeros(1)) for part in b.split(phi)]

    def _kappa(self, comp: int, u: np.ndarray) -> np.ndarray:
        c = self.b.components[comp]
        z1 = c.trig(u, 1)
        z2 = c.trig(u, 2)
        sp = np.hypot(z1[:, 0], z1[:, 1])
        return (z1[:, 0] * z2[:, 1] - z1[:, 1] * z2[:, 0]) / sp**3

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d, _, normal, comp, u = self.b.projector.project(pts)
        if np.any(np.abs(d) > self.width):
            raise OutsideTube(f"point at distance {np.abs(d).max():.3e} outside tube {self.width:.3e}")
        out = np.empty_like(pts)
        for i, interp in enumerate(self._phi):
            sel = comp == i
            if not sel.any():
                continue
            xi = 1.0 + d[sel] * self._kappa(i, u[sel])
            if np.any(xi <= 0):
                raise TubeTooWide("1 + t kappa vanishes inside the tube")
            out[sel] = (interp(u[sel])[:, 0] / xi)[:, None] * normal[sel]
        return out


def divfree_normal_field(b: BoundarySet, phi) -> DivFreeField:
    return DivFreeField(b, phi)


def second_variation_check(
    b: BoundarySet, gamma: float, phi, delta0: float = 1e-2, m: int = DEFAULT_M, qf: QuadraticFormMatrix | None = None
) -> tuple[float, float]:
    """(second difference of J along the divergence-free flow of phi, phi @ Q @ phi)."""
    X = divfree_normal_field(b, phi)

    def energy(t):
        moved = advect(b, X, t) if t != 0 else b
        return area(moved) + (gamma * nonlocal_energy(moved, method="boundary") if gamma > 0 else 0.0)

    e0 = energy(0.0)

    def second(d):
        return (energy(d) - 2 * e0 + energy(-d)) / d**2

    fd = richardson_ladder(second, delta0, rtol=1e-5, atol=1e-6)
    if qf is None:
        qf = assemble_pi(b, gamma, m)
    return float(fd), qf.value(phi)

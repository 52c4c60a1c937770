"""Area, nonlocal energy, the functional J and the potential on the boundary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergedDerivative
from .geometry import BoundarySet
from .greens import BIHARMONIC
from .grid import DEFAULT_M, indicator_potential
from .layers import potential_gradient, single_layer


@dataclass(frozen=True)
class EnergyBreakdown:
    area: float
    nonlocal_: float
    gamma: float

    @property
    def nonlocal_energy(self) -> float:
        return self.nonlocal_

    @property
    def J(self) -> float:
        return self.area + self.gamma * self.nonlocal_

    def as_dict(self) -> dict:
        return {"area": self.area, "nonlocal": self.nonlocal_, "gamma": self.gamma, "J": self.J}


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Per-node potential data, stacked over components."""

    v: np.ndarray
    dv_dn: np.ndarray
    kappa: np.ndarray
    residual: np.ndarray
    ds: np.ndarray
    gamma: float

    @property
    def lam(self) -> float:
        return float(self.residual.mean())

    @property
    def defect(self) -> float:
        return float(self.residual.std())


def area(b: BoundarySet) -> float:
    return b.length


def _boundary_nonlocal(b: BoundarySet) -> float:
    # int |grad v|^2 = 4 int_E int_E G = -4 int int Phi(x - y) <nu_x, nu_y>, Lap Phi = G
    return -4.0 * BIHARMONIC.layer_energy(b.nodes, b.stack("normal"), b.stack("ds"))


def nonlocal_energy(b: BoundarySet, m: int = DEFAULT_M, method: str = "grid") -> float:
    """int |grad v_E|^2, from a spectral grid solve (default) or a boundary double integral."""
    if method == "grid":
        return indicator_potential(b, m).energy
    if method == "boundary":
        return _boundary_nonlocal(b)
    raise ValueError(f"unknown method {method!r}")


def J(b: BoundarySet, gamma: float, m: int = DEFAULT_M, method: str = "grid") -> EnergyBreakdown:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return EnergyBreakdown(area=area(b), nonlocal_=nonlocal_energy(b, m, method), gamma=float(gamma))


def boundary_potential(b: BoundarySet) -> np.ndarray:
    """v_E at the nodes from v_E(x) = 2 int_E G(x, .) = -2 int_{dE} <grad Phi(x - y), nu(y)>."""
    return -2.0 * BIHARMONIC.layer_potential(b.nodes, b.stack("normal"), b.stack("ds"))


def boundary_trace(b: BoundarySet, gamma: float, m: int = DEFAULT_M, v_method: str = "grid") -> BoundaryTrace:
    if v_method == "grid":
        v = indicator_potential(b, m).trace(b.nodes)
    elif v_method == "boundary":
        v = boundary_potential(b)
    else:
        raise ValueError(f"unknown method {v_method!r}")
    grad = potential_gradient(b, single_layer(b))
    dv_dn = np.einsum("ij,ij->i", grad, b.stack("normal"))
    kappa = b.stack("kappa")
    return BoundaryTrace(
        v=v, dv_dn=dv_dn, kappa=kappa, residual=kappa + 4.0 * gamma * v, ds=b.stack("ds"), gamma=float(gamma)
    )


# ---------------------------------------------------------------------------
# finite-difference checks


def advect(b: BoundarySet, field, t: float, steps: int = 4) -> BoundarySet:
    """Move the nodes along a vector field with classical RK4.

    ``field`` is either a callable (points -> vectors) or a fixed per-node array.
    """
    if not callable(field):
        return b.with_nodes(b.nodes + t * np.asarray(field, dtype=float))
    x = b.nodes.copy()
    h = t / steps
    for _ in range(steps):
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return b.with_nodes(x)


def richardson_ladder(estimate, delta0: float, order: int = 2, levels: int = 6, rtol: float = 1e-6, atol: float = 1e-10):
    """Halve delta until two successive Richardson values agree; return the last one."""
    prev_raw = estimate(delta0)
    prev_ext = None
    delta = delta0
    for _ in range(levels - 1):
        delta *= 0.5
        raw = estimate(delta)
        ext = (2**order * raw - prev_raw) / (2**order - 1)
        if prev_ext is not None and abs(ext - prev_ext) <= max(atol, rtol * abs(ext)):
            return ext
        prev_raw, prev_ext = raw, ext
    raise NonConvergedDerivative(f"Richardson ladder did not settle after {levels} levels")


def first_variation_check(
    b: BoundarySet, gamma: float, X, delta0: float = 1e-3, m: int = DEFAULT_M
) -> tuple[float, float]:
    """(finite-difference dJ/dt, int (kappa + 4 gamma v) <X, nu> dmu) along the field X."""

    def energy(t):
        moved = advect(b, X, t)
        # the boundary double integral is smooth in the nodes, unlike the cut-cell grid
        return area(moved) + (gamma * nonlocal_energy(moved, method="boundary") if gamma > 0 else 0.0)

    def central(d):
        return (energy(d) - energy(-d)) / (2 * d)

    fd = richardson_ladder(central, delta0)
    xn = X(b.nodes) if callable(X) else np.asarray(X, dtype=float)
    r = b.stack("kappa")
    if gamma > 0:
        r = r + 4.0 * gamma * boundary_potential(b)
    formula = float(np.sum(r * np.einsum("ij,ij->i", xn, b.stack("normal")) * b.stack("ds")))
    return float(fd), formula

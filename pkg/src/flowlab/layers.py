"""Single-layer potentials on marker curves.

Within a component the log singularity of G is integrated with Kress product
quadrature, which stays spectrally accurate on nodes equispaced in the curve
parameter.  Pairs of distinct components use the plain trapezoid rule.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import IllConditionedLayer
from .geometry import BoundarySet, TWO_PI
from .greens import INV_2PI, REGULAR_AT_ZERO, green

MAX_CONDITION = 1e12


def kress_weights(n: int) -> np.ndarray:
    """R_k with sum_j R_{|i-j|} f_j ~ int log(4 sin^2((t_i - t) / 2)) f(t) dt, t_j = 2 pi j / n."""
    k = np.arange(n)
    half = n // 2
    m = np.arange(1, half)
    r = -(4 * math.pi / n) * (np.cos(TWO_PI * np.outer(k, m) / n) @ (1.0 / m))
    r -= (4 * math.pi / n**2) * np.cos(math.pi * k)
    return r


def _component_block(nodes: np.ndarray, speed: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
    """Matrix of (i, j) -> weight so that block @ f ~ int G(x_i, y) f(y) dmu(y)."""
    n = nodes.shape[0]
    t = TWO_PI * np.arange(n) / n
    log_sin = np.log(4 * np.sin(0.5 * (t[:, None] - t[None, :])) ** 2 + np.eye(n))
    if g is None:
        with np.errstate(divide="ignore"):
            g = green(nodes[:, None, :] - nodes[None, :, :])
    smooth = g + (0.5 * INV_2PI) * log_sin
    np.fill_diagonal(smooth, REGULAR_AT_ZERO - INV_2PI * np.log(speed))
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    singular = -(0.5 * INV_2PI) * kress_weights(n)[idx]
    return (singular + (TWO_PI / n) * smooth) * speed[None, :]


def single_layer(b: BoundarySet) -> np.ndarray:
    """S with (S @ f)_i ~ int_{dE} G(x_i, y) f(y) dmu(y)."""
    nodes = b.nodes
    ds = b.stack("ds")
    d = nodes[:, None, :] - nodes[None, :, :]
    with np.errstate(divide="ignore"):
        g = green(d)
    s = g * ds[None, :]
    for (a, e), c, f in zip(zip(b.offsets[:-1], b.offsets[1:]), b.components, b.frames):
        s[a:e, a:e] = _component_block(c.nodes, f.speed, g[a:e, a:e])
    return s


def gram_matrix(b: BoundarySet, s: np.ndarray | None = None) -> np.ndarray:
    """Symmetric K with phi @ K @ psi ~ int int G(x, y) phi(x) psi(y)."""
    if s is None:
        s = single_layer(b)
    k = b.stack("ds")[:, None] * s
    return 0.5 * (k + k.T)


def potential_gradient(b: BoundarySet, s: np.ndarray | None = None) -> np.ndarray:
    """grad v_E at the nodes through grad v_E(x) = -2 int G(x, y) nu(y) dmu(y)."""
    if s is None:
        s = single_layer(b)
    return -2.0 * s @ b.stack("normal")


def bordered_solve(s: np.ndarray, ds: np.ndarray, g: np.ndarray):
    """Solve S sigma + c = g, <sigma, ds> = 0.  Returns (sigma, c)."""
    n = s.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = s
    a[:n, n] = 1.0
    a[n, :n] = ds
    rhs = np.append(g, 0.0)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedLayer(f"single-layer system condition number {cond:.3e}")
    sol = np.linalg.solve(a, rhs)
    return sol[:n], float(sol[n])

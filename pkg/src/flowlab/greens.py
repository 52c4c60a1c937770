"""Zero-mean Green's function of the Laplacian on the unit 2-torus.

Two independent evaluators are provided:

* :class:`GreensEvaluator` -- Ewald splitting of the heat-kernel integral.
  The short-range part is a lattice sum of exponential integrals E1, the
  long-range part a Gaussian-damped Fourier sum.
* :func:`green` / :func:`green_grad` -- the closed form through the Jacobi
  theta function theta_1 with nome q = exp(-pi), vectorised and cheap; used
  for dense matrix assembly.

Both satisfy -Lap_x G(x, y) = delta_y - 1 and int G(x, y) dx = 0.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import exp1

from .errors import SingularArgument
from .geometry import TorusPoint, _xy, wrap

INV_2PI = 1.0 / (2.0 * math.pi)
EULER_GAMMA = 0.5772156649015329

# theta_1(pi z | i) = 2 sum_n (-1)^n q^{(n+1/2)^2} sin((2n+1) pi z), q = e^{-pi}
_THETA_TERMS = 6
_THETA_N = np.arange(_THETA_TERMS)
_THETA_ODD = 2 * _THETA_N + 1
_THETA_COEF = 2.0 * (-1.0) ** _THETA_N * np.exp(-math.pi * (_THETA_N + 0.5) ** 2)
# makes the torus average vanish: (1/2pi) log prod(1 - e^{-2 pi n}) - 1/24
_THETA_CONST = INV_2PI * float(np.sum(np.log1p(-np.exp(-2 * math.pi * np.arange(1, 40))))) - 1.0 / 24.0
# lim_{r->0} G(r) + log|r| / 2pi
REGULAR_AT_ZERO = -INV_2PI * math.log(math.pi * float(np.sum(_THETA_COEF * _THETA_ODD))) + _THETA_CONST


def _theta(z, derivative=True):
    arg = np.multiply.outer(z, math.pi * _THETA_ODD)
    th = np.sin(arg) @ _THETA_COEF
    if not derivative:
        return th, None
    dth = np.cos(arg) @ (_THETA_COEF * _THETA_ODD * math.pi)
    return th, dth


@numba.njit(cache=True)
def _green_kernel(d1, d2, coef, const):
    out = np.empty(d1.shape[0])
    for p in range(d1.shape[0]):
        a = d1[p] - math.floor(d1[p] + 0.5)
        b = d2[p] - math.floor(d2[p] + 0.5)
        # sin((2n+1) pi z) = (w^{2n+1} - w^{-(2n+1)}) / 2i with w = e^{i pi z}
        w = cmath.exp(complex(-b, a) * math.pi)
        wi = 1.0 / w
        w2, wi2 = w * w, wi * wi
        th = 0j
        for n in range(coef.shape[0]):
            th += coef[n] * (w - wi)
            w *= w2
            wi *= wi2
        th *= -0.5j
        mag = abs(th)
        out[p] = math.inf if mag == 0.0 else -INV_2PI * math.log(mag) + 0.5 * b * b + const
    return out


def green(d1, d2=None):
    """G at displacement(s) x - y.  Accepts (..., 2) arrays or two coordinate arrays."""
    if d2 is None:
        d = np.asarray(d1, dtype=float)
        d1, d2 = d[..., 0], d[..., 1]
    d1, d2 = np.broadcast_arrays(np.asarray(d1, dtype=float), np.asarray(d2, dtype=float))
    flat = _green_kernel(np.ascontiguousarray(d1).ravel(), np.ascontiguousarray(d2).ravel(),
                         _THETA_COEF, _THETA_CONST)
    return flat.reshape(d1.shape) if d1.ndim else float(flat[0])


def green_regular(d1, d2):
    """G + log|d| / 2pi, with the limit value at d = 0."""
    d1 = wrap(d1)
    d2 = wrap(d2)
    r = np.hypot(d1, d2)
    small = r == 0
    with np.errstate(divide="ignore"):
        out = green(d1, d2) + INV_2PI * np.log(np.where(small, 1.0, r))
    return np.where(small, REGULAR_AT_ZERO, out)


def green_grad(d1, d2=None):
    """Gradient in x of G(x, y) as a (..., 2) array."""
    if d2 is None:
        d = np.asarray(d1, dtype=float)
        d1, d2 = d[..., 0], d[..., 1]
    d1 = wrap(d1)
    d2 = wrap(d2)
    th, dth = _theta(d1 + 1j * d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = dth / th
    return np.stack([-INV_2PI * w.real, INV_2PI * w.imag + d2], axis=-1)


@dataclass
class GreensEvaluator:
    """Ewald-split evaluator.

    ``sigma`` is the Gaussian screening width; the split point in heat-kernel
    time is ``s = sigma**2 / 2``.
    """

    sigma: float = 0.35
    k_spectral: int = 6
    k_real: int = 3
    _images: np.ndarray = field(init=False, repr=False)
    _modes: np.ndarray = field(init=False, repr=False)
    _mode_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = self.split_time
        r = np.arange(-self.k_real, self.k_real + 1)
        self._images = np.array([(a, b) for a in r for b in r], dtype=float)
        k = np.arange(-self.k_spectral, self.k_spectral + 1)
        modes = np.array([(a, b) for a in k for b in k if (a, b) != (0, 0)], dtype=float)
        k2 = (modes**2).sum(axis=1)
        self._modes = modes
        self._mode_weights = np.exp(-4 * math.pi**2 * k2 * s) / (4 * math.pi**2 * k2)

    @property
    def split_time(self) -> float:
        return 0.5 * self.sigma**2

    def _real_space(self, d, drop_origin=False):
        s = self.split_time
        rel = d[..., None, :] - self._images
        rho2 = (rel**2).sum(axis=-1)
        if drop_origin:
            rho2 = np.where((self._images == 0).all(axis=1), np.inf, rho2)
        with np.errstate(divide="ignore", over="ignore"):
            vals = exp1(rho2 / (4 * s)) / (4 * math.pi)
        return vals.sum(axis=-1) - s

    def _spectral(self, d):
        phase = 2 * math.pi * (d @ self._modes.T)
        return np.cos(phase) @ self._mode_weights

    def value(self, d) -> np.ndarray:
        d = wrap(np.asarray(d, dtype=float))
        if np.any(np.all(d == 0, axis=-1)):
            raise SingularArgument("G(x, x) is undefined")
        return self._real_space(d) + self._spectral(d)

    def gradient(self, d) -> np.ndarray:
        d = wrap(np.asarray(d, dtype=float))
        if np.any(np.all(d == 0, axis=-1)):
            raise SingularArgument("grad G(x, x) is undefined")
        s = self.split_time
        rel = d[..., None, :] - self._images
        rho2 = (rel**2).sum(axis=-1)
        real = (-INV_2PI * np.exp(-rho2 / (4 * s)) / rho2)[..., None] * rel
        phase = 2 * math.pi * (d @ self._modes.T)
        recip = -(np.sin(phase) * self._mode_weights) @ (2 * math.pi * self._modes)
        return real.sum(axis=-2) + recip

    def regular_at_zero(self) -> float:
        """lim G(r) + log|r|/2pi, from the Ewald pieces."""
        s = self.split_time
        zero = np.zeros(2)
        self_term = (math.log(4 * s) - EULER_GAMMA) / (4 * math.pi)
        return float(self_term + self._real_space(zero, drop_origin=True) + self._spectral(zero))


DEFAULT_EVALUATOR = GreensEvaluator()


def greens_value(g: GreensEvaluator, x, y) -> float:
    return float(g.value(wrap(_xy(x) - _xy(y))))


def greens_gradient(g: GreensEvaluator, x, y) -> np.ndarray:
    return g.gradient(wrap(_xy(x) - _xy(y)))


class BiharmonicKernel:
    """Zero-mean Phi with Lap Phi = G, i.e. Fourier coefficients -1/(16 pi^4 |k|^4).

    Used to write int_E int_E G as a double boundary integral, which is a
    smooth function of the boundary nodes.  Ewald split at heat-kernel time
    s = sigma^2 / 2; the Fourier part is summed separably in k1 and k2.
    """

    def __init__(self, sigma: float = 0.2, k_spectral: int = 7, k_real: int = 1):
        self.s = 0.5 * sigma**2
        self.k_spectral = k_spectral
        r = np.arange(-k_real, k_real + 1)
        self._images = np.array([(a, b) for a in r for b in r], dtype=float)
        k = np.arange(-k_spectral, k_spectral + 1)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        lam = 4 * math.pi**2 * (k1**2 + k2**2).astype(float)
        lam[k_spectral, k_spectral] = 1.0
        self._w = np.exp(-lam * self.s) * (1 + lam * self.s) / lam**2
        self._w[k_spectral, k_spectral] = 0.0
        self._k = k

    def _fourier(self, d, order):
        kmax = self.k_spectral
        z1 = _powers(np.exp(2j * math.pi * d[..., 0]), kmax)
        z2 = _powers(np.exp(2j * math.pi * d[..., 1]), kmax)
        zw = z1 @ self._w
        if order == 0:
            return (zw * z2).sum(axis=-1).real
        dk = 2j * math.pi * self._k
        g1 = (((z1 * dk) @ self._w) * z2).sum(axis=-1).real
        g2 = (zw * (z2 * dk)).sum(axis=-1).real
        return np.stack([g1, g2], axis=-1)

    def _real(self, d, order):
        flat = np.ascontiguousarray(d.reshape(-1, 2))
        out = _real_space_sums(flat, self._images, self.s, order, _F_SPLINE.c, _E1_SPLINE.c, _DX)
        if order == 0:
            return out[:, 0].reshape(d.shape[:-1])
        return out.reshape(d.shape)

    def _layer_moments(self, x, nu, ds):
        z1 = _powers(np.exp(2j * math.pi * x[:, 0]), self.k_spectral)
        z2 = _powers(np.exp(2j * math.pi * x[:, 1]), self.k_spectral)
        a1 = (z1 * (nu[:, 0] * ds)[:, None]).T @ z2
        a2 = (z1 * (nu[:, 1] * ds)[:, None]).T @ z2
        return z1, z2, a1, a2

    def layer_potential(self, x, nu, ds) -> np.ndarray:
        """sum_j <grad Phi(x_i - x_j), nu_j> ds_j for every node i."""
        x = np.ascontiguousarray(x, dtype=float)
        real, _ = _layer_sums(x, np.ascontiguousarray(nu, dtype=float), np.ascontiguousarray(ds, dtype=float),
                              self._images, self.s, True, False, _F_SPLINE.c, _E1_SPLINE.c, _DX)
        z1, z2, a1, a2 = self._layer_moments(x, nu, ds)
        k = self._k
        # e^{2 pi i k.(x_i - x_j)} separates into node factors
        c = self._w * 2j * math.pi * (k[:, None] * a1.conj() + k[None, :] * a2.conj())
        fourier = np.einsum("ia,ab,ib->i", z1, c, z2).real
        return real / (8 * math.pi) - fourier

    def layer_energy(self, x, nu, ds) -> float:
        """sum_ij Phi(x_i - x_j) <nu_i, nu_j> ds_i ds_j."""
        x = np.ascontiguousarray(x, dtype=float)
        nu = np.ascontiguousarray(nu, dtype=float)
        ds = np.ascontiguousarray(ds, dtype=float)
        _, real = _layer_sums(x, nu, ds, self._images, self.s, False, True, _F_SPLINE.c, _E1_SPLINE.c, _DX)
        _, _, a1, a2 = self._layer_moments(x, nu, ds)
        fourier = float(np.sum(self._w * (np.abs(a1) ** 2 + np.abs(a2) ** 2)))
        net = (nu * ds[:, None]).sum(axis=0)
        return -(self.s * real / (4 * math.pi) - 0.5 * self.s**2 * float(net @ net)) - fourier

    def value(self, d) -> np.ndarray:
        d = wrap(np.asarray(d, dtype=float))
        # per image s (e^{-x} - x E1(x)), x = |rel|^2 / 4s
        real = self.s * self._real(d, 0) / (4 * math.pi) - 0.5 * self.s**2
        return -real - self._fourier(d, 0)

    def gradient(self, d) -> np.ndarray:
        d = wrap(np.asarray(d, dtype=float))
        real = self._real(d, 1) / (8 * math.pi)
        return real - self._fourier(d, 1)


def _powers(z, kmax):
    """Columns z^-kmax ... z^kmax for |z| = 1."""
    out = np.empty(z.shape + (2 * kmax + 1,), dtype=complex)
    out[..., kmax] = 1.0
    for j in range(1, kmax + 1):
        out[..., kmax + j] = out[..., kmax + j - 1] * z
        out[..., kmax - j] = out[..., kmax + j].conj()
    return out


# Tables for the exponential-integral terms of the Ewald sums.  Both
# e^{-x} - x E1(x) - x log x and E1(x) + log x are entire, so cubic splines of
# them are accurate to ~1e-13 on a modest grid; beyond X_CUT both terms are
# below 1e-23 and are dropped.
_X_CUT = 50.0
_XS = np.linspace(0.0, _X_CUT, 40001)
with np.errstate(divide="ignore", invalid="ignore"):
    _XLOGX = np.where(_XS > 0, _XS * np.log(_XS), 0.0)
    _LOGX = np.log(np.where(_XS > 0, _XS, 1.0))
_E1_SMOOTH = np.where(_XS > 0, exp1(np.where(_XS > 0, _XS, 1.0)) + _LOGX, -EULER_GAMMA)
_F_SMOOTH = np.exp(-_XS) - _XS * (_E1_SMOOTH - _LOGX) - _XLOGX
_F_SPLINE = CubicSpline(_XS, _F_SMOOTH)
_E1_SPLINE = CubicSpline(_XS, _E1_SMOOTH)
_DX = float(_XS[1] - _XS[0])


@numba.njit(cache=True)
def _spline_at(c, dx, x):
    i = min(int(x / dx), c.shape[1] - 1)
    t = x - i * dx
    return ((c[0, i] * t + c[1, i]) * t + c[2, i]) * t + c[3, i]


@numba.njit(cache=True)
def _real_space_sums(d, images, s, order, cf, ce, dx):
    """Sum over images of e^{-x} - x E1(x) (order 0) or E1(x) rel (order 1)."""
    n = d.shape[0]
    out = np.zeros((n, 2))
    for p in range(n):
        for q in range(images.shape[0]):
            r1 = d[p, 0] - images[q, 0]
            r2 = d[p, 1] - images[q, 1]
            x = (r1 * r1 + r2 * r2) / (4.0 * s)
            if x >= _X_CUT:
                continue
            if order == 0:
                v = _spline_at(cf, dx, x)
                if x > 0:
                    v += x * math.log(x)
                out[p, 0] += v
            elif x > 0:
                e = _spline_at(ce, dx, x) - math.log(x)
                out[p, 0] += e * r1
                out[p, 1] += e * r2
    return out


@numba.njit(cache=True)
def _layer_sums(x, nu, ds, images, s, want_pot, want_energy, cf, ce, dx):
    """Real-space Ewald parts of the boundary potential and pair energy, summed without temporaries."""
    n = x.shape[0]
    pot = np.zeros(n)
    energy = 0.0
    for i in range(n):
        for j in range(n):
            d1 = x[i, 0] - x[j, 0]
            d2 = x[i, 1] - x[j, 1]
            d1 -= math.floor(d1 + 0.5)
            d2 -= math.floor(d2 + 0.5)
            f = 0.0
            g = 0.0
            for q in range(images.shape[0]):
                r1 = d1 - images[q, 0]
                r2 = d2 - images[q, 1]
                xx = (r1 * r1 + r2 * r2) / (4.0 * s)
                if xx >= _X_CUT:
                    continue
                if want_energy:
                    f += _spline_at(cf, dx, xx)
                    if xx > 0:
                        f += xx * math.log(xx)
                if want_pot and xx > 0:
                    g += (_spline_at(ce, dx, xx) - math.log(xx)) * (r1 * nu[j, 0] + r2 * nu[j, 1])
            pot[i] += g * ds[j]
            energy += f * (nu[i, 0] * nu[j, 0] + nu[i, 1] * nu[j, 1]) * ds[i] * ds[j]
    return pot, energy


BIHARMONIC = BiharmonicKernel()


def fourier_partial_sum(d, k_max: int) -> float:
    """Plain truncated Fourier series of G; converges slowly, for cross-checks only."""
    d = wrap(np.asarray(d, dtype=float))
    k = np.arange(-k_max, k_max + 1)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    kk = (k1**2 + k2**2).astype(float)
    kk[k_max, k_max] = np.inf
    return float(np.sum(np.cos(2 * math.pi * (k1 * d[0] + k2 * d[1])) / (4 * math.pi**2 * kk)))


__all__ = [
    "GreensEvaluator",
    "DEFAULT_EVALUATOR",
    "REGULAR_AT_ZERO",
    "green",
    "green_grad",
    "green_regular",
    "greens_value",
    "greens_gradient",
    "fourier_partial_sum",
    "BiharmonicKernel",
    "BIHARMONIC",
    "TorusPoint",
]

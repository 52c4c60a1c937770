import math

import numpy as np
import pytest
from scipy.signal import resample

from flowlab.errors import SingularArgument
from flowlab.geometry import circle
from flowlab.greens import (
    BIHARMONIC,
    DEFAULT_EVALUATOR,
    REGULAR_AT_ZERO,
    GreensEvaluator,
    fourier_partial_sum,
    green,
    green_grad,
    green_regular,
    greens_gradient,
    greens_value,
)
from flowlab.grid import GridField, indicator_potential, poisson_solve, spectral_laplacian
from flowlab.layers import gram_matrix, single_layer

G = DEFAULT_EVALUATOR


def _fd_laplacian(f, x, h):
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    return (f(x + e1) + f(x - e1) + f(x + e2) + f(x - e2) - 4 * f(x)) / h**2


def test_symmetry(rng):
    for x, y in rng.uniform(size=(100, 2, 2)):
        assert abs(greens_value(G, x, y) - greens_value(G, y, x)) <= 1e-12


def test_fd_laplacian_is_minus_one(rng):
    # the stencil's truncation error h^2/12 |d^4 G| ~ h^2 / (4 pi r^4) needs r >= 0.25 for 1e-4
    y = np.array([0.3, 0.6])
    pts = rng.uniform(size=(200, 2))
    far = np.linalg.norm(((pts - y + 0.5) % 1) - 0.5, axis=1) >= 0.25
    for x in pts[far][:20]:
        lap = _fd_laplacian(lambda p: greens_value(G, p, y), x, 1e-3)
        assert abs(-lap - (-1.0)) <= 1e-4


def test_regular_part_bounded_near_pole():
    y = np.array([0.5, 0.5])
    reg = [greens_value(G, y + r * np.array([0.6, 0.8]), y) + math.log(r) / (2 * math.pi) for r in (1e-3, 1e-4)]
    assert abs(reg[0] - reg[1]) <= 1e-5
    assert abs(reg[1] - REGULAR_AT_ZERO) <= 1e-6
    assert abs(G.regular_at_zero() - REGULAR_AT_ZERO) <= 1e-10


def test_zero_mean():
    # midpoint rule on a grid offset from the pole; the log singularity costs O(h^2 log h)
    m = 256
    x = (np.arange(m) + 0.5) / m
    d = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1) - 0.0
    assert abs(green(d).mean()) < 1e-4


def test_singular_argument():
    with pytest.raises(SingularArgument):
        greens_value(G, (0.2, 0.3), (0.2, 0.3))
    with pytest.raises(SingularArgument):
        greens_gradient(G, (0.2, 0.3), (1.2, -0.7))
    assert math.isinf(green(0.0, 0.0))


def test_gradient_matches_fd(rng):
    h = 1e-5
    for x, y in rng.uniform(size=(100, 2, 2)):
        if np.linalg.norm(((x - y + 0.5) % 1) - 0.5) < 0.05:
            continue
        fd = [(greens_value(G, x + h * e, y) - greens_value(G, x - h * e, y)) / (2 * h) for e in np.eye(2)]
        g = greens_gradient(G, x, y)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g) + 1e-9


def test_gradient_antisymmetry(rng):
    for x, y in rng.uniform(size=(20, 2, 2)):
        np.testing.assert_allclose(greens_gradient(G, x, y), -greens_gradient(G, y, x), atol=1e-10)


def test_gradient_singular_part():
    y = np.array([0.4, 0.4])
    d = 1e-4 * np.array([0.6, -0.8])
    g = greens_gradient(G, y + d, y)
    lead = -d / (2 * math.pi * (d @ d))
    assert np.linalg.norm(g - lead) <= 0.01 * np.linalg.norm(lead)


def test_theta_and_ewald_agree(rng):
    d = rng.uniform(-0.5, 0.5, size=(200, 2))
    np.testing.assert_allclose(green(d), G.value(d), atol=1e-12)
    np.testing.assert_allclose(green_grad(d), G.gradient(d), atol=1e-10)
    # a different split gives the same function
    other = GreensEvaluator(sigma=0.25, k_spectral=9, k_real=3)
    np.testing.assert_allclose(other.value(d), G.value(d), atol=1e-12)


def test_periodicity_and_reflection(rng):
    d = rng.uniform(-0.5, 0.5, size=(50, 2))
    np.testing.assert_allclose(green(d + [1.0, -2.0]), green(d), atol=1e-13)
    np.testing.assert_allclose(green(d[:, ::-1]), green(d), atol=1e-13)
    np.testing.assert_allclose(green(-d), green(d), atol=1e-13)


def test_green_regular_limit():
    assert green_regular(0.0, 0.0) == pytest.approx(REGULAR_AT_ZERO)
    assert abs(green_regular(1e-7, 0.0) - REGULAR_AT_ZERO) < 1e-10


def test_fourier_partial_sum_converges():
    # square truncation converges slowly and not monotonically away from the pole
    d = np.array([0.31, 0.17])
    exact = green(d)
    errs = {k: abs(fourier_partial_sum(d, k) - exact) for k in (16, 128, 256, 512)}
    assert errs[16] > 1e-5
    assert max(errs[128], errs[256], errs[512]) < 2e-6


def test_poisson_single_mode():
    rhs = GridField.from_function(lambda x, y: np.cos(2 * np.pi * x), 64)
    v = poisson_solve(rhs)
    want = GridField.from_function(lambda x, y: np.cos(2 * np.pi * x) / (4 * np.pi**2), 64)
    assert np.abs(v.values - want.values).max() <= 1e-12
    assert np.abs(poisson_solve(GridField(np.zeros((32, 32)))).values).max() == 0.0
    np.testing.assert_allclose(-spectral_laplacian(v).values, rhs.values, atol=1e-10)


def test_poisson_removes_mean():
    rhs = GridField.from_function(lambda x, y: 3.0 + np.sin(2 * np.pi * y), 32)
    v = poisson_solve(rhs)
    assert abs(v.mean) < 1e-14
    np.testing.assert_allclose(-spectral_laplacian(v).values, rhs.values - 3.0, atol=1e-10)


def test_stripe_potential_vanishes_on_boundary(stripe):
    pot = indicator_potential(stripe, 512)
    x = np.linspace(0, 1, 17)
    for level in (0.25, 0.75):
        vals = pot.trace(np.column_stack([x, np.full_like(x, level)]))
        assert np.abs(vals).max() <= 2e-3
    assert abs(pot.energy - pot.energy_pairing) < 1e-12


def test_grid_field_round_trip(tmp_path):
    f = GridField.from_function(lambda x, y: np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y), 16)
    f.dump(tmp_path / "f.txt")
    assert np.array_equal(GridField.load(tmp_path / "f.txt").values, f.values)
    with pytest.raises(ValueError):
        GridField(np.zeros((12, 12)))


def test_biharmonic_laplacian_is_green(rng):
    h = 1e-3
    for x in rng.uniform(0.1, 0.4, size=(5, 2)):
        lap = _fd_laplacian(lambda p: float(BIHARMONIC.value(p)), x, h)
        assert abs(lap - green(x)) < 1e-5


def test_biharmonic_layer_sums_match_pairwise(disk):
    x, nu, ds = disk.nodes, disk.stack("normal"), disk.stack("ds")
    d = x[:, None, :] - x[None, :, :]
    phi = BIHARMONIC.value(d)
    grad = BIHARMONIC.gradient(d + np.eye(len(x))[:, :, None] * 0.25)
    grad[np.arange(len(x)), np.arange(len(x))] = 0.0  # grad Phi(0) = 0 by symmetry
    want = np.einsum("ijk,jk,j->i", grad, nu, ds)
    np.testing.assert_allclose(BIHARMONIC.layer_potential(x, nu, ds), want, atol=1e-14)
    energy = float(np.einsum("ij,ij,i,j->", phi, nu @ nu.T, ds, ds))
    assert abs(BIHARMONIC.layer_energy(x, nu, ds) - energy) < 1e-12


def test_gram_matches_fourier_energy():
    """Boundary double integral of G against the Fourier energy sum |phi_hat(k)|^2 / 4 pi^2 |k|^2."""
    b = circle(0.2, n=128, modes=[(3, 0.01)])
    c = b.components[0]
    th = 2 * np.pi * np.arange(128) / 128
    ds = b.stack("ds")
    phi = np.cos(2 * th) + 0.3 * np.sin(5 * th)
    phi -= np.sum(phi * ds) / np.sum(ds)
    gram = float(phi @ gram_matrix(b) @ phi)

    # the density must be a smooth measure on the curve: point masses at the
    # nodes would alias for |k| beyond the node spacing
    n = 128 * 16
    u = 2 * np.pi * np.arange(n) / n
    x = c.trig(u)
    weight = resample(phi, n) * np.linalg.norm(c.trig(u, 1), axis=1) * (2 * np.pi / n)

    def fourier(kmax):
        k = np.arange(-kmax, kmax + 1)
        e1 = np.exp(-2j * np.pi * np.outer(k, x[:, 0]))
        e2 = np.exp(-2j * np.pi * np.outer(k, x[:, 1]))
        coef = (e1 * weight) @ e2.T
        kk = (k[:, None] ** 2 + k[None, :] ** 2).astype(float)
        kk[kmax, kmax] = np.inf
        return float(np.sum(np.abs(coef) ** 2 / (4 * np.pi**2 * kk)))

    # tail of the series decays like 1/K for a density carried by a curve
    ext = 2 * fourier(256) - fourier(128)
    assert abs(gram - ext) <= 0.01 * abs(ext)


def test_single_layer_constant_density(disk):
    # int_circle G(x, y) dmu(y) is constant on a centred circle by symmetry of the torus only approximately;
    # the plane part -r log r is exact, so compare with the smooth Kress quadrature at two resolutions
    coarse = single_layer(circle(0.2, n=64)).sum(axis=1)
    fine = single_layer(disk).sum(axis=1)
    assert abs(coarse.mean() - fine.mean()) < 1e-10

import json

import numpy as np
import pytest

from flowlab.functional import advect
from flowlab.geometry import circle, lamella
from flowlab.stability import (
    assemble_pi,
    constrained_spectrum,
    dirichlet_matrix,
    divfree_normal_field,
    second_variation_check,
    translation_frame,
)

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def disk_form(disk):
    return assemble_pi(disk, 0.0)


@pytest.fixture(scope="module")
def stripe_form(stripe):
    return assemble_pi(stripe, 0.0)


def _theta(n):
    return TWO_PI * np.arange(n) / n


def test_circle_rayleigh_quotient(disk_form):
    phi = np.cos(2 * _theta(256))
    assert disk_form.rayleigh(phi) == pytest.approx(75.0, rel=1e-2)
    assert np.abs(disk_form.Q - disk_form.Q.T).max() <= 1e-10


def test_translation_degeneracy(disk_form):
    for t, n2 in zip(disk_form.translations.active_modes, disk_form.translations.norms2):
        assert abs(disk_form.value(t)) <= 1e-3 * n2


def test_stripe_rayleigh_quotient(stripe, stripe_form):
    phi = np.concatenate([np.cos(TWO_PI * stripe.components[0].nodes[:, 0]), np.zeros(128)])
    assert stripe_form.rayleigh(phi) == pytest.approx(4 * np.pi**2, rel=1e-2)


def test_translation_frame(disk, stripe):
    tf = translation_frame(disk)
    assert tf.active == (0, 1)
    np.testing.assert_allclose(tf.norms2, np.pi * 0.2, atol=1e-6)
    ds = disk.stack("ds")
    assert abs(np.sum(tf.modes[0] * tf.modes[1] * ds)) <= 1e-8
    lt = translation_frame(stripe)
    assert len(lt.active) == 1
    np.testing.assert_allclose(np.abs(lt.directions[0]), (0.0, 1.0), atol=1e-12)
    a = (stripe.stack("normal") * stripe.stack("ds")[:, None]).T @ stripe.stack("normal")
    rot = lt.directions @ a @ lt.directions.T
    assert abs(rot[0, 1]) <= 1e-10 and np.all(np.linalg.eigvalsh(a) >= -1e-14)


def test_circle_spectrum(disk_form):
    rep = constrained_spectrum(disk_form)
    np.testing.assert_allclose(rep.eigenvalues[:4], [75, 75, 200, 200], rtol=1e-2)
    assert rep.verdict == "strictly-stable"
    assert np.all(np.abs(rep.translation_values) <= 1e-3)
    assert rep.zero_modes == 2
    d = json.loads(rep.to_json())
    assert d["verdict"] == "strictly-stable" and d["n_nodes"] == 256


def test_circle_spectrum_converges():
    # the k = 2 eigenvalue approaches 75 as the curve is refined
    errs = [abs(constrained_spectrum(assemble_pi(circle(0.2, n=n), 0.0)).eigenvalues[0] - 75) for n in (32, 64)]
    assert errs[1] <= errs[0] + 1e-9
    assert errs[1] < 0.75


def test_stripe_spectrum(stripe_form):
    rep = constrained_spectrum(stripe_form)
    assert rep.min_eigenvalue == pytest.approx(4 * np.pi**2, rel=1e-2)
    assert rep.verdict == "strictly-stable"
    assert len(stripe_form.index_set) == 1


def test_small_disk_with_repulsion_is_unstable():
    # for a large nonlocal weight the round disk loses stability
    rep = constrained_spectrum(assemble_pi(circle(0.3, n=64), 200.0))
    assert rep.verdict == "unstable"


def test_dirichlet_forms_agree():
    b = circle(0.2, n=128)
    phi = np.cos(3 * _theta(128))
    spectral = phi @ dirichlet_matrix(b, "spectral") @ phi
    fd = phi @ dirichlet_matrix(b, "stencil") @ phi
    exact = 9 / 0.04 * np.pi * 0.2  # int phi_s^2 ds
    assert spectral == pytest.approx(exact, rel=1e-10)
    assert fd == pytest.approx(exact, rel=1e-2)


def test_divfree_boundary_values(bumpy):
    phi = np.cos(2 * _theta(128))
    phi -= np.sum(phi * bumpy.stack("ds")) / bumpy.length
    X = divfree_normal_field(bumpy, phi)
    xn = np.einsum("ij,ij->i", X(bumpy.nodes), bumpy.stack("normal"))
    np.testing.assert_allclose(xn, phi, atol=1e-10)


def test_divfree_divergence(bumpy, rng):
    phi = np.cos(2 * _theta(128)) + 0.5 * np.sin(3 * _theta(128))
    phi -= np.sum(phi * bumpy.stack("ds")) / bumpy.length
    X = divfree_normal_field(bumpy, phi)
    idx = rng.integers(0, 128, size=200)
    t = rng.uniform(-0.8, 0.8, size=200) * X.width
    pts = bumpy.nodes[idx] + t[:, None] * bumpy.stack("normal")[idx]
    h = 1e-5
    div = sum((X(pts + h * e)[:, i] - X(pts - h * e)[:, i]) / (2 * h) for i, e in enumerate(np.eye(2)))
    assert np.abs(div).max() <= 1e-5


def test_divfree_flow_preserves_volume(bumpy):
    phi = np.cos(2 * _theta(128))
    phi -= np.sum(phi * bumpy.stack("ds")) / bumpy.length
    X = divfree_normal_field(bumpy, phi)
    for t in (0.01, -0.01):
        moved = advect(bumpy, X, t, steps=8)
        assert abs(moved.volume - bumpy.volume) <= 1e-7


def test_divfree_rejects_nonzero_mean(bumpy):
    with pytest.raises(ValueError):
        divfree_normal_field(bumpy, np.ones(128))


def test_second_variation_circle(disk, disk_form):
    phi = np.cos(2 * _theta(256))
    fd, pi = second_variation_check(disk, 0.0, phi, qf=disk_form)
    assert abs(fd - pi) <= 1e-3 * abs(pi)
    assert pi == pytest.approx(75 * disk_form.mass(phi), rel=1e-2)


def test_second_variation_translation(disk, disk_form):
    t = disk_form.translations.active_modes[0]
    fd, pi = second_variation_check(disk, 0.0, t, qf=disk_form)
    assert abs(fd) <= 1e-4 and abs(pi) <= 1e-4


def test_second_variation_stripe_with_repulsion():
    b = lamella(0.5, n=64)
    x = b.components[0].nodes[:, 0]
    phi = np.concatenate([np.cos(TWO_PI * x), -np.cos(TWO_PI * b.components[1].nodes[:, 0])])
    fd, pi = second_variation_check(b, 1.0, phi)
    assert abs(fd - pi) <= 1e-2 * abs(pi)

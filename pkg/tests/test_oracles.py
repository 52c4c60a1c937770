import json

import numpy as np
import pytest

from flowlab.flows import ms_data, ms_velocity
from flowlab.geometry import circle, lamella
from flowlab.oracles import (
    OracleResult,
    dense_spectrum_oracle,
    stripe_closed_form,
    stripe_potential_oracle,
    transmission_grid_oracle,
    transmission_jump,
    turning_number_oracle,
    write_manifest,
)
from flowlab.stability import assemble_pi, constrained_spectrum

# frozen oracle outputs (Richardson-extrapolated, N = 64 / 128 polygons)
DENSE_CIRCLE_GAMMA1 = [74.690237, 74.706371, 199.56412, 199.56412]
DENSE_STRIPE_GAMMA1 = [39.060574, 39.060574, 39.170823, 39.170823]
# mode-3 coefficient of the jump for r = 0.35 + 0.02 cos(3 theta), N = 128, grid M = 512
TRANSMISSION_MODE3 = {0.0: -22.437571, 0.1: -22.424051}


def test_stripe_half_width():
    v = stripe_closed_form(0.5)
    assert v == pytest.approx({"v0": 1 / 32, "v_on_boundary": 0.0, "dnu_v": -0.25, "nonlocal_energy": 1 / 48})


@pytest.mark.parametrize("width", [0.5, 1 / 3, 0.8])
def test_stripe_oracle_resolution_study(width):
    res = stripe_potential_oracle(width)
    for key, err in res.error.items():
        # the one-sided slope is first order when the interface falls between nodes
        tol = 5e-4 if key == "dnu_v" else 1e-4
        assert err["closed_form_vs_fd"] <= tol
        assert err["richardson"] <= tol
    assert res.resolution == (1024, 2048)


def test_stripe_thin_limit():
    v = stripe_closed_form(1e-9)
    assert max(abs(x) for x in v.values()) < 1e-9


@pytest.mark.parametrize("width", [0.2, 0.5, 0.7])
def test_stripe_complement_symmetry(width):
    # E^c is a stripe of width 1 - w with u -> -u and v -> -v
    a, b = stripe_closed_form(width), stripe_closed_form(1 - width)
    assert b["v_on_boundary"] == pytest.approx(-a["v_on_boundary"], abs=1e-15)
    assert b["dnu_v"] == pytest.approx(a["dnu_v"], abs=1e-15)
    assert b["nonlocal_energy"] == pytest.approx(a["nonlocal_energy"], abs=1e-15)
    # v at the complement's centre is -v on the far midline of E: outside E, -v'' = -2 w
    s_far = (1 - width) / 2
    far = a["v_on_boundary"] + a["dnu_v"] * s_far + width * s_far**2
    assert b["v0"] == pytest.approx(-far, abs=1e-15)
    # inside E, -v'' = 2 - 2 w
    assert a["v0"] - (1 - width) * (width / 2) ** 2 == pytest.approx(a["v_on_boundary"], abs=1e-15)


def test_stripe_oracle_rejects_bad_width():
    with pytest.raises(ValueError):
        stripe_potential_oracle(1.0)


def test_transmission_constant_data():
    b = circle(0.3, n=64, modes=[(2, 0.02)])
    jump = transmission_jump(b, np.full(64, 2.5), 256)["jump"]
    assert np.abs(jump).max() <= 1e-3


def test_transmission_cos2_structure():
    b = circle(0.2, n=64)
    th = 2 * np.pi * np.arange(64) / 64
    g = np.cos(2 * th)
    jumps = [transmission_jump(b, g, m)["jump"] for m in (256, 512)]
    for j in jumps:
        # jump = -(2 k / r) cos(k theta) for the planar problem, k = 2
        assert np.corrcoef(j, g)[0, 1] < -0.9999
        assert 2 * np.mean(j * g) == pytest.approx(-20.0, rel=0.02)
        assert np.count_nonzero(np.diff(np.sign(np.append(j, j[0])))) == 4
        np.testing.assert_allclose(j[:32], j[32:], atol=1e-3 * np.abs(j).max())
    assert np.abs(jumps[0] - jumps[1]).max() <= 1e-3 * np.abs(jumps[1]).max()


def test_transmission_rejects_coarse_grid():
    b = circle(0.3, n=64)
    with pytest.raises(ValueError):
        transmission_grid_oracle(b, np.ones(64), 128)


@pytest.mark.parametrize("gamma", [0.0, 0.1])
def test_transmission_frozen_mode(gamma):
    b = circle(0.35, n=128, modes=[(3, 0.02)])
    th = 2 * np.pi * np.arange(128) / 128
    v, _ = ms_velocity(b, gamma)
    assert 2 * np.mean(v * np.cos(3 * th)) == pytest.approx(TRANSMISSION_MODE3[gamma], rel=1e-4)


def test_dense_oracle_circle_ladder():
    res = dense_spectrum_oracle(circle(0.2, n=128), 0.0, 64, count=4)
    np.testing.assert_allclose(res.values["eigenvalues"], [75, 75, 200, 200], rtol=0.02)
    assert res.resolution == (32, 64)
    with pytest.raises(ValueError):
        dense_spectrum_oracle(circle(0.2, n=256), 0.0, 256)


def test_dense_oracle_gamma_continuity():
    b = circle(0.2, n=64)
    a = dense_spectrum_oracle(b, 0.0, 64, count=4).values["eigenvalues"]
    c = dense_spectrum_oracle(b, 1e-3, 64, count=4).values["eigenvalues"]
    assert np.abs(np.subtract(a, c)).max() <= 0.1


@pytest.mark.parametrize(
    "b, frozen", [(circle(0.2, n=128), DENSE_CIRCLE_GAMMA1), (lamella(0.5, 128), DENSE_STRIPE_GAMMA1)]
)
def test_constrained_spectrum_matches_frozen_dense(b, frozen):
    eig = constrained_spectrum(assemble_pi(b, 1.0)).eigenvalues[:4]
    np.testing.assert_allclose(eig, frozen, rtol=1e-3)


def test_turning_number_oracle():
    c = circle(0.2, n=64, modes=[(5, 0.03)]).components[0]
    assert turning_number_oracle(c) == pytest.approx(1.0, abs=1e-12)
    assert turning_number_oracle(c.reversed()) == pytest.approx(-1.0, abs=1e-12)


def test_manifest(tmp_path):
    res = [stripe_potential_oracle(0.5, 256), OracleResult("x", {"a": 1.0}, "m", (1, 2), {"e": 0.0})]
    write_manifest(res, tmp_path / "oracles.json")
    data = json.loads((tmp_path / "oracles.json").read_text())
    assert data[1] == {"name": "x", "values": {"a": 1.0}, "method": "m", "resolution": [1, 2], "error": {"e": 0.0}}
    assert data[0]["values"]["nonlocal_energy"] == pytest.approx(1 / 48)

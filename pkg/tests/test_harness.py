import json

import numpy as np
import pytest

from flowlab.cli import main
from flowlab.errors import BadValue, InvalidRegion, MissingKey
from flowlab.geometry import BoundarySet, circle, lamella, write_snapshot
from flowlab.harness import (
    ExperimentConfig,
    analyze_stability,
    build_fixture,
    emit_svg,
    parse_config,
    parse_text,
    run_experiment,
    sweep,
    worker_count,
)

QUICK_SDF = "fixture=circle r=0.35 modes=3:0.02 N=64 M=128 flow=sdf t_end=1e-5 sample_every=5 snapshot_every=50\n"


def test_minimal_config_defaults():
    cfg = parse_text("fixture=circle r=0.2 flow=sdf")
    assert (cfg.n_nodes, cfg.M, cfg.gamma) == (256, 512, 0.0)
    assert cfg.flow == "sdf" and cfg.center == (0.5, 0.5)


def test_config_layout_variants():
    text = """
    # a comment
    [fixture]
    fixture = circle   r=0.2  center=0.3,0.4
    modes=3:0.01,5:0.002:0.5   # two modes
    flow=mmsf gamma=0.1
    """
    cfg = parse_text(text)
    assert cfg.center == (0.3, 0.4) and cfg.gamma == 0.1
    assert cfg.modes == ((3, 0.01), (5, 0.002, 0.5))


@pytest.mark.parametrize(
    "text, word",
    [
        ("fixture=circle r=0.2 foo=1", "foo"),
        ("fixture=circle r=0.2 gamma=-1", "gamma"),
        ("fixture=circle r=0.2 M=500", "M"),
        ("fixture=circle r=0.7", "r"),
        ("fixture=blob", "fixture"),
        ("fixture=circle r=0.2 r=0.3", "r"),
        ("fixture=circle r=0.2 flow=heat", "flow"),
    ],
)
def test_bad_values_name_the_key(text, word):
    with pytest.raises(BadValue, match=word):
        parse_text(text)


def test_missing_keys():
    for text in ("flow=sdf", "fixture=circle", "fixture=two-circles r=0.1", "fixture=from-file"):
        with pytest.raises(MissingKey):
            parse_text(text)


def test_random_modes_use_seed():
    a = parse_text("fixture=circle r=0.3 modes=3:0.01:random seed=4")
    b = parse_text("fixture=circle r=0.3 modes=3:0.01:random seed=4")
    c = parse_text("fixture=circle r=0.3 modes=3:0.01:random seed=5")
    assert a.modes == b.modes != c.modes


def test_run_bundle(tmp_path):
    cfg = parse_text(QUICK_SDF)
    bundle = run_experiment(cfg, tmp_path / "out")
    st = json.loads(bundle.status_json.read_text())
    assert bundle.exit_code == 0 and st["status"] == "ok" and st["reason"] == "t_end"
    assert st["volume_drift"] <= 1e-4 and st["energy_monotone"]
    header = bundle.run_csv.read_text().splitlines()[0]
    assert header == "t,volume,area,nonlocal,J,dissipation,alpha_to_reference,D_to_reference,min_ds,dt"
    assert (tmp_path / "out" / "diagnostics.csv").exists()
    snaps = sorted(p.name for p in (tmp_path / "out" / "snapshots").glob("*.curve"))
    assert snaps[0] == "step_0000000.curve"
    steps = int(st["steps"])
    # every 5th step, the initial state, and the final state when it falls between samples
    assert len(bundle.record) == steps // 5 + 1 + (steps % 5 != 0)


def test_stripe_mmsf_is_stationary(tmp_path):
    cfg = parse_text("fixture=lamella width=0.5 N=64 flow=mmsf gamma=1 max_steps=20 t_end=1 sample_every=5")
    bundle = run_experiment(cfg, tmp_path)
    assert bundle.status["status"] == "ok"
    assert bundle.status["max_speed"] <= 1e-4


def test_from_file_round_trip(tmp_path):
    b = circle(0.25, center=(0.1, 0.2), n=96, modes=[(2, 0.01)])
    write_snapshot(b, tmp_path / "in.curve")
    cfg = parse_text(f"fixture=from-file path={tmp_path / 'in.curve'}")
    back = build_fixture(cfg)
    assert back.n_nodes == 96
    assert abs(back.volume - b.volume) <= 1e-10 and abs(back.length - b.length) <= 1e-10


def test_overlapping_fixture_rejected(tmp_path):
    text = "fixture=two-circles r=0.2 center=0.4,0.5 center2=0.6,0.5 N=64"
    with pytest.raises(InvalidRegion):
        build_fixture(parse_text(text))
    bundle = run_experiment(parse_text(text), tmp_path)
    assert bundle.exit_code == 1 and "intersects" in bundle.status["reason"]


def test_topology_break_aborts(tmp_path):
    # a step far beyond the stability limit tangles the curve
    text = "fixture=circle r=0.35 modes=3:0.05 N=64 dt=2e-5 resample_every=1 max_steps=5 t_end=1"
    bundle = run_experiment(parse_text(text), tmp_path)
    st = json.loads(bundle.status_json.read_text())
    assert bundle.exit_code == 2
    assert st["status"] == "aborted" and st["reason"].startswith("TopologyBreak")
    assert (tmp_path / "snapshots" / "last_valid.curve").exists()


def test_deterministic(tmp_path):
    cfg = parse_text(QUICK_SDF.replace("modes=3:0.02", "modes=3:0.02:random seed=7"))
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a.run_csv.read_bytes() == b.run_csv.read_bytes()
    for p in (tmp_path / "a" / "snapshots").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / "snapshots" / p.name).read_bytes()


def test_svg(tmp_path):
    emit_svg(circle(0.2, n=64), tmp_path / "c.svg")
    text = (tmp_path / "c.svg").read_text()
    assert text.count("<path ") == 1 and "<polyline" not in text
    emit_svg(lamella(0.5, 64), tmp_path / "l.svg")
    text = (tmp_path / "l.svg").read_text()
    assert "<path " not in text and text.count("<polyline") >= 2
    # a circle across the seam also shows its wrapped copies
    emit_svg(circle(0.2, center=(0.05, 0.5), n=64), tmp_path / "w.svg")
    assert (tmp_path / "w.svg").read_text().count("<path ") == 2
    empty = object.__new__(BoundarySet)
    object.__setattr__(empty, "components", ())
    with pytest.raises(InvalidRegion):
        emit_svg(empty, tmp_path / "e.svg")


def test_analyze_stability(tmp_path):
    res = analyze_stability(parse_text("fixture=circle r=0.2 N=256"), tmp_path / "s.json")
    assert res["verdict"] == "strictly-stable"
    assert res["eigenvalues"][0] == pytest.approx(75, rel=1e-2)
    assert json.loads((tmp_path / "s.json").read_text())["verdict"] == "strictly-stable"
    assert analyze_stability(parse_text("fixture=lamella N=128"))["verdict"] == "strictly-stable"
    gated = analyze_stability(parse_text("fixture=circle r=0.2 N=128 modes=2:0.03"))
    assert gated["verdict"] is None and gated["warnings"]


def test_worker_count(monkeypatch):
    monkeypatch.setenv("FLOWLAB_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("FLOWLAB_THREADS", "zero")
    with pytest.raises(BadValue):
        worker_count()
    monkeypatch.delenv("FLOWLAB_THREADS")
    assert worker_count() >= 1


def test_sweep(tmp_path):
    (tmp_path / "a.cfg").write_text(QUICK_SDF)
    (tmp_path / "b.cfg").write_text(QUICK_SDF.replace("r=0.35", "r=0.3"))
    (tmp_path / "c.cfg").write_text("fixture=circle gamma=1")
    res = sweep(tmp_path, tmp_path / "runs", workers=2)
    assert [r["status"] for r in res] == ["ok", "ok", "error"]
    assert json.loads((tmp_path / "runs" / "sweep.json").read_text())["workers"] == 2


def test_cli(tmp_path, capsys):
    cfg = tmp_path / "q.cfg"
    cfg.write_text(QUICK_SDF)
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 0
    assert "ok: t_end" in capsys.readouterr().out
    assert main(["stability", str(cfg), "-o", str(tmp_path / "st.json")]) == 0
    (tmp_path / "bad.cfg").write_text("fixture=circle r=0.2 foo=1\n")
    assert main(["run", str(tmp_path / "bad.cfg")]) == 1
    assert "foo" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "fixture" in capsys.readouterr().out


def test_parse_config_file(tmp_path):
    (tmp_path / "x.cfg").write_text(QUICK_SDF)
    cfg = parse_config(tmp_path / "x.cfg")
    assert cfg.output_dir().as_posix() == "runs/x"
    assert isinstance(cfg, ExperimentConfig)

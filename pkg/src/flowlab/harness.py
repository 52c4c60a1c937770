"""Experiment configuration, run orchestration and report files."""

from __future__ import annotations

import json
import math
import os
import re
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import flows
from .errors import BadValue, FitDomainError, FlowlabError, InvalidRegion, MissingKey, NotAGraph, TopologyBreak
from .functional import boundary_trace, nonlocal_energy
from .geometry import BoundarySet, check_simple, circle, lamella, normal_graph, read_snapshot, union, write_snapshot
from .metrics import (
    RunRecord,
    alpha_distance,
    best_translation,
    d_distance,
    graph_norms,
    grid_tolerance,
    mode_amplitudes,
)
from .stability import assemble_pi, constrained_spectrum

FIXTURES = ("circle", "lamella", "two-circles", "from-file")
FIT_FIELDS = ("mode", "psi_L2", "alpha_to_reference", "D_to_reference")


@dataclass(frozen=True)
class ExperimentConfig:
    fixture: str
    r: float | None = None
    r2: float | None = None
    center: tuple = (0.5, 0.5)
    center2: tuple | None = None
    N: int | None = None  # 256 for generated fixtures; a file keeps its own count
    modes: tuple = ()
    width: float = 0.5
    path: str | None = None
    flow: str = "sdf"
    gamma: float = 0.0
    M: int = 512
    c_dt: float | None = None
    dt: float | None = None
    t_end: float = 1e-3
    max_steps: int | None = None
    alpha_threshold: float | None = None  # negative means "twice the grid tolerance"
    dissipation_threshold: float | None = None
    sample_every: int = 10
    snapshot_every: int = 1000
    resample_every: int = 10
    volume_correction: bool = False
    output: str | None = None
    svg: bool = False
    fit_field: str = "mode"
    burn_in: float = 0.2
    seed: int = 0
    defect_tol: float = 1e-3
    source: str | None = None

    def as_dict(self) -> dict:
        out = asdict(self)
        out["modes"] = [list(m) for m in self.modes]
        return out

    @property
    def n_nodes(self) -> int:
        return 256 if self.N is None else self.N

    def output_dir(self) -> Path:
        if self.output:
            return Path(self.output)
        stem = Path(self.source).stem if self.source else "run"
        return Path("runs") / stem


# ---------------------------------------------------------------------------
# parsing


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError("not an integer")
    return int(f)


def _bool(v):
    s = v.lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _pair(v):
    parts = [float(p) for p in v.replace(";", ",").split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return tuple(parts)


def _modes(v, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for tok in v.split(","):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.split(":")
        if len(parts) not in (2, 3):
            raise ValueError("modes are k:amplitude[:phase]")
        k = _int(parts[0])
        if k < 1:
            raise ValueError("mode numbers start at 1")
        a = float(parts[1])
        if len(parts) == 3:
            ph = float(rng.uniform(0, 2 * math.pi)) if parts[2] == "random" else float(parts[2])
            out.append((k, a, ph))
        else:
            out.append((k, a))
    return tuple(out)


def _str(v):
    return v.strip().strip('"').strip("'")


_PARSERS = {
    "fixture": _str,
    "r": _float,
    "r2": _float,
    "center": _pair,
    "center2": _pair,
    "N": _int,
    "modes": _str,
    "width": _float,
    "path": _str,
    "flow": _str,
    "gamma": _float,
    "M": _int,
    "c_dt": _float,
    "dt": _float,
    "t_end": _float,
    "max_steps": _int,
    "alpha_threshold": _str,
    "dissipation_threshold": _float,
    "sample_every": _int,
    "snapshot_every": _int,
    "resample_every": _int,
    "volume_correction": _bool,
    "output": _str,
    "svg": _bool,
    "fit_field": _str,
    "burn_in": _float,
    "seed": _int,
    "defect_tol": _float,
}

DEFAULTS_HELP = """\
Config files hold key=value pairs, one or more per line; '#' starts a comment.

  fixture            circle | lamella | two-circles | from-file   (required)
  r, r2              circle radii in (0, 0.5)                       (r required for circles)
  center, center2    x,y of the circle centres                      (0.5,0.5; center2 required for two-circles)
  N                  nodes per component, >= 32                     (256)
  modes              normal perturbation k:amp[:phase|random],...   (none)
  width              lamella width in (0, 1)                        (0.5)
  path               torus-curve v1 file for from-file             (required for from-file)
  flow               sdf | mmsf                                     (sdf)
  gamma              nonlocal weight, >= 0                          (0)
  M                  grid size, power of two in [16, 4096]          (512)
  c_dt, dt           step-size factor in (0, 1] or a fixed step     (0.05 sdf, 0.02 mmsf)
  t_end, max_steps   stop time and step cap                         (1e-3, none)
  alpha_threshold    stop once alpha falls below; 'auto' = 2x grid tolerance
  dissipation_threshold  stop once the dissipation falls below
  sample_every       steps between diagnostic rows                  (10)
  snapshot_every     steps between curve snapshots                  (1000)
  resample_every     steps between equal-arclength resampling       (10)
  volume_correction  true | false                                   (false)
  output             bundle directory                               (runs/<config name>)
  svg                write an SVG next to every snapshot            (false)
  fit_field          mode | psi_L2 | alpha_to_reference | D_to_reference  (mode)
  burn_in            fraction of samples skipped by the decay fit  (0.2)
  seed               seed for random perturbation phases           (0)
  defect_tol         criticality defect above which no stability verdict is given  (1e-3)
"""


_PAIR = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\"[^\"]*\"|'[^']*'|[^\s\"']+)\s*")


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        pos = 0
        while pos < len(line):
            mt = _PAIR.match(line, pos)
            if mt is None:
                raise BadValue(f"line {lineno}: expected key=value, got {line[pos:]!r}")
            yield lineno, mt.group(1), mt.group(2)
            pos = mt.end()


def parse_text(text: str, source: str | None = None) -> ExperimentConfig:
    raw, lines = {}, {}
    for lineno, key, value in _tokens(text):
        if key not in _PARSERS:
            raise BadValue(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise BadValue(f"line {lineno}: duplicate key {key!r}")
        try:
            raw[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise BadValue(f"line {lineno}: bad value for {key}: {value!r} ({exc})") from None
        lines[key] = lineno

    def bad(key, msg):
        where = f"line {lines[key]}: " if key in lines else ""
        raise BadValue(f"{where}{key}: {msg}")

    if "fixture" not in raw:
        raise MissingKey("missing required key 'fixture'")
    fixture = raw["fixture"]
    if fixture not in FIXTURES:
        bad("fixture", f"must be one of {', '.join(FIXTURES)}")
    if fixture in ("circle", "two-circles") and "r" not in raw:
        raise MissingKey(f"fixture {fixture} needs key 'r'")
    if fixture == "two-circles" and "center2" not in raw:
        raise MissingKey("fixture two-circles needs key 'center2'")
    if fixture == "from-file" and "path" not in raw:
        raise MissingKey("fixture from-file needs key 'path'")
    for key in ("r", "r2"):
        if key in raw and not 0 < raw[key] < 0.5:
            bad(key, "radius must lie in (0, 0.5)")
    if "width" in raw and not 0 < raw["width"] < 1:
        bad("width", "must lie in (0, 1)")
    if "N" in raw and raw["N"] < 32:
        bad("N", "need at least 32 nodes")
    m = raw.get("M", 512)
    if m < 16 or m > 4096 or m & (m - 1):
        bad("M", "must be a power of two in [16, 4096]")
    if "flow" in raw:
        raw["flow"] = raw["flow"].lower()
        if raw["flow"] not in (flows.SDF, flows.MMSF):
            bad("flow", "must be sdf or mmsf")
    if raw.get("gamma", 0.0) < 0 or not math.isfinite(raw.get("gamma", 0.0)):
        bad("gamma", "gamma must be >= 0")
    if "c_dt" in raw and not 0 < raw["c_dt"] <= 1:
        bad("c_dt", "must lie in (0, 1]")
    for key in ("dt", "t_end"):
        if key in raw and not raw[key] > 0:
            bad(key, "must be positive")
    for key in ("max_steps", "sample_every", "snapshot_every", "resample_every"):
        if key in raw and raw[key] < 1:
            bad(key, "must be a positive integer")
    if "dissipation_threshold" in raw and raw["dissipation_threshold"] < 0:
        bad("dissipation_threshold", "must be >= 0")
    if "alpha_threshold" in raw:
        v = raw["alpha_threshold"]
        if v == "auto":
            raw["alpha_threshold"] = -1.0
        else:
            try:
                raw["alpha_threshold"] = float(v)
            except ValueError:
                bad("alpha_threshold", "must be a number or 'auto'")
            if raw["alpha_threshold"] < 0:
                bad("alpha_threshold", "must be >= 0")
    if "burn_in" in raw and not 0 <= raw["burn_in"] < 1:
        bad("burn_in", "must lie in [0, 1)")
    if "defect_tol" in raw and not raw["defect_tol"] > 0:
        bad("defect_tol", "must be positive")
    if "fit_field" in raw and raw["fit_field"] not in FIT_FIELDS:
        bad("fit_field", f"must be one of {', '.join(FIT_FIELDS)}")
    if "modes" in raw:
        try:
            raw["modes"] = _modes(raw["modes"], raw.get("seed", 0))
        except ValueError as exc:
            bad("modes", str(exc))
        r = raw.get("r")
        if r is not None and sum(abs(md[1]) for md in raw["modes"]) >= 0.5 * r:
            bad("modes", "perturbation too large for the radius")
    if fixture == "from-file" and source and not os.path.isabs(raw["path"]):
        raw["path"] = str(Path(source).parent / raw["path"])
    return ExperimentConfig(source=source, **raw)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_text(path.read_text(), source=str(path))


# ---------------------------------------------------------------------------
# fixtures


def build_fixture(cfg: ExperimentConfig) -> BoundarySet:
    n = cfg.n_nodes
    if cfg.fixture == "circle":
        b = circle(cfg.r, cfg.center, n, cfg.modes)
    elif cfg.fixture == "lamella":
        b = lamella(cfg.width, n, center=cfg.center[1])
    elif cfg.fixture == "two-circles":
        b = union(circle(cfg.r, cfg.center, n, cfg.modes), circle(cfg.r2 or cfg.r, cfg.center2, n))
    else:
        b = read_snapshot(cfg.path)
        b = b if cfg.N is None else b.resampled(cfg.N)
    if not check_simple(b):
        raise InvalidRegion(f"{cfg.fixture} fixture intersects itself")
    return b


def reference_set(cfg: ExperimentConfig, b0: BoundarySet) -> BoundarySet:
    """Unperturbed set with the initial volume, against which alpha and D are measured."""
    n = cfg.n_nodes
    if cfg.fixture == "circle":
        return circle(math.sqrt(b0.volume / math.pi), cfg.center, n)
    if cfg.fixture == "lamella":
        return lamella(b0.volume, n, center=cfg.center[1])
    if cfg.fixture == "two-circles":
        return union(circle(cfg.r, cfg.center, n), circle(cfg.r2 or cfg.r, cfg.center2, n))
    return b0


def flow_config(cfg: ExperimentConfig, b_nodes: int | None = None) -> flows.FlowConfig:
    b_nodes = b_nodes or cfg.n_nodes
    return flows.FlowConfig(
        kind=cfg.flow,
        gamma=cfg.gamma,
        n=b_nodes,
        c_dt=cfg.c_dt,
        dt=cfg.dt,
        t_end=cfg.t_end,
        max_steps=cfg.max_steps,
        resample_every=cfg.resample_every,
        volume_correction=cfg.volume_correction,
    )


# ---------------------------------------------------------------------------
# SVG


def emit_svg(b: BoundarySet, path, size: int = 512) -> None:
    """Fundamental domain with every component drawn, plus its copies shifted by lattice vectors."""
    if not b.components:
        raise InvalidRegion("nothing to draw")
    paths = []
    for c in b.components:
        pts = c.nodes - np.floor(c.nodes[0])
        closed = not np.any(c.winding)
        if not closed:
            pts = np.vstack([pts, pts[:1] + c.winding])
        shifts = [(a, e) for a in (-1, 0, 1) for e in (-1, 0, 1)]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        for s in shifts:
            q = pts + s
            if np.any(q.max(axis=0) < 0) or np.any(q.min(axis=0) > 1):
                continue
            if (lo + s >= 0).all() and (hi + s <= 1).all() and s != (0, 0) and closed:
                continue
            xy = " ".join(f"{x * size:.3f},{(1 - y) * size:.3f}" for x, y in q)
            if closed:
                paths.append(f'<path d="M {xy} Z" fill="none" stroke="black" stroke-width="1"/>')
            else:
                paths.append(f'<polyline points="{xy}" fill="none" stroke="black" stroke-width="1"/>')
    body = "\n".join(paths)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="none" stroke="gray"/>\n'
        f'<clipPath id="domain"><rect x="0" y="0" width="{size}" height="{size}"/></clipPath>\n'
        f'<g clip-path="url(#domain)">\n{body}\n</g>\n</svg>\n'
    )
    with open(path, "w") as fh:
        fh.write(svg)


# ---------------------------------------------------------------------------
# runs


@dataclass
class ReportBundle:
    directory: Path
    status: dict
    record: RunRecord
    exit_code: int = 0

    @property
    def run_csv(self) -> Path:
        return self.directory / "run.csv"

    @property
    def status_json(self) -> Path:
        return self.directory / "status.json"


def _write_json(path: Path, data: dict) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


class _Sampler:
    """Diagnostics of one state against the reference set."""

    def __init__(self, cfg: ExperimentConfig, ref: BoundarySet):
        self.cfg = cfg
        self.ref = ref
        self.mode = cfg.modes[0][0] if cfg.modes and len(ref.components) == 1 else None
        self.eta = np.zeros(2)

    def __call__(self, state: flows.FlowState) -> tuple[dict, dict, np.ndarray]:
        b = state.boundary
        cfg = self.cfg
        nl = nonlocal_energy(b, method="boundary")
        alpha, eta = alpha_distance(self.ref, b, cfg.M)
        extra = {"max_speed": float(np.abs(state.velocity).max())}
        moved = b.translated(eta)
        try:
            # refine the translation on the normal graph when one exists
            eta = best_translation(self.ref, b, eta)
            moved = b.translated(eta)
            dd = d_distance(self.ref, moved, cfg.M)
            if len(self.ref.components) == 1:
                psi = normal_graph(self.ref, moved)
                extra["psi_L2"] = graph_norms(self.ref, psi)["L2"]
                if self.mode is not None:
                    extra["mode"] = mode_amplitudes(psi, (self.mode,))[self.mode]
        except (NotAGraph, np.linalg.LinAlgError):
            dd = d_distance(self.ref, moved, cfg.M, method="grid")
        row = {
            "t": state.t,
            "volume": b.volume,
            "area": b.length,
            "nonlocal": nl,
            "J": b.length + cfg.gamma * nl,
            "dissipation": state.dissipation,
            "alpha_to_reference": alpha,
            "D_to_reference": dd,
            "min_ds": float(b.stack("ds").min()),
            "dt": 0.0,
        }
        return row, extra, eta


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ReportBundle:
    out = Path(out_dir) if out_dir is not None else cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    record = RunRecord()
    status = {"status": "running", "reason": None, "config": cfg.as_dict(), "steps": 0, "t": 0.0}
    bundle = ReportBundle(out, status, record)
    _write_json(bundle.status_json, status)
    diag_rows = []
    state = None
    try:
        b0 = build_fixture(cfg)
        fc = flow_config(cfg, min(c.n for c in b0.components))
        ref = reference_set(cfg, b0)
        sampler = _Sampler(cfg, ref)
        threshold = cfg.alpha_threshold
        if threshold is not None and threshold < 0:
            threshold = 2.0 * grid_tolerance(ref, cfg.M)
        status["alpha_threshold"] = threshold
        status["grid_tolerance"] = grid_tolerance(ref, cfg.M)

        def sample(st, dt):
            row, extra, eta = sampler(st)
            row["dt"] = dt
            record.append(row, eta, **extra)
            diag_rows.append((st.t, *eta, *(extra.get(k, float("nan")) for k in ("mode", "psi_L2", "max_speed"))))
            return row

        def snapshot(st):
            name = f"step_{st.steps:07d}"
            write_snapshot(st.boundary, snaps / f"{name}.curve")
            if cfg.svg:
                emit_svg(st.boundary, snaps / f"{name}.svg")

        state = flows.initial_state(b0, fc)
        sample(state, 0.0)
        snapshot(state)
        reason = "t_end"
        last_dt = 0.0
        while state.t < fc.t_end * (1 - 1e-12):
            if fc.max_steps is not None and state.steps >= fc.max_steps:
                reason = "max_steps"
                break
            last_dt = min(fc.time_step(state.boundary), fc.t_end - state.t)
            state = flows.step(state, fc, last_dt)
            if state.steps % cfg.snapshot_every == 0:
                snapshot(state)
            if state.steps % cfg.sample_every == 0:
                row = sample(state, last_dt)
                if threshold is not None and row["alpha_to_reference"] < threshold:
                    reason = "alpha_threshold"
                    break
                if cfg.dissipation_threshold is not None and row["dissipation"] < cfg.dissipation_threshold:
                    reason = "dissipation_threshold"
                    break
        if record.columns["t"][-1] < state.t:
            sample(state, last_dt)
        snapshot(state)
        status.update(status="ok", reason=reason)
    except TopologyBreak as exc:
        status.update(status="aborted", reason=f"TopologyBreak: {exc}")
        bundle.exit_code = 2
        if exc.state is not None:
            state = exc.state
            write_snapshot(state.boundary, snaps / "last_valid.curve")
    except (FlowlabError, ValueError, np.linalg.LinAlgError) as exc:
        status.update(status="error", reason=f"{type(exc).__name__}: {exc}")
        bundle.exit_code = 1
    except BaseException as exc:
        status.update(status="error", reason=f"{type(exc).__name__}: {exc}", traceback=traceback.format_exc())
        bundle.exit_code = 1
        _finish(bundle, state, diag_rows, cfg)
        raise
    _finish(bundle, state, diag_rows, cfg)
    return bundle


def _finish(bundle: ReportBundle, state, diag_rows, cfg: ExperimentConfig) -> None:
    record, status, out = bundle.record, bundle.status, bundle.directory
    if state is not None:
        status.update(steps=state.steps, t=state.t)
    if len(record):
        record.write_csv(out / "run.csv")
        with open(out / "diagnostics.csv", "w") as fh:
            fh.write("t,eta_x,eta_y,mode,psi_L2,max_speed\n")
            for r in diag_rows:
                fh.write(",".join(repr(float(v)) for v in r) + "\n")
        vol = record.series("volume")
        energy = record.series("J") if cfg.flow == flows.MMSF else record.series("area")
        status["volume_drift"] = float(np.abs(vol - vol[0]).max())
        status["energy_monotone"] = bool(np.all(np.diff(energy) <= 1e-12 * np.abs(energy[:-1])))
        status["final"] = {k: record.columns[k][-1] for k in record.columns}
        status["final"]["max_speed"] = float(record.extra.get("max_speed", [float("nan")])[-1])
        status["max_speed"] = float(np.max(record.extra.get("max_speed", [float("nan")])))
        name = cfg.fit_field if cfg.fit_field in record.extra or cfg.fit_field in record.columns else None
        if name is None and "psi_L2" in record.extra:
            name = "psi_L2"
        if name is not None:
            try:
                status["fit"] = record.fit_field(name, cfg.burn_in).as_dict()
            except FitDomainError as exc:
                status["fit"] = {"field": name, "error": str(exc)}
    _write_json(bundle.status_json, status)


# ---------------------------------------------------------------------------
# stability


def analyze_stability(cfg: ExperimentConfig, out_path=None) -> dict:
    """Criticality gate, then the constrained spectrum of the second variation."""
    b = build_fixture(cfg)
    tr = boundary_trace(b, cfg.gamma, cfg.M)
    scale = max(1.0, abs(tr.lam))
    result = {
        "fixture": cfg.fixture,
        "gamma": cfg.gamma,
        "criticality_defect": tr.defect,
        "lambda": tr.lam,
        "warnings": [],
    }
    if tr.defect > cfg.defect_tol * scale:
        result["warnings"].append(
            f"criticality defect {tr.defect:.3e} exceeds {cfg.defect_tol:g}; the set is not critical and no verdict is given"
        )
        result["verdict"] = None
    else:
        rep = constrained_spectrum(assemble_pi(b, cfg.gamma, cfg.M))
        result.update(rep.as_dict())
        result["eigenvalues"] = result["eigenvalues"][:32]
    if out_path is not None:
        _write_json(Path(out_path), result)
    return result


# ---------------------------------------------------------------------------
# sweeps


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("FLOWLAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise BadValue(f"FLOWLAB_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise BadValue("FLOWLAB_THREADS must be positive")
        return n
    return default or max(1, (os.cpu_count() or 1))


def _sweep_one(path: str, out_root: str) -> dict:
    try:
        cfg = parse_config(path)
        out = Path(out_root) / Path(path).stem
        bundle = run_experiment(cfg, out)
        return {"config": path, "output": str(out), "status": bundle.status["status"], "exit_code": bundle.exit_code}
    except FlowlabError as exc:
        return {"config": path, "status": "error", "reason": f"{type(exc).__name__}: {exc}", "exit_code": 1}


def sweep(directory, out_root=None, workers: int | None = None) -> list[dict]:
    """Run every *.cfg file of a directory, each into its own output directory."""
    directory = Path(directory)
    configs = sorted(str(p) for p in directory.glob("*.cfg"))
    out_root = str(out_root or directory / "runs")
    workers = workers or worker_count()
    if workers == 1 or len(configs) <= 1:
        results = [_sweep_one(p, out_root) for p in configs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            results = list(pool.map(_sweep_one, configs, [out_root] * len(configs)))
    Path(out_root).mkdir(parents=True, exist_ok=True)
    _write_json(Path(out_root) / "sweep.json", {"runs": results, "workers": workers})
    return results


__all__ = [
    "DEFAULTS_HELP",
    "ExperimentConfig",
    "ReportBundle",
    "analyze_stability",
    "build_fixture",
    "emit_svg",
    "parse_config",
    "parse_text",
    "reference_set",
    "run_experiment",
    "sweep",
    "worker_count",
]

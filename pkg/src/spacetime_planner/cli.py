"""Command-line entry points: plan, evaluate, sweep and compare.

Exit codes: 0 success, 2 invalid input, 3 no path, 4 non-finite loss.
Every artifact carries a header with the resolved config and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .harness import FollowerConfig, deceleration_proxy, dynamics_metrics, follow
from .losses import velocity_deltas
from .optimizer import NonFiniteLossError, PlannerConfig, PlanResult, plan, plan_replanning_baseline
from .scene import Scene
from .scenes import ALL_SCENES
from .trajectory import NoPathError, Trajectory, clustering_index, path_metrics, supersample

log = logging.getLogger("spacetime_planner")

EXIT_OK, EXIT_INVALID, EXIT_NO_PATH, EXIT_NONFINITE = 0, 2, 3, 4
STIFFNESS_ROWS = "1.0,0.7,0.5,0.2,0.1"
SWEEP_RATIOS = "0.01,0.1,1,10,100"


class InvalidInput(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    scene: str
    seed: int
    overrides: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def header(self) -> dict:
        return asdict(self)

    def comment_lines(self) -> list[str]:
        return [f"{k}: {json.dumps(v, sort_keys=True)}" for k, v in self.header().items()]


# -- input parsing ---------------------------------------------------------------

def parse_pose(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InvalidInput(f"pose must be 'x,y,theta', got {text!r}") from None
    if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
        raise InvalidInput(f"pose must be three finite numbers, got {text!r}")
    return vals


def parse_floats(text: str, what: str) -> list[float]:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise InvalidInput(f"{what} list is empty")
    try:
        vals = [float(s) for s in items]
    except ValueError:
        raise InvalidInput(f"{what} list must be numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise InvalidInput(f"{what} values must be finite")
    return vals


def parse_assignments(text: str) -> dict[str, str]:
    out = {}
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if "=" not in part:
            raise InvalidInput(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config_file(path: str) -> dict:
    """JSON object or flat ``key=value`` lines (``#`` comments allowed)."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InvalidInput(f"cannot read config {path}: {err}") from None
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as err:
            raise InvalidInput(f"bad JSON config: {err}") from None
        if not isinstance(data, dict):
            raise InvalidInput("config JSON must be an object")
        return data
    out = {}
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise InvalidInput(f"bad config line {ln!r}")
        k, v = ln.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_scene(spec: str) -> Scene:
    if spec in ALL_SCENES:
        return ALL_SCENES[spec]()
    path = Path(spec)
    if not path.is_file():
        raise InvalidInput(f"scene {spec!r} is neither a built-in name nor a file")
    try:
        return Scene.load(path)
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise InvalidInput(f"cannot load scene {spec}: {err}") from None


def resolve_config(args) -> tuple[PlannerConfig, dict]:
    overrides: dict = {}
    if getattr(args, "config", None):
        overrides.update(read_config_file(args.config))
    if getattr(args, "weights", None):
        for k, v in parse_assignments(args.weights).items():
            overrides[k if k.startswith("w_") else f"w_{k}"] = v
    if getattr(args, "iterations", None) is not None:
        overrides["iterations"] = args.iterations
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    try:
        cfg = PlannerConfig().updated(**overrides)
    except (KeyError, ValueError, TypeError) as err:
        raise InvalidInput(f"bad config: {err}") from None
    if cfg.iterations < 1 or cfg.n_segments < 2:
        raise InvalidInput("iterations must be >= 1 and n_segments >= 2")
    return cfg, overrides


def endpoints(args, scene: Scene):
    start = parse_pose(args.start) if args.start else scene.start
    goal = parse_pose(args.goal) if args.goal else scene.goal
    if start is None or goal is None:
        raise InvalidInput("scene has no default start/goal; pass --start and --goal")
    return start, goal


def prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise InvalidInput(f"cannot create output directory {out}: {err}") from None
    if not os.access(out, os.W_OK):
        raise InvalidInput(f"output directory {out} is not writable")
    return out


def write_json(path: Path, header: dict, body: dict) -> None:
    path.write_text(json.dumps({"header": header, **body}, indent=2, sort_keys=True) + "\n")


# -- reporting ---------------------------------------------------------------------

def trajectory_report(traj: Trajectory, scene: Scene, v_e: float, drift_times: np.ndarray | None = None) -> dict:
    """Deterministic metrics of a plan (no wall-clock values).

    Returned plans carry uniform stamps, so ``dt_variance`` is near zero; the
    ``drift_*`` entries describe the stamps the optimizer moved to before they
    were last reset.
    """
    pm = path_metrics(traj).as_dict()
    pm.pop("computation_time")
    dt = np.diff(traj.t)
    rep = dict(pm)
    if traj.N >= 1 and np.all(dt > 0):
        delta = velocity_deltas(traj, v_e)
        rep["max_abs_delta"] = float(np.max(np.abs(delta)))
        rep["max_rel_delta"] = float(np.max(np.abs(delta) / (v_e * dt)))
        rep["dt_variance"] = float(np.var(dt))
        rep["dt_cv"] = float(np.std(dt) / np.mean(dt))
        rep["deceleration_proxy"] = deceleration_proxy(traj)
    if drift_times is not None and len(drift_times) > 1:
        ddt = np.diff(drift_times)
        rep["drift_dt_variance"] = float(np.var(ddt))
        rep["drift_dt_cv"] = float(np.std(ddt) / np.mean(ddt))
    rep["clustering_index"] = clustering_index(traj)
    rep["duration"] = float(traj.t[-1])
    rep["collisions_supersampled"] = int(scene.collisions(supersample(traj, 10)).sum())
    return rep


def plan_outputs(result: PlanResult, scene: Scene, cfg: PlannerConfig, manifest: RunManifest,
                 out: Path, prefix: str = "") -> dict:
    header = manifest.header()
    metrics = trajectory_report(result.trajectory, scene, cfg.v_e, result.drift_times)
    metrics["best_iteration"] = result.best_iteration
    metrics["iterations"] = result.iterations
    result.trajectory.to_csv(out / f"{prefix}trajectory.csv", manifest.comment_lines())
    write_json(out / f"{prefix}metrics.json", header, {"metrics": metrics})
    write_json(out / f"{prefix}result.json", header, {
        "metrics": metrics,
        "loss_history": [float(v) for v in result.loss_history],
        "timing": {"planning_time": result.planning_time},
    })
    return metrics


# -- commands ------------------------------------------------------------------------

def cmd_plan(args) -> int:
    scene = load_scene(args.scene)
    start, goal = endpoints(args, scene)
    cfg, overrides = resolve_config(args)
    out = prepare_out(args.out)
    manifest = RunManifest("plan", args.scene, cfg.seed, overrides, cfg.as_dict())
    result = plan(scene, start, goal, cfg)
    metrics = plan_outputs(result, scene, cfg, manifest, out)
    (out / "plan.svg").write_text(plots.scene_svg(scene, {"plan": result.trajectory}, manifest.header()))
    print(json.dumps({k: metrics[k] for k in ("length", "cusps", "normalized_curvature",
                                              "collisions_supersampled")}, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        traj = Trajectory.from_csv(args.trajectory)
    except (OSError, ValueError) as err:
        raise InvalidInput(f"cannot read trajectory: {err}") from None
    if np.any(np.diff(traj.t) <= 0):
        raise InvalidInput("trajectory times must be strictly increasing")
    scene = load_scene(args.scene) if args.scene else None
    stiffness = parse_floats(args.stiffness, "stiffness")
    if not all(0 < s <= 1 for s in stiffness):
        raise InvalidInput("stiffness values must lie in (0, 1]")
    out = prepare_out(args.out)
    manifest = RunManifest("evaluate", args.scene or "", 0,
                           {"trajectory": args.trajectory, "stiffness": stiffness})
    table = {}
    errors, accels = {}, {}
    for s in stiffness:
        fc = FollowerConfig(stiffness=s)
        drive = follow(traj, fc, scene)
        m = dynamics_metrics(drive, traj)
        drive.to_csv(out / f"drive_s{s:g}.csv", manifest.comment_lines() + [f"follower: {json.dumps(asdict(fc))}"])
        table[f"{s:g}"] = m.as_dict()
        errors[f"s={s:g}"] = (drive.t, drive.error)
        accels[f"s={s:g}"] = (drive.t, drive.a_long)
    write_json(out / "metrics.json", manifest.header(), {"by_stiffness": table})
    (out / "error.svg").write_text(plots.line_chart(errors, manifest.header(), "t [s]", "following error [m]"))
    (out / "acceleration.svg").write_text(
        plots.line_chart(accels, manifest.header(), "t [s]", "longitudinal acceleration [m/s^2]"))
    for k, m in table.items():
        print(f"stiffness {k}: max error {m['max_error']:.3f} m, a_long [{m['min_a_long']:.2f}, {m['max_a_long']:.2f}]")
    return EXIT_OK


def sweep_weights(cfg: PlannerConfig, ratio: float) -> PlannerConfig:
    """Split ``w_time / w_vel = ratio`` around the geometric mean of the configured pair."""
    base = math.sqrt(cfg.w_time * cfg.w_vel)
    current = cfg.w_time / cfg.w_vel
    if math.isclose(ratio, current, rel_tol=1e-12):
        return cfg
    return cfg.updated(w_time=base * math.sqrt(ratio), w_vel=base / math.sqrt(ratio))


def _sweep_cell(job):
    scene, start, goal, cfg, ratio = job
    try:
        result = plan(scene, start, goal, cfg)
    except (NoPathError, NonFiniteLossError) as err:
        return ratio, cfg, None, f"{type(err).__name__}: {err}"
    return ratio, cfg, result, None


def run_sweep(scene: Scene, start, goal, cfg: PlannerConfig, ratios: list[float], workers: int = 1):
    jobs = [(scene, start, goal, sweep_weights(cfg, r).updated(seed=cfg.seed + i), r)
            for i, r in enumerate(ratios)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_cell, jobs))
    return [_sweep_cell(j) for j in jobs]


def cmd_sweep(args) -> int:
    scene = load_scene(args.scene)
    start, goal = endpoints(args, scene)
    cfg, overrides = resolve_config(args)
    ratios = parse_floats(args.grid, "grid")
    if not all(r > 0 for r in ratios):
        raise InvalidInput("weight ratios must be positive")
    out = prepare_out(args.out)
    manifest = RunManifest("sweep", args.scene, cfg.seed, {**overrides, "grid": ratios}, cfg.as_dict())
    workers = args.workers or os.cpu_count() or 1
    cells = []
    for i, (ratio, cell_cfg, result, error) in enumerate(run_sweep(scene, start, goal, cfg, ratios, workers)):
        cell = {"ratio": ratio, "seed": cell_cfg.seed, "w_time": cell_cfg.w_time, "w_vel": cell_cfg.w_vel}
        if result is None:
            cell["error"] = error
        else:
            cell.update(trajectory_report(result.trajectory, scene, cell_cfg.v_e, result.drift_times))
            cell_manifest = RunManifest("sweep", args.scene, cell_cfg.seed, overrides, cell_cfg.as_dict())
            result.trajectory.to_csv(out / f"cell{i}_trajectory.csv", cell_manifest.comment_lines())
        cells.append(cell)
    write_json(out / "sweep.json", manifest.header(), {"cells": cells})
    rows = {k: [c.get(k, float("nan")) for c in cells]
            for k in ("normalized_curvature", "max_abs_delta", "drift_dt_variance", "clustering_index")}
    (out / "sweep.svg").write_text(plots.heatmap_row([f"{r:g}" for r in ratios], rows, manifest.header()))
    for c in cells:
        if "error" in c:
            print(f"ratio {c['ratio']:g}: {c['error']}")
        else:
            print(f"ratio {c['ratio']:g}: clustering {c['clustering_index']:.3f}, dt var {c['drift_dt_variance']:.3g}, "
                  f"curvature {c['normalized_curvature']:.3f}")
    return EXIT_OK


def compare_runs(scene: Scene, start, goal, cfg: PlannerConfig) -> dict:
    """The time-aware plan, the replanning baseline and the obstacle-free reference on one scene."""
    main_run = plan(scene, start, goal, cfg)
    base = plan_replanning_baseline(scene, start, goal, cfg)
    ref = plan(scene.without_obstacles(), start, goal, cfg)
    rep = {
        "planner": trajectory_report(main_run.trajectory, scene, cfg.v_e, main_run.drift_times),
        "baseline": trajectory_report(base.trajectory, scene, cfg.v_e),
        "static_reference": trajectory_report(ref.trajectory, scene.without_obstacles(), cfg.v_e, ref.drift_times),
    }
    plan_proxy = rep["planner"].get("deceleration_proxy", 0.0)
    b = rep["baseline"]
    rep["baseline_flagged"] = bool(b["collisions_supersampled"] > 0
                                   or b.get("deceleration_proxy", 0.0) > 2.0 * plan_proxy)
    rep["planner_clean"] = rep["planner"]["collisions_supersampled"] == 0
    ref_curv = rep["static_reference"]["normalized_curvature"]
    rep["curvature_ratio"] = (rep["planner"]["normalized_curvature"] / ref_curv) if ref_curv > 0 else math.inf
    return {"report": rep, "results": {"planner": main_run, "baseline": base, "static_reference": ref}}


def cmd_compare(args) -> int:
    scene = load_scene(args.scene)
    start, goal = endpoints(args, scene)
    cfg, overrides = resolve_config(args)
    out = prepare_out(args.out)
    manifest = RunManifest("compare", args.scene, cfg.seed, overrides, cfg.as_dict())
    res = compare_runs(scene, start, goal, cfg)
    for name, r in res["results"].items():
        r.trajectory.to_csv(out / f"{name}_trajectory.csv", manifest.comment_lines())
    write_json(out / "compare.json", manifest.header(), res["report"])
    trajs = {k: v.trajectory for k, v in res["results"].items() if k != "static_reference"}
    (out / "compare.svg").write_text(plots.scene_svg(scene, trajs, manifest.header()))
    rep = res["report"]
    print(f"baseline flagged: {rep['baseline_flagged']}, planner clean: {rep['planner_clean']}, "
          f"curvature ratio: {rep['curvature_ratio']:.3f}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

def _planning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", required=True, help="built-in scene name or scene JSON file")
    p.add_argument("--start", help='start pose "x,y,theta" (default: from the scene)')
    p.add_argument("--goal", help='goal pose "x,y,theta" (default: from the scene)')
    p.add_argument("--config", help="JSON or key=value config file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--weights", help="loss weights, e.g. w_dist=50,w_col=300")
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", default="out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spacetime-planner",
                                     description="Neural-field trajectory planning among moving obstacles.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one trajectory")
    _planning_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", help="drive a planned trajectory with the follower")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--scene", help="scene for collision logging")
    p.add_argument("--stiffness", default=STIFFNESS_ROWS)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="sweep the time/velocity weight ratio")
    _planning_flags(p)
    p.add_argument("--grid", default=SWEEP_RATIOS, help="comma-separated w_time/w_vel ratios")
    p.add_argument("--workers", type=int, default=0, help="parallel plans (default: all cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="time-aware plan against the continuous-replanning baseline")
    _planning_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInput as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except NoPathError as err:
        print(f"no path: {err}", file=sys.stderr)
        return EXIT_NO_PATH
    except NonFiniteLossError as err:
        print(f"non-finite loss: {err}", file=sys.stderr)
        return EXIT_NONFINITE


if __name__ == "__main__":
    sys.exit(main())

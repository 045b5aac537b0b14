"""Acceptance criteria, one test per criterion, each at its stated tolerance and budget.

The terminal summary prints one PASS/FAIL line per criterion (see ``conftest.py``).
"""

import time

import numpy as np
import pytest

from spacetime_planner import cli
from spacetime_planner.field import NeuralField
from spacetime_planner.harness import FollowerConfig, follow
from spacetime_planner.losses import LossWeights
from spacetime_planner.optimizer import PlannerConfig, build_preconditioner, plan
from spacetime_planner.scenes import DESK_SCENES, crossing, empty, side_street_turn
from spacetime_planner.trajectory import path_metrics, straight_trajectory, supersample

from fixtures_harness import brake_and_hold
from gradcheck import check_configuration

pytestmark = pytest.mark.slow

SEEDS = range(5)
SWEEP_RATIOS = [0.01, 0.1, 1.0, 10.0, 100.0]
STIFFNESS = [1.0, 0.7, 0.5, 0.2, 0.1]


def test_criterion_1_gradients_match_finite_differences():
    field = NeuralField([0.0, 0.0, -np.pi, 0.0], [50.0, 50.0, np.pi, 10.0], seed=0)
    assert field.sizes == (4, 128, 128, 128, 1)
    t0 = time.perf_counter()
    worst = {}
    for seed in range(100):
        for k, v in check_configuration(seed, field).items():
            worst[k] = max(worst.get(k, 0.0), v)
    elapsed = time.perf_counter() - t0
    print(f"worst relative errors {worst}, {elapsed:.1f} s")
    assert max(worst.values()) < 1e-5, worst
    assert elapsed < 10.0


@pytest.fixture(scope="module")
def desk_runs():
    """Every desk scene planned under five seeds, with the total wall-clock time."""
    t0 = time.perf_counter()
    runs = {}
    for name, make in DESK_SCENES.items():
        scene = make()
        for seed in SEEDS:
            res = plan(scene, scene.start, scene.goal, PlannerConfig(seed=seed))
            traj = res.trajectory
            runs[name, seed] = {
                "cusps": path_metrics(traj).cusps,
                "collisions": int(scene.collisions(supersample(traj, 10)).sum()),
            }
    return runs, time.perf_counter() - t0


def test_criterion_2_cusp_free_plans(desk_runs):
    runs, elapsed = desk_runs
    print(f"{elapsed:.1f} s: {runs}")
    for name in DESK_SCENES:
        clean = sum(runs[name, s]["cusps"] == 0 for s in SEEDS)
        assert clean >= 4, f"{name}: {clean}/5 cusp-free"
    assert elapsed < 300.0


def test_criterion_3_collision_free_at_supersampling(desk_runs):
    runs, _ = desk_runs
    hits = {k: r["collisions"] for k, r in runs.items() if r["collisions"]}
    assert not hits, hits


def test_criterion_4_replanning_baseline_fails_where_the_planner_does_not():
    scene = side_street_turn()
    rep = cli.compare_runs(scene, scene.start, scene.goal, PlannerConfig(seed=0))["report"]
    print({k: rep[k] for k in ("baseline_flagged", "planner_clean", "curvature_ratio")})
    assert rep["baseline_flagged"]
    assert rep["planner_clean"]
    assert rep["curvature_ratio"] <= 1.3


def test_criterion_5_velocity_constraint_and_uniform_dt():
    scene = empty()
    cfg = PlannerConfig(seed=0)
    res = plan(scene, scene.start, scene.goal, cfg)
    rep = cli.trajectory_report(res.trajectory, scene, cfg.v_e)
    print(rep)
    assert rep["max_rel_delta"] <= 0.05
    assert rep["dt_cv"] < 0.05


@pytest.mark.parametrize("alpha", [0.1, 1.0, 5.0, 50.0])
def test_criterion_6_preconditioner_blocks(alpha):
    pre = build_preconditioner(40, LossWeights(), alpha)
    for H, M in ((pre.H_P, pre.M_P), (pre.H_T, pre.M_T)):
        oracle = np.linalg.solve(alpha * H + np.eye(len(H)), np.eye(len(H)))
        np.testing.assert_allclose(M, oracle, rtol=0, atol=1e-8)
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() > 0
    ident = build_preconditioner(40, LossWeights(), 0.0)
    np.testing.assert_array_equal(ident.M_P, np.eye(39))
    np.testing.assert_array_equal(ident.M_T, np.eye(40))


def test_criterion_7_weight_ratio_sensitivity():
    scene = crossing()
    t0 = time.perf_counter()
    cells = cli.run_sweep(scene, scene.start, scene.goal, PlannerConfig(seed=0), SWEEP_RATIOS)
    elapsed = time.perf_counter() - t0
    assert all(err is None for *_, err in cells)
    reports = [cli.trajectory_report(res.trajectory, scene, cfg.v_e, res.drift_times) for _, cfg, res, _ in cells]
    ci = [r["clustering_index"] for r in reports]
    dt_var = [r["drift_dt_variance"] for r in reports]
    print(f"{elapsed:.1f} s, clustering {ci}, dt variance {dt_var}")
    assert elapsed < 15 * 60
    unit = SWEEP_RATIOS.index(1.0)
    best = int(np.argmin(ci))
    assert abs(best - unit) <= 1, f"clustering minimized at ratio {SWEEP_RATIOS[best]}"
    # both trends run outward from the balanced ratio
    assert dt_var[0] > dt_var[unit] and ci[-1] > ci[unit]
    # dt variance grows step by step toward small ratios
    assert all(a >= b for a, b in zip(dt_var[:unit], dt_var[1:unit + 1])), dt_var
    # spatial clustering grows step by step toward large ratios
    assert all(a <= b for a, b in zip(ci[unit:], ci[unit + 1:])), ci


def test_criterion_8_following_error_grows_as_stiffness_drops():
    traj = brake_and_hold()
    errors = [follow(traj, FollowerConfig(stiffness=s)).error.max() for s in STIFFNESS]
    print(dict(zip(STIFFNESS, errors)))
    assert all(a <= b for a, b in zip(errors, errors[1:])), errors
    line = straight_trajectory((0, 0, 0), (50, 0, 0), 101, 11.11)
    assert follow(line, FollowerConfig(stiffness=1.0)).error.max() < 0.05


def test_criterion_9_identical_seeds_give_identical_files(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["plan", "--scene", "crossing", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    for name in ("trajectory.csv", "metrics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

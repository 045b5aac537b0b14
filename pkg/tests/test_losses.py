import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacetime_planner.losses import (
    LagrangeMultipliers,
    LossWeights,
    TrajVars,
    collision_inputs,
    collision_loss,
    constraint_loss,
    distance_loss,
    nonholonomic_deltas,
    time_regularization,
    total_loss,
    velocity_deltas,
    velocity_loss,
)
from spacetime_planner.trajectory import Trajectory, straight_trajectory

from conftest import random_trajectory, small_field
from gradcheck import check_configuration

V_E = 11.11


@pytest.mark.parametrize("seed", range(10))
def test_every_term_matches_finite_differences(seed):
    errors = check_configuration(seed, small_field(seed, sizes=(4, 32, 32, 32, 1)))
    assert max(errors.values()) < 1e-5, errors


def test_constant_speed_straight_line_satisfies_both_constraints():
    traj = straight_trajectory((0, 0, 0.3), (10 * math.cos(0.3), 10 * math.sin(0.3), 0.3), 11, V_E)
    np.testing.assert_allclose(velocity_deltas(traj, V_E), 0.0, atol=1e-12)
    np.testing.assert_allclose(nonholonomic_deltas(traj), 0.0, atol=1e-12)
    lam = np.arange(10.0)
    assert velocity_loss(velocity_deltas(traj, V_E), lam) == pytest.approx(0.0, abs=1e-12)


def test_hand_computed_values():
    # two segments: a 3-4-5 step in 1 s, then a pure turn of 0.5 rad in 0.5 s
    traj = Trajectory(np.array([[0, 0, 0, 0], [3, 4, 0, 1], [3, 4, 0.5, 1.5]]))
    np.testing.assert_allclose(velocity_deltas(traj, 6.0), [6 - 5, 3 - 0.5])
    np.testing.assert_allclose(nonholonomic_deltas(traj), [3 * 0 - 4 * 1, 0.0])
    assert distance_loss(traj) == pytest.approx((25 + 0.25) / 2)
    assert time_regularization(traj) == pytest.approx((1 + 0.25) / 2)
    d = np.array([1.0, 2.5])
    assert velocity_loss(d, np.array([2.0, 0.0])) == pytest.approx(np.mean(d**2 - [2.0, 0.0] * d))


def test_nonholonomic_delta_ignores_reversing_along_the_heading():
    traj = Trajectory(np.array([[0, 0, 0, 0], [-2, 0, 0, 1]]))
    assert nonholonomic_deltas(traj)[0] == pytest.approx(0.0)


def test_multiplier_length_is_checked():
    traj = random_trajectory(np.random.default_rng(0), n=5)
    with pytest.raises(ValueError):
        velocity_loss(velocity_deltas(traj, V_E), np.zeros(4))
    with pytest.raises(ValueError):
        constraint_loss(TrajVars.of(traj).x[1:] * 0.0, np.zeros(3))


def test_collision_inputs_interpolate_and_retime():
    traj = Trajectory(np.array([[0, 0, 0, 0], [2, 0, 3.0, 0.7], [4, 2, -3.0, 1.6], [4, 4, -3.0, 2.0]]))
    tv = TrajVars.of(traj)
    u = np.array([0.5, 0.5, 0.25])
    x = collision_inputs(tv, u).value
    np.testing.assert_allclose(x[:, 0], [1, 3, 4])
    np.testing.assert_allclose(x[:, 1], [0, 1, 2.5])
    # shortest-arc heading: 3.0 -> -3.0 passes through pi, not zero
    assert abs(abs(x[1, 2]) - math.pi) < 0.05
    # times are the uniform re-timing of t_N, not the stored times
    np.testing.assert_allclose(x[:, 3], [0, 2.0 / 3, 4.0 / 3])


def test_collision_loss_of_a_zero_field_is_log_two():
    traj = random_trajectory(np.random.default_rng(1))
    field = small_field().zero_()
    assert collision_loss(traj, field, np.random.default_rng(0)) == pytest.approx(math.log(2))


def test_total_is_the_weighted_sum_of_the_terms():
    rng = np.random.default_rng(2)
    traj = random_trajectory(rng, n=7)
    lam = LagrangeMultipliers(rng.normal(size=7), rng.normal(size=7))
    w = LossWeights(dist=2.0, col=3.0, constr=5.0, vel=7.0, time=11.0)
    u = rng.random(7)
    out = total_loss(traj, small_field(), w, lam, V_E, None, u)
    expected = sum(getattr(w, k) * v for k, v in out.terms.items())
    assert out.value == pytest.approx(expected, rel=1e-12)
    assert out.terms["time"] == pytest.approx(time_regularization(traj))
    assert out.terms["col"] == pytest.approx(collision_loss(traj, small_field(), None, u))
    np.testing.assert_allclose(out.delta, velocity_deltas(traj, V_E))
    np.testing.assert_allclose(out.nu, nonholonomic_deltas(traj))


def test_weights_must_be_non_negative():
    with pytest.raises(ValueError):
        LossWeights(col=-1.0)


def test_multipliers_start_at_zero():
    lam = LagrangeMultipliers.zeros(4)
    np.testing.assert_array_equal(lam.vel, np.zeros(4))
    np.testing.assert_array_equal(lam.nh, np.zeros(4))


def _rigid(traj: Trajectory, a: float, shift) -> Trajectory:
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    s = traj.states.copy()
    s[:, :2] = traj.xy @ rot.T + shift
    s[:, 2] += a
    return Trajectory(s)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-math.pi, math.pi), st.floats(-20, 20), st.floats(-20, 20))
def test_kinematic_terms_are_invariant_under_rigid_motion(seed, a, dx, dy):
    traj = random_trajectory(np.random.default_rng(seed))
    moved = _rigid(traj, a, (dx, dy))
    np.testing.assert_allclose(velocity_deltas(moved, V_E), velocity_deltas(traj, V_E), atol=1e-9)
    np.testing.assert_allclose(nonholonomic_deltas(moved), nonholonomic_deltas(traj), atol=1e-9)
    assert distance_loss(moved) == pytest.approx(distance_loss(traj), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_time_terms_ignore_a_common_time_shift(seed, shift):
    traj = random_trajectory(np.random.default_rng(seed))
    s = traj.states.copy()
    s[:, 3] += shift
    moved = Trajectory(s)
    np.testing.assert_allclose(velocity_deltas(moved, V_E), velocity_deltas(traj, V_E), atol=1e-12)
    assert time_regularization(moved) == pytest.approx(time_regularization(traj), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_distance_and_time_losses_are_non_negative(seed):
    traj = random_trajectory(np.random.default_rng(seed))
    assert distance_loss(traj) >= 0
    assert time_regularization(traj) >= 0
    # with zero multipliers the Lagrangian terms are mean squares
    d = velocity_deltas(traj, V_E)
    assert velocity_loss(d, np.zeros_like(d)) == pytest.approx(np.mean(d**2))

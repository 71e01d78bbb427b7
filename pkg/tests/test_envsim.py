import dataclasses
import math

import numpy as np
import pytest

from fwm.envsim import (
    CartPoleAction,
    CartPoleParams,
    CartPoleState,
    ControllerConfig,
    LanderAction,
    LanderState,
    cartpole_energy,
    control,
    default_params,
    rollout,
    step,
)
from fwm.errors import ContractViolationError, ControllerError, DomainError
from fwm.render import render


def cartpole_reference_step(s, force, p):
    """Independent hand integration of the cart-pole equations (one step)."""
    total = p.cart_mass + p.pole_mass
    pml = p.pole_mass * p.half_length
    sin, cos = math.sin(s.pole_angle), math.cos(s.pole_angle)
    temp = (force + pml * s.pole_angvel ** 2 * sin) / total
    ang_acc = (p.gravity * sin - cos * temp) / (
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total))
    lin_acc = temp - pml * ang_acc * cos / total
    vel = s.cart_vel + p.dt * lin_acc
    angvel = s.pole_angvel + p.dt * ang_acc
    return CartPoleState(s.cart_pos + p.dt * vel, vel,
                         s.pole_angle + p.dt * angvel, angvel)


class TestCartPoleStep:
    def test_push_right_from_rest(self, cp_params):
        after = step(CartPoleState(0, 0, 0, 0), CartPoleAction.PUSH_RIGHT, cp_params)
        assert after.cart_vel > 0
        assert after.pole_angle < 0  # force right tips the pole left
        expected = cartpole_reference_step(CartPoleState(0, 0, 0, 0), 10.0, cp_params)
        assert after == expected

    def test_zero_force_equilibrium_is_fixed_point(self):
        params = CartPoleParams(force_mag=0.0)
        state = CartPoleState(0.37, 0.0, 0.0, 0.0)
        assert step(state, CartPoleAction.PUSH_LEFT, params) == state

    @pytest.mark.parametrize("action,force", [(CartPoleAction.PUSH_LEFT, -10.0),
                                              (CartPoleAction.PUSH_RIGHT, 10.0)])
    def test_matches_reference_on_generic_states(self, cp_params, rng, action, force):
        for _ in range(50):
            s = CartPoleState(*rng.uniform(-1, 1, size=4))
            assert step(s, action, cp_params) == cartpole_reference_step(s, force, cp_params)

    def test_energy_drift_bounded_zero_force(self):
        # zero-force test mode, 100 steps from theta=0.1: drift within 5%
        params = CartPoleParams(force_mag=0.0)
        state = CartPoleState(0.0, 0.0, 0.1, 0.0)
        e0 = cartpole_energy(state, params)
        worst = 0.0
        for _ in range(100):
            state = step(state, CartPoleAction.PUSH_LEFT, params)
            worst = max(worst, abs(cartpole_energy(state, params) - e0) / e0)
        assert worst <= 0.05


class TestLanderStep:
    def test_noop_one_step_hand_integration(self, ld_params):
        after = step(LanderState(10, 10, 0, 0, 0, 0), LanderAction.NOOP, ld_params)
        # velocity first; position uses the old velocity
        assert after.vy == pytest.approx(-0.05, abs=0)
        assert after.py == 10.0
        assert after.px == 10.0 and after.vx == 0.0
        assert after.tilt == 0.0 and after.tilt_vel == 0.0

    def test_main_thrust_counteracts_gravity(self, ld_params):
        after = step(LanderState(10, 10, 0, 0, 0, 0), LanderAction.FIRE_MAIN, ld_params)
        assert after.vy == pytest.approx((2.0 - 1.0) * 0.05)

    def test_side_thruster_tilts_and_accelerates(self, ld_params):
        left = step(LanderState(10, 10, 0, 0, 0, 0), LanderAction.FIRE_LEFT, ld_params)
        assert left.vx == pytest.approx(-0.2 * 0.05)
        assert left.tilt_vel == pytest.approx(0.6 * 0.05)
        right = step(LanderState(10, 10, 0, 0, 0, 0), LanderAction.FIRE_RIGHT, ld_params)
        assert right.vx == pytest.approx(0.2 * 0.05)
        assert right.tilt_vel == pytest.approx(-0.6 * 0.05)

    def test_positions_clamped_to_world(self, ld_params, rng):
        state = LanderState(0.01, 0.02, -3.0, -4.0, 0, 0)
        after = step(state, LanderAction.NOOP, ld_params)
        assert after.px == 0.0 and after.py == 0.0
        for _ in range(200):
            s = LanderState(rng.uniform(0, 20), rng.uniform(0, 20),
                            rng.uniform(-30, 30), rng.uniform(-30, 30),
                            rng.uniform(-1, 1), rng.uniform(-1, 1))
            a = list(LanderAction)[int(rng.integers(4))]
            nxt = step(s, a, ld_params)
            assert 0.0 <= nxt.px <= 20.0 and 0.0 <= nxt.py <= 20.0


class TestStepContracts:
    def test_mismatched_variants_rejected(self, cp_params, ld_params):
        with pytest.raises(ContractViolationError):
            step(CartPoleState(0, 0, 0, 0), LanderAction.NOOP, cp_params)
        with pytest.raises(ContractViolationError):
            step(LanderState(10, 10, 0, 0, 0, 0), CartPoleAction.PUSH_LEFT, ld_params)
        with pytest.raises(ContractViolationError):
            step(CartPoleState(0, 0, 0, 0), CartPoleAction.PUSH_LEFT, ld_params)

    def test_non_finite_state_rejected(self, cp_params):
        with pytest.raises(DomainError):
            step(CartPoleState(math.nan, 0, 0, 0), CartPoleAction.PUSH_LEFT, cp_params)


class TestControl:
    def _frames(self, states, params, palette):
        return [render(s, params, palette, time_index=t) for t, s in enumerate(states)]

    def test_upright_motionless_tie_breaks_push_left(self, cp_params, cp_palette):
        frames = self._frames([CartPoleState(0, 0, 0, 0)] * 2, cp_params, cp_palette)
        assert control(frames, "cartpole", ControllerConfig()) is CartPoleAction.PUSH_LEFT

    def test_pole_leaning_right_pushes_right(self, cp_params, cp_palette):
        frames = self._frames([CartPoleState(0, 0, 0.2, 0)] * 2, cp_params, cp_palette)
        assert control(frames, "cartpole", ControllerConfig()) is CartPoleAction.PUSH_RIGHT

    def test_replay_cycles_through_actions(self, ld_params, ld_palette):
        cfg = ControllerConfig(kind="replay",
                               replay=(LanderAction.NOOP, LanderAction.FIRE_MAIN))
        frames = self._frames([LanderState(10, 10, 0, 0, 0, 0)] * 3, ld_params, ld_palette)
        assert control(frames[:1], "lander", cfg) is LanderAction.NOOP
        assert control(frames[:2], "lander", cfg) is LanderAction.FIRE_MAIN
        assert control(frames[:3], "lander", cfg) is LanderAction.NOOP

    def test_random_controller_deterministic_per_seed(self, cp_params, cp_palette):
        frames = self._frames([CartPoleState(0, 0, 0, 0)] * 2, cp_params, cp_palette)
        cfg = ControllerConfig(kind="random", seed=3)
        first = control(frames, "cartpole", cfg)
        assert control(frames, "cartpole", cfg) is first

    def test_lander_fires_main_when_descending_fast(self, ld_params, ld_palette):
        states = [LanderState(10, 12, 0, -1.0, 0, 0)]
        states.append(step(states[0], LanderAction.NOOP, ld_params))
        frames = self._frames(states, ld_params, ld_palette)
        assert control(frames, "lander", ControllerConfig()) is LanderAction.FIRE_MAIN

    def test_lander_steers_toward_pad(self, ld_params, ld_palette):
        frames = self._frames([LanderState(14, 12, 0, 0, 0, 0)] * 2, ld_params, ld_palette)
        assert control(frames, "lander", ControllerConfig()) is LanderAction.FIRE_LEFT
        frames = self._frames([LanderState(6, 12, 0, 0, 0, 0)] * 2, ld_params, ld_palette)
        assert control(frames, "lander", ControllerConfig()) is LanderAction.FIRE_RIGHT

    def test_missing_object_surfaces_controller_error(self, cp_params, cp_palette):
        # cart far outside the mapped range: cart and pole leave the frame
        frames = self._frames([CartPoleState(-4.5, 0, 0, 0)] * 2, cp_params, cp_palette)
        with pytest.raises(ControllerError):
            control(frames, "cartpole", ControllerConfig())

    def test_needs_at_least_one_observation(self):
        with pytest.raises(ControllerError):
            control([], "cartpole", ControllerConfig())


class TestRollout:
    def test_length_bookkeeping(self, cp_params):
        ep = rollout(CartPoleState(0, 0, 0.05, 0), ControllerConfig(), 1, cp_params, seed=0)
        assert len(ep.actions) == 1
        assert len(ep.states) == 2
        assert len(ep.observations) == 2

    def test_deterministic_per_seed(self, tmp_path, cp_params):
        from fwm.episode import save_episode

        init = CartPoleState(0.1, 0.0, 0.05, 0.1)
        a = rollout(init, ControllerConfig(), 10, cp_params, seed=4)
        b = rollout(init, ControllerConfig(), 10, cp_params, seed=4)
        save_episode(a, tmp_path / "a")
        save_episode(b, tmp_path / "b")
        for rel in ("manifest.json", "states.json", "actions.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        for f in sorted((tmp_path / "a" / "frames").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / "frames" / f.name).read_bytes()

    def test_uncontrolled_pole_falls(self, cp_params):
        # gains (0, 0): PD sum is exactly 0, tie resolves to constant PushLeft
        init = CartPoleState(0.0, 0.0, 0.3, 0.0)
        state = init
        crossed = None
        for t in range(60):  # integrator as the independent oracle
            state = step(state, CartPoleAction.PUSH_LEFT, cp_params)
            if abs(state.pole_angle) > math.pi / 4:
                crossed = t + 1
                break
        assert crossed is not None
        ep = rollout(init, ControllerConfig(k_theta=0.0, k_omega=0.0), crossed,
                     cp_params, seed=0)
        assert all(a is CartPoleAction.PUSH_LEFT for a in ep.actions)
        assert any(abs(s.pole_angle) > math.pi / 4 for s in ep.states)

    def test_steps_must_be_positive(self, cp_params):
        with pytest.raises(ContractViolationError):
            rollout(CartPoleState(0, 0, 0, 0), ControllerConfig(), 0, cp_params, seed=0)

    def test_episode_structure_invariant(self, ld_params):
        ep = rollout(LanderState(10, 12, 0, 0, 0, 0), ControllerConfig(), 7, ld_params, seed=1)
        assert len(ep.states) == len(ep.observations) == len(ep.actions) + 1

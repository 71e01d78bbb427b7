"""Desk-scale dynamics, discrete action spaces, and image-based controllers.

Two environments are provided:

* ``cartpole`` -- classical inverted pendulum on a cart (gym-style constants).
  Integration is semi-implicit Euler: velocities are updated first and the
  positions then use the *new* velocities.
* ``lander`` -- simplified planar point mass with a tilt degree of freedom
  (a deliberate stand-in for the Box2D lander; constants are fixed and
  documented here, not tuned to reproduce it).  Velocities are updated first
  and positions use the *old* velocities; px/py are clamped to [0, 20] after
  every step.

All operations are pure functions of their inputs, so values can be shared
freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np

from .errors import ContractViolationError, ControllerError, DomainError, SegmentationError

if TYPE_CHECKING:  # imported lazily at call time to avoid module cycles
    from .episode import Episode
    from .render import Observation, Palette

ENV_CARTPOLE = "cartpole"
ENV_LANDER = "lander"


class CartPoleAction(Enum):
    PUSH_LEFT = "PushLeft"
    PUSH_RIGHT = "PushRight"


class LanderAction(Enum):
    NOOP = "Noop"
    FIRE_LEFT = "FireLeft"
    FIRE_MAIN = "FireMain"
    FIRE_RIGHT = "FireRight"


Action = Union[CartPoleAction, LanderAction]

ACTION_SPACES: dict[str, tuple[Action, ...]] = {
    ENV_CARTPOLE: tuple(CartPoleAction),
    ENV_LANDER: tuple(LanderAction),
}


def action_from_name(name: str) -> Action:
    for space in ACTION_SPACES.values():
        for a in space:
            if a.value == name:
                return a
    raise ContractViolationError(f"unknown action name {name!r}")


@dataclass(frozen=True)
class CartPoleState:
    """Cart position/velocity plus pole angle (0 = upright, positive = clockwise
    on screen, i.e. tipping right) and angular velocity."""

    cart_pos: float
    cart_vel: float
    pole_angle: float
    pole_angvel: float


@dataclass(frozen=True)
class LanderState:
    """Planar position in [0, 20]^2 world units, velocities, tilt, tilt rate."""

    px: float
    py: float
    vx: float
    vy: float
    tilt: float
    tilt_vel: float


SimState = Union[CartPoleState, LanderState]


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0  # 0.0 enables the zero-force test mode
    dt: float = 0.02
    width: int = 96
    height: int = 96


@dataclass(frozen=True)
class LanderParams:
    gravity: float = 1.0          # downward, world units / s^2
    main_accel: float = 2.0       # along the body axis
    side_tilt_accel: float = 0.6  # rad / s^2
    side_lat_accel: float = 0.2   # world units / s^2
    dt: float = 0.05
    width: int = 96
    height: int = 96
    world_size: float = 20.0


EnvParams = Union[CartPoleParams, LanderParams]


def default_params(env: str) -> EnvParams:
    if env == ENV_CARTPOLE:
        return CartPoleParams()
    if env == ENV_LANDER:
        return LanderParams()
    raise ContractViolationError(f"unknown environment id {env!r}")


def env_of_state(state: SimState) -> str:
    return ENV_CARTPOLE if isinstance(state, CartPoleState) else ENV_LANDER


def _state_values(state: SimState) -> tuple[float, ...]:
    if isinstance(state, CartPoleState):
        return (state.cart_pos, state.cart_vel, state.pole_angle, state.pole_angvel)
    return (state.px, state.py, state.vx, state.vy, state.tilt, state.tilt_vel)


def _check_finite(state: SimState) -> None:
    if not all(math.isfinite(v) for v in _state_values(state)):
        raise DomainError(f"non-finite state {state!r}")


def step(state: SimState, action: Action, params: EnvParams) -> SimState:
    """Advance the dynamics by one timestep. Deterministic and pure."""
    _check_finite(state)
    if isinstance(state, CartPoleState):
        if not isinstance(action, CartPoleAction) or not isinstance(params, CartPoleParams):
            raise ContractViolationError("cartpole state requires cartpole action/params")
        return _step_cartpole(state, action, params)
    if not isinstance(action, LanderAction) or not isinstance(params, LanderParams):
        raise ContractViolationError("lander state requires lander action/params")
    return _step_lander(state, action, params)


def _step_cartpole(s: CartPoleState, a: CartPoleAction, p: CartPoleParams) -> CartPoleState:
    force = p.force_mag if a is CartPoleAction.PUSH_RIGHT else -p.force_mag
    total_mass = p.cart_mass + p.pole_mass
    pml = p.pole_mass * p.half_length
    sin, cos = math.sin(s.pole_angle), math.cos(s.pole_angle)
    temp = (force + pml * s.pole_angvel ** 2 * sin) / total_mass
    ang_acc = (p.gravity * sin - cos * temp) / (
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass)
    )
    lin_acc = temp - pml * ang_acc * cos / total_mass
    # velocities first; positions use the new velocities
    cart_vel = s.cart_vel + p.dt * lin_acc
    pole_angvel = s.pole_angvel + p.dt * ang_acc
    return CartPoleState(
        cart_pos=s.cart_pos + p.dt * cart_vel,
        cart_vel=cart_vel,
        pole_angle=s.pole_angle + p.dt * pole_angvel,
        pole_angvel=pole_angvel,
    )


def _step_lander(s: LanderState, a: LanderAction, p: LanderParams) -> LanderState:
    ax, ay, tilt_acc = 0.0, -p.gravity, 0.0
    if a is LanderAction.FIRE_MAIN:
        # thrust along the body axis; tilt rotates it counterclockwise in world coords
        ax += -p.main_accel * math.sin(s.tilt)
        ay += p.main_accel * math.cos(s.tilt)
    elif a is LanderAction.FIRE_LEFT:
        ax += -p.side_lat_accel
        tilt_acc += p.side_tilt_accel
    elif a is LanderAction.FIRE_RIGHT:
        ax += p.side_lat_accel
        tilt_acc += -p.side_tilt_accel
    # velocities first; positions use the old velocities
    vx = s.vx + p.dt * ax
    vy = s.vy + p.dt * ay
    tilt_vel = s.tilt_vel + p.dt * tilt_acc
    px = min(max(s.px + p.dt * s.vx, 0.0), p.world_size)
    py = min(max(s.py + p.dt * s.vy, 0.0), p.world_size)
    return LanderState(px=px, py=py, vx=vx, vy=vy,
                       tilt=s.tilt + p.dt * s.tilt_vel, tilt_vel=tilt_vel)


def cartpole_energy(state: CartPoleState, params: CartPoleParams) -> float:
    """Total mechanical energy of the cart-pole.

    The pole is the uniform rod the dynamics assume (center of mass at
    half_length, I_cm = m(2l)^2/12).  Potential energy is measured from the
    hanging rest configuration, so the value is nonnegative.
    """
    m, l = params.pole_mass, params.half_length
    i_cm = m * (2.0 * l) ** 2 / 12.0
    vx_cm = state.cart_vel + l * state.pole_angvel * math.cos(state.pole_angle)
    vy_cm = -l * state.pole_angvel * math.sin(state.pole_angle)
    kinetic = (
        0.5 * params.cart_mass * state.cart_vel ** 2
        + 0.5 * m * (vx_cm ** 2 + vy_cm ** 2)
        + 0.5 * i_cm * state.pole_angvel ** 2
    )
    potential = m * params.gravity * l * (1.0 + math.cos(state.pole_angle))
    return kinetic + potential


@dataclass(frozen=True)
class ControllerConfig:
    """Configuration for the built-in controllers.

    kind "pd": segment the frames, estimate angle / position by
    finite-differencing centroids, then apply a bang-bang PD rule.
    kind "replay": replay a fixed action list (cyclic).
    kind "random": draw uniformly from the action space, seeded per step.
    """

    kind: str = "pd"
    k_theta: float = 1.0
    k_omega: float = 0.2
    v_limit: float = -0.3
    target_x: float = 10.0
    replay: tuple[Action, ...] = ()
    seed: int = 0

    def describe(self) -> str:
        if self.kind == "pd":
            return f"pd(k_theta={self.k_theta},k_omega={self.k_omega},v_limit={self.v_limit},target_x={self.target_x})"
        if self.kind == "replay":
            return f"replay(n={len(self.replay)})"
        return f"random(seed={self.seed})"


def control(
    obs_history: Sequence["Observation"],
    env: str,
    config: ControllerConfig,
    palette: "Palette | None" = None,
    params: EnvParams | None = None,
) -> Action:
    """Pick the next action from rendered observations.

    Needs at least one observation; velocity estimates require two (otherwise
    velocities are taken as 0).  Deterministic given observations + config.
    Exact PD ties resolve to the first action variant.
    """
    if not obs_history:
        raise ControllerError("controller needs at least one observation")
    t = len(obs_history) - 1
    space = ACTION_SPACES[env]

    if config.kind == "replay":
        if not config.replay:
            raise ControllerError("replay controller has an empty action list")
        return config.replay[t % len(config.replay)]
    if config.kind == "random":
        rng = np.random.default_rng((config.seed, t))
        return space[int(rng.integers(len(space)))]
    if config.kind != "pd":
        raise ControllerError(f"unknown controller kind {config.kind!r}")

    from .render import default_palette, lander_world_from_centroid
    from .segment import extract_latent

    if palette is None:
        palette = default_palette(env)
    if params is None:
        params = default_params(env)

    try:
        latent = extract_latent(obs_history[-1], palette, t)
        prev = extract_latent(obs_history[-2], palette, t - 1) if len(obs_history) >= 2 else None
    except SegmentationError as exc:
        raise ControllerError(f"segmentation failed at step {t}: {exc}") from exc

    if env == ENV_CARTPOLE:
        theta = _estimated_angle(latent)
        omega = 0.0
        if prev is not None:
            omega = (theta - _estimated_angle(prev)) / params.dt
        if config.k_theta * theta + config.k_omega * omega > 0.0:
            return CartPoleAction.PUSH_RIGHT
        return CartPoleAction.PUSH_LEFT

    px, py = _estimated_lander_pos(latent, params)
    vy = 0.0
    if prev is not None:
        _, py_prev = _estimated_lander_pos(prev, params)
        vy = (py - py_prev) / params.dt
    if vy < config.v_limit:
        return LanderAction.FIRE_MAIN
    if px > config.target_x:
        return LanderAction.FIRE_LEFT
    if px < config.target_x:
        return LanderAction.FIRE_RIGHT
    return LanderAction.NOOP


def _estimated_angle(latent) -> float:
    from .metrics import angle_from_centroids

    cart = latent.get("cart")
    pole = latent.get("pole")
    if cart is None or pole is None:
        raise ControllerError("cart or pole not visible; cannot estimate angle")
    return math.radians(angle_from_centroids(cart, pole))


def _estimated_lander_pos(latent, params: LanderParams) -> tuple[float, float]:
    from .render import lander_world_from_centroid

    lander = latent.get("lander")
    if lander is None:
        raise ControllerError("lander not visible; cannot estimate position")
    return lander_world_from_centroid(lander.cx, lander.cy, params)


def rollout(
    init: SimState,
    controller: ControllerConfig,
    steps: int,
    params: EnvParams | None = None,
    seed: int = 0,
    palette: "Palette | None" = None,
) -> "Episode":
    """Run the closed loop render -> control -> step for `steps` actions.

    Returns an Episode with steps+1 states/observations and steps actions.
    Deterministic: the same (init, seed, config) yields byte-identical
    episodes on disk.
    """
    from .episode import Episode
    from .render import default_palette, render

    if steps < 1:
        raise ContractViolationError("rollout needs steps >= 1")
    env = env_of_state(init)
    if params is None:
        params = default_params(env)
    if palette is None:
        palette = default_palette(env)

    states: list[SimState] = [init]
    observations: list["Observation"] = []
    actions: list[Action] = []
    for t in range(steps):
        observations.append(render(states[-1], params, palette, time_index=t))
        try:
            actions.append(control(observations, env, controller, palette, params))
            states.append(step(states[-1], actions[-1], params))
        except (ControllerError, ContractViolationError, DomainError) as exc:
            raise ControllerError(f"rollout failed at timestep {t}: {exc}") from exc
    observations.append(render(states[-1], params, palette, time_index=steps))

    return Episode(
        env=env,
        seed=seed,
        states=tuple(states),
        observations=tuple(observations),
        actions=tuple(actions),
        controller_id=controller.describe(),
        palette=palette,
        params=params,
    )

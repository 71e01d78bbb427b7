"""Observation model: rasterize simulator states into exact-palette RGB frames.

Every rendered pixel is exactly one palette color (no anti-aliasing), which
makes exact-color segmentation a faithful encoder.  The default frame is
96x96; geometry scales with the configured frame size.

Cart-pole layout: the lower background covers the bottom 20% of rows, the
cart is a 14x8 rectangle resting on it with center column mapped linearly
from cart_pos in [-2.4, 2.4] to [W/12, W - W/12], and the pole is a rotated
bar (nominal width 3, length 30) anchored at the rasterized cart center so
that cart-centroid -> pole-centroid geometry recovers the angle.

Lander layout: world [0, 20]^2 maps linearly onto the frame with world-up =
image-up; the lander is an 8x8 square, the pad flag a 2x8 marker at world
x = 10 on the lower-background boundary.  Painter's order: backgrounds,
flag/pole, cart/lander.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .envsim import (
    ENV_CARTPOLE,
    ENV_LANDER,
    CartPoleParams,
    CartPoleState,
    EnvParams,
    LanderParams,
    LanderState,
    SimState,
    env_of_state,
)
from .errors import ContractViolationError, DomainError

GROUND_FRACTION = 0.8  # rows at or below round(H * 0.8) are lower background
CART_W, CART_H = 14, 8
POLE_LEN = 30.0
POLE_HALF_WIDTH = 1.5
LANDER_SIZE = 8
FLAG_W, FLAG_H = 2, 8

# pairwise channel-wise L-infinity distance required between palette colors
MIN_COLOR_SEPARATION = 32


@dataclass(eq=False)
class Observation:
    """Fixed-size RGB frame; `pixels` is an (H, W, 3) uint8 array.

    `clipped` records that some object was partially or fully outside the
    frame when rendered (or displaced, for rebuilt frames).
    """

    pixels: np.ndarray
    time_index: int = 0
    clipped: bool = False

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ContractViolationError(f"observation pixels must be (H, W, 3), got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ContractViolationError("observation pixels must be uint8")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class Palette:
    """Ordered object-label -> solid RGB color mapping.

    The entry order is the canonical object order used everywhere downstream
    (latent entries, prompt assembly, disassembly).  Colors must be pairwise
    distinct with channel-wise L-infinity distance >= 32 so exact-color
    segmentation is unambiguous.
    """

    entries: tuple[tuple[str, tuple[int, int, int]], ...]

    def __post_init__(self):
        labels = [label for label, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ContractViolationError("palette labels must be unique")
        for i, (la, ca) in enumerate(self.entries):
            for lb, cb in self.entries[i + 1:]:
                if max(abs(x - y) for x, y in zip(ca, cb)) < MIN_COLOR_SEPARATION:
                    raise ContractViolationError(
                        f"palette colors for {la!r} and {lb!r} are closer than {MIN_COLOR_SEPARATION}"
                    )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.entries)

    def color(self, label: str) -> tuple[int, int, int]:
        for lab, col in self.entries:
            if lab == label:
                return col
        raise ContractViolationError(f"label {label!r} not in palette")

    def sha256(self) -> str:
        blob = json.dumps([[l, list(c)] for l, c in self.entries]).encode()
        return hashlib.sha256(blob).hexdigest()


def cartpole_palette() -> Palette:
    return Palette((
        ("cart", (0, 0, 0)),
        ("pole", (192, 96, 0)),
        ("upper-bg", (255, 255, 255)),
        ("lower-bg", (64, 160, 64)),
    ))


def lander_palette() -> Palette:
    return Palette((
        ("lander", (224, 224, 224)),
        ("flag", (224, 32, 32)),
        ("upper-bg", (16, 16, 48)),
        ("lower-bg", (128, 128, 128)),
    ))


def default_palette(env: str) -> Palette:
    if env == ENV_CARTPOLE:
        return cartpole_palette()
    if env == ENV_LANDER:
        return lander_palette()
    raise ContractViolationError(f"unknown environment id {env!r}")


_GRIDS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    if (h, w) not in _GRIDS:
        _GRIDS[(h, w)] = np.mgrid[0:h, 0:w]
    return _GRIDS[(h, w)]


def ground_row(height: int) -> int:
    return round(height * GROUND_FRACTION)


def cart_center_px(cart_pos: float, params: CartPoleParams) -> float:
    """Map cart_pos in [-2.4, 2.4] linearly to [W/12, W - W/12] (pixel x)."""
    margin = params.width / 12.0
    return margin + (cart_pos + 2.4) * (params.width - 2.0 * margin) / 4.8


def lander_center_px(px: float, py: float, params: LanderParams) -> tuple[float, float]:
    """Map world (px, py) in [0, 20]^2 to pixel (x, y); world up = image up."""
    x = px * params.width / params.world_size
    y = params.height - py * params.height / params.world_size
    return x, y


def lander_world_from_centroid(cx: float, cy: float, params: LanderParams) -> tuple[float, float]:
    """Invert the lander sprite placement: mask centroid -> world position.

    The 8x8 sprite is placed at rounded pixel coordinates, so its centroid
    sits at (round(x) - 0.5, round(y) - 0.5); the +0.5 below removes that
    half-pixel bias.  Accurate to ~0.1 world units.
    """
    px = (cx + 0.5) * params.world_size / params.width
    py = (params.height - (cy + 0.5)) * params.world_size / params.height
    return px, py


def render(state: SimState, params: EnvParams, palette: Palette, time_index: int = 0) -> Observation:
    """Rasterize a state into an exact-palette frame.  Pure and deterministic.

    Objects falling outside the frame are clipped to the frame edge and the
    observation's `clipped` flag is set (no error).
    """
    values = (
        (state.cart_pos, state.cart_vel, state.pole_angle, state.pole_angvel)
        if isinstance(state, CartPoleState)
        else (state.px, state.py, state.vx, state.vy, state.tilt, state.tilt_vel)
    )
    if not all(math.isfinite(v) for v in values):
        raise DomainError(f"non-finite state {state!r}")

    env = env_of_state(state)
    if isinstance(state, CartPoleState):
        if not isinstance(params, CartPoleParams):
            raise ContractViolationError("cartpole state requires CartPoleParams")
        return _render_cartpole(state, params, palette, time_index)
    if not isinstance(params, LanderParams):
        raise ContractViolationError("lander state requires LanderParams")
    return _render_lander(state, params, palette, time_index)


def _background(params: EnvParams, palette: Palette) -> np.ndarray:
    h, w = params.height, params.width
    px = np.empty((h, w, 3), dtype=np.uint8)
    px[:, :] = palette.color("upper-bg")
    px[ground_row(h):, :] = palette.color("lower-bg")
    return px


def _paint_rect(px: np.ndarray, row0: int, col0: int, rh: int, rw: int,
                color: tuple[int, int, int]) -> bool:
    """Paint a rect clipped to the frame; returns True if any part clipped."""
    h, w = px.shape[:2]
    r0, r1 = max(row0, 0), min(row0 + rh, h)
    c0, c1 = max(col0, 0), min(col0 + rw, w)
    if r0 < r1 and c0 < c1:
        px[r0:r1, c0:c1] = color
    return r0 != row0 or r1 != row0 + rh or c0 != col0 or c1 != col0 + rw


def _render_cartpole(state: CartPoleState, params: CartPoleParams,
                     palette: Palette, time_index: int) -> Observation:
    px = _background(params, palette)
    h, w = params.height, params.width
    ground = ground_row(h)
    clipped = False

    cx = cart_center_px(state.cart_pos, params)
    col0 = round(cx - CART_W / 2.0)
    row0 = ground - CART_H

    # pole bar anchored at the rasterized cart center; drawn before the cart
    # so the cart occludes the anchored end
    anchor_x = col0 + (CART_W - 1) / 2.0
    anchor_y = row0 + (CART_H - 1) / 2.0
    sin, cos = math.sin(state.pole_angle), math.cos(state.pole_angle)
    # evaluate the bar test only inside its reach around the anchor
    reach = int(POLE_LEN + POLE_HALF_WIDTH) + 2
    r0, r1 = max(round(anchor_y) - reach, 0), min(round(anchor_y) + reach + 1, h)
    c0, c1 = max(round(anchor_x) - reach, 0), min(round(anchor_x) + reach + 1, w)
    ii, jj = _grid(r1 - r0, c1 - c0)
    dx = (jj + c0) - anchor_x
    dy = (ii + r0) - anchor_y
    along = dx * sin - dy * cos          # distance along the bar axis (up = positive)
    across = dx * cos + dy * sin
    bar = (along >= 0.0) & (along <= POLE_LEN) & (np.abs(across) <= POLE_HALF_WIDTH)
    px[r0:r1, c0:c1][bar] = palette.color("pole")
    # pole clipped iff the ideal tip-end rectangle corners leave the frame
    for t_along in (0.0, POLE_LEN):
        for t_across in (-POLE_HALF_WIDTH, POLE_HALF_WIDTH):
            x = anchor_x + t_along * sin + t_across * cos
            y = anchor_y - t_along * cos + t_across * sin
            if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                clipped = True

    clipped |= _paint_rect(px, row0, col0, CART_H, CART_W, palette.color("cart"))
    return Observation(px, time_index=time_index, clipped=clipped)


def _render_lander(state: LanderState, params: LanderParams,
                   palette: Palette, time_index: int) -> Observation:
    px = _background(params, palette)
    h = params.height
    ground = ground_row(h)
    clipped = False

    flag_x, _ = lander_center_px(params.world_size / 2.0, 0.0, params)
    clipped |= _paint_rect(px, ground - FLAG_H, round(flag_x - FLAG_W / 2.0),
                           FLAG_H, FLAG_W, palette.color("flag"))

    x, y = lander_center_px(state.px, state.py, params)
    clipped |= _paint_rect(px, round(y) - LANDER_SIZE // 2, round(x) - LANDER_SIZE // 2,
                           LANDER_SIZE, LANDER_SIZE, palette.color("lander"))
    return Observation(px, time_index=time_index, clipped=clipped)

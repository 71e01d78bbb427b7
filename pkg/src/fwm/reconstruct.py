"""Output disassembly: rebuild the next observation from a predicted latent
by displacing each object's pixels, then drive the image-based controller on
the rebuilt frame to continue the closed loop.

Displacement is the rounded centroid delta per object.  Each true pixel of
the object's current mask is *swapped* with the pixel at its displaced
position, walking the mask in row-major order and the objects in canonical
palette order.  Swaps whose destination falls outside the frame are skipped
(destination untouched) and flagged.  Because swaps permute pixels, the
rebuilt frame keeps the exact multiset of palette colors -- no object
duplication or loss.  Objects dropped by the static filter stay in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .envsim import Action, ControllerConfig, EnvParams, control, default_params
from .episode import Episode
from .errors import (
    ContractViolationError,
    FwmError,
    LabelMismatchError,
    RolloutAbortError,
)
from .predictor import (
    Prediction,
    PredictionRequest,
    Predictor,
    PromptFragments,
    SamplingParams,
)
from .render import Observation, Palette, default_palette
from .segment import LatentState, extract_latent, filter_static, segment


@dataclass(frozen=True)
class Displacement:
    """Integer pixel displacement applied to one object; `clipped` marks that
    some swaps were skipped because their destination left the frame."""

    label: str
    dx: int
    dy: int
    clipped: bool


def round_half_away_from_zero(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def disassemble(pred: LatentState, cur: LatentState, cur_obs: Observation,
                palette: Palette) -> tuple[Observation, list[Displacement]]:
    """Rebuild the next frame from the predicted latent by pixel swaps.

    `pred` and `cur` must share a label set; `cur_obs` must segment exactly
    under the palette.  Objects are processed in canonical palette order and
    a later object's swaps may touch already-moved pixels; with overlapping
    displacements this is a faithful execution of the swap loop, not a
    compositor.
    """
    missing = set(pred.labels) ^ set(cur.labels)
    if missing:
        raise LabelMismatchError(
            f"predicted/current label sets differ: {sorted(missing)}", tuple(sorted(missing))
        )
    masks = {m.label: m.mask for m in segment(cur_obs, palette)}
    absent = [l for l in pred.labels if l not in masks]
    if absent:
        raise LabelMismatchError(
            f"objects missing from the current frame: {absent}", tuple(absent)
        )

    out = cur_obs.pixels.copy()
    h, w = out.shape[:2]
    displacements: list[Displacement] = []
    order = [l for l in palette.labels if l in set(pred.labels)]
    for label in order:
        dx = round_half_away_from_zero(pred.get(label).cx - cur.get(label).cx)
        dy = round_half_away_from_zero(pred.get(label).cy - cur.get(label).cy)
        clipped = False
        if dx != 0 or dy != 0:
            ys, xs = np.nonzero(masks[label])
            # walk opposite to the displacement (rows first, then columns) so
            # that each swap's destination is already vacated; this makes the
            # swap sequence an exact translation even when the move overlaps
            # the object's own footprint
            order = np.lexsort((-xs if dx > 0 else xs, -ys if dy > 0 else ys))
            for idx in order.tolist():
                i, j = int(ys[idx]), int(xs[idx])
                ti, tj = i + dy, j + dx
                if 0 <= ti < h and 0 <= tj < w:
                    tmp = out[i, j].copy()
                    out[i, j] = out[ti, tj]
                    out[ti, tj] = tmp
                else:
                    clipped = True
        displacements.append(Displacement(label, dx, dy, clipped))

    rebuilt = Observation(out, time_index=pred.time_index,
                          clipped=any(d.clipped for d in displacements))
    return rebuilt, displacements


@dataclass
class PredictedTrajectory:
    """k predicted steps following an observed prefix.

    `anchor_latent` is the full latent of the last observed frame (step t+m);
    `full_latents` are extracted from the rebuilt frames, so they carry every
    visible object, while `predicted_latents` hold the raw predictor output
    restricted to the kept labels.
    """

    start_time: int  # t + m
    kept_labels: tuple[str, ...]
    dropped_labels: tuple[str, ...]
    anchor_latent: LatentState
    predicted_latents: tuple[LatentState, ...]
    full_latents: tuple[LatentState, ...]
    observations: tuple[Observation, ...]
    actions: tuple[Action, ...]
    displacements: tuple[tuple[Displacement, ...], ...]
    attempts: tuple[int, ...]


def closed_loop_rollout(
    episode: Episode,
    m: int,
    predictor: Predictor,
    k: int,
    controller: ControllerConfig,
    *,
    eps: float = 0.5,
    fragments: PromptFragments = PromptFragments(),
    sampling: SamplingParams = SamplingParams(),
    palette: Palette | None = None,
    params: EnvParams | None = None,
) -> PredictedTrajectory:
    """Predict k steps beyond the episode's first m+1 frames.

    The static-object filter runs once on the initial window and the kept
    label set is frozen for the whole rollout (recomputing it per step could
    change the prompt arity mid-run).  Each iteration predicts the next
    latent, rebuilds the frame, extracts the full latent from it, and asks
    the controller for the next action; prompts always describe latents
    re-extracted from the rolling frame window.  If no object survives the
    filter the world is predicted frozen.

    Any stage failure raises RolloutAbortError carrying the failing step
    index and the partial trajectory.
    """
    if k < 1:
        raise ContractViolationError("closed_loop_rollout needs k >= 1")
    if m < 0 or len(episode.actions) < m + 1:
        raise ContractViolationError(
            f"episode provides {len(episode.actions)} actions; prefix needs m+1 = {m + 1}"
        )
    if palette is None:
        palette = episode.palette or default_palette(episode.env)
    if params is None:
        params = episode.params or default_params(episode.env)

    obs_history = list(episode.observations[: m + 1])
    action_window = list(episode.actions[: m + 1])
    full_window = [extract_latent(o, palette, o.time_index) for o in obs_history]
    if len(full_window) >= 2:
        kept, dropped = filter_static(full_window, eps)
    else:
        kept, dropped = full_window[0].labels, ()

    anchor = full_window[-1]
    preds: list[LatentState] = []
    fulls: list[LatentState] = []
    frames: list[Observation] = []
    actions: list[Action] = []
    disps: list[tuple[Displacement, ...]] = []
    attempts: list[int] = []

    def partial() -> PredictedTrajectory:
        return PredictedTrajectory(
            start_time=m, kept_labels=kept, dropped_labels=dropped,
            anchor_latent=anchor, predicted_latents=tuple(preds),
            full_latents=tuple(fulls), observations=tuple(frames),
            actions=tuple(actions), displacements=tuple(disps),
            attempts=tuple(attempts),
        )

    cur_obs = obs_history[-1]
    cur_full = full_window[-1]
    for j in range(k):
        try:
            # with kept = () this request predicts a frozen world: baselines
            # return an empty latent and disassembly is the identity, while
            # the oracle still supplies the true next frame
            req = PredictionRequest(
                latents=tuple(lat.restrict(kept) for lat in full_window),
                actions=tuple(action_window),
                fragments=fragments,
                sampling=sampling,
            )
            p = predictor(req)
            if p.latent.labels != kept:
                raise ContractViolationError(
                    f"predictor returned labels {p.latent.labels}, expected {kept}"
                )
            if p.observation is not None:
                next_obs = p.observation
                step_disps: tuple[Displacement, ...] = ()
            else:
                next_obs, dlist = disassemble(p.latent, cur_full.restrict(kept),
                                              cur_obs, palette)
                step_disps = tuple(dlist)
            full_next = extract_latent(next_obs, palette, next_obs.time_index)
            obs_history.append(next_obs)
            next_action = control(obs_history, episode.env, controller, palette, params)
        except FwmError as exc:
            raise RolloutAbortError(j, exc, partial()) from exc

        preds.append(p.latent)
        fulls.append(full_next)
        frames.append(next_obs)
        actions.append(next_action)
        disps.append(step_disps)
        attempts.append(p.attempts)

        full_window = full_window[1:] + [full_next]
        action_window = action_window[1:] + [next_action]
        cur_obs, cur_full = next_obs, full_next

    return partial()

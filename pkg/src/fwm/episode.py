"""Recorded episodes and their on-disk directory format.

An episode directory holds a manifest, one PNG per frame, and JSON tables of
states and actions:

    ep00000/
      manifest.json   # env, seed, length, controller id, palette + hash,
                      # params, per-frame clip flags, frames_sha256
      frames/frame_00000.png ...
      states.json
      actions.json

`frames_sha256` is the SHA-256 over the concatenated PNG bytes in frame
order; `load_episode` verifies it.  Writing is deterministic, so re-running
a generation with the same seed overwrites the corpus byte-identically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .envsim import (
    ENV_CARTPOLE,
    Action,
    CartPoleParams,
    CartPoleState,
    EnvParams,
    LanderParams,
    LanderState,
    SimState,
    action_from_name,
)
from .errors import EpisodeFormatError
from .render import Observation, Palette

MANIFEST_SCHEMA = "episode/1"


@dataclass
class Episode:
    """One recorded closed-loop run: steps+1 states/frames, steps actions."""

    env: str
    seed: int
    states: tuple[SimState, ...]
    observations: tuple[Observation, ...]
    actions: tuple[Action, ...]
    controller_id: str
    palette: Palette
    params: EnvParams

    def __post_init__(self):
        if not (len(self.states) == len(self.observations) == len(self.actions) + 1):
            raise EpisodeFormatError(
                f"episode shape broken: {len(self.states)} states, "
                f"{len(self.observations)} observations, {len(self.actions)} actions"
            )

    @property
    def steps(self) -> int:
        return len(self.actions)


def state_to_dict(state: SimState) -> dict:
    return asdict(state)


def state_from_dict(env: str, d: dict) -> SimState:
    return CartPoleState(**d) if env == ENV_CARTPOLE else LanderState(**d)


def params_to_dict(params: EnvParams) -> dict:
    return asdict(params)


def params_from_dict(env: str, d: dict) -> EnvParams:
    return CartPoleParams(**d) if env == ENV_CARTPOLE else LanderParams(**d)


def palette_to_dict(palette: Palette) -> dict:
    return {"entries": [[label, list(color)] for label, color in palette.entries]}


def palette_from_dict(d: dict) -> Palette:
    return Palette(tuple((label, tuple(color)) for label, color in d["entries"]))


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def save_episode(ep: Episode, dirpath: str | Path) -> Path:
    """Write the episode directory; returns its path."""
    root = Path(dirpath)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    digest = hashlib.sha256()
    clip_flags = []
    for i, obs in enumerate(ep.observations):
        frame_path = frames_dir / f"frame_{i:05d}.png"
        Image.fromarray(obs.pixels, mode="RGB").save(frame_path, format="PNG")
        digest.update(frame_path.read_bytes())
        clip_flags.append(bool(obs.clipped))

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "env": ep.env,
        "seed": ep.seed,
        "length": ep.steps,
        "controller": ep.controller_id,
        "palette": palette_to_dict(ep.palette),
        "palette_sha256": ep.palette.sha256(),
        "params": params_to_dict(ep.params),
        "clipped": clip_flags,
        "frames_sha256": digest.hexdigest(),
    }
    _dump_json(root / "manifest.json", manifest)
    _dump_json(root / "states.json", [state_to_dict(s) for s in ep.states])
    _dump_json(root / "actions.json", [a.value for a in ep.actions])
    return root


def load_episode(dirpath: str | Path) -> Episode:
    """Read and verify an episode directory."""
    root = Path(dirpath)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
        states_doc = json.loads((root / "states.json").read_text())
        actions_doc = json.loads((root / "actions.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise EpisodeFormatError(f"cannot read episode {root}: {exc}") from exc
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise EpisodeFormatError(f"unknown manifest schema {manifest.get('schema')!r}")

    env = manifest["env"]
    length = int(manifest["length"])
    clip_flags = manifest.get("clipped", [False] * (length + 1))

    digest = hashlib.sha256()
    observations = []
    for i in range(length + 1):
        frame_path = root / "frames" / f"frame_{i:05d}.png"
        if not frame_path.exists():
            raise EpisodeFormatError(f"missing frame {frame_path.name}")
        raw = frame_path.read_bytes()
        digest.update(raw)
        pixels = np.asarray(Image.open(frame_path).convert("RGB"), dtype=np.uint8)
        observations.append(Observation(pixels, time_index=i, clipped=bool(clip_flags[i])))
    if digest.hexdigest() != manifest["frames_sha256"]:
        raise EpisodeFormatError(f"frame hash mismatch in {root}")

    return Episode(
        env=env,
        seed=int(manifest["seed"]),
        states=tuple(state_from_dict(env, d) for d in states_doc),
        observations=tuple(observations),
        actions=tuple(action_from_name(n) for n in actions_doc),
        controller_id=manifest["controller"],
        palette=palette_from_dict(manifest["palette"]),
        params=params_from_dict(env, manifest["params"]),
    )


def save_predicted_trajectory(traj, episode: Episode, dirpath: str | Path) -> Path:
    """Persist a predicted trajectory in the episode directory format.

    The manifest carries a "predicted": true marker; frames are the rebuilt
    observations and the states table is replaced by the predicted latents.
    """
    root = Path(dirpath)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    digest = hashlib.sha256()
    for i, obs in enumerate(traj.observations):
        frame_path = frames_dir / f"frame_{i:05d}.png"
        Image.fromarray(obs.pixels, mode="RGB").save(frame_path, format="PNG")
        digest.update(frame_path.read_bytes())

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "predicted": True,
        "env": episode.env,
        "seed": episode.seed,
        "start_time": traj.start_time,
        "length": len(traj.observations),
        "kept_labels": list(traj.kept_labels),
        "dropped_labels": list(traj.dropped_labels),
        "controller": episode.controller_id,
        "palette": palette_to_dict(episode.palette),
        "palette_sha256": episode.palette.sha256(),
        "frames_sha256": digest.hexdigest(),
    }
    _dump_json(root / "manifest.json", manifest)
    latents = [
        {"time_index": lat.time_index,
         "entries": [[label, [c.cx, c.cy]] for label, c in lat.entries]}
        for lat in traj.full_latents
    ]
    _dump_json(root / "latents.json", latents)
    _dump_json(root / "actions.json", [a.value for a in traj.actions])
    return root

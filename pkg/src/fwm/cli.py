"""Orchestration harness and command-line interface.

Three subcommands:

* ``generate`` -- roll out a seeded episode corpus to disk.
* ``evaluate`` -- sweep (m, k) with a chosen predictor over a corpus,
  writing one JSON-lines record per episode x (m, k) plus an errors sidecar.
* ``report`` -- aggregate results files into mean-per-cell tables
  (rows = predictor and input length, columns = horizon) as text and CSV,
  optionally with true-vs-predicted frame strips.

Episode initial states are drawn from a two-regime mixture (clearly safe
starts vs. clearly unsafe starts) so safety scoring always sees both
classes; the mixture and all ranges live in the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .envsim import (
    ENV_CARTPOLE,
    ENV_LANDER,
    CartPoleState,
    ControllerConfig,
    EnvParams,
    LanderState,
    SimState,
    default_params,
    rollout,
)
from .episode import (
    Episode,
    load_episode,
    palette_from_dict,
    palette_to_dict,
    params_from_dict,
    params_to_dict,
    save_episode,
    save_predicted_trajectory,
)
from .errors import ConfigError, EpisodeFormatError, FwmError
from .metrics import MetricConfig, report
from .predictor import (
    LlmClient,
    LlmEndpointConfig,
    OraclePredictor,
    PromptFragments,
    SamplingParams,
    predict_const_velocity,
    predict_persistence,
)
from .reconstruct import closed_loop_rollout
from .render import Palette, default_palette
from .safety import SafetyVerdict, confusion_stats, default_safety, horizon_verdict
from .segment import extract_latent

RESULTS_SCHEMA = "results/1"
PREDICTOR_IDS = ("oracle", "persistence", "constvel", "llm", "alwayssafe")

DEFAULT_K = {ENV_CARTPOLE: (10, 20, 30), ENV_LANDER: (10, 20, 30, 40, 50, 60)}


@dataclass(frozen=True)
class CartPoleInitConfig:
    """Initial-state mixture for cart-pole episodes.

    "upright" starts are small perturbations the PD controller holds well
    inside the safe cone; "falling" starts are beyond the recoverable angle
    and already rotating outward, so the whole window is unsafe and carries
    real angular velocity for motion-extrapolating predictors to latch onto.
    """

    p_unsafe: float = 0.5
    upright_pos: tuple[float, float] = (-1.0, 1.0)
    upright_vel: tuple[float, float] = (-0.1, 0.1)
    upright_angle: tuple[float, float] = (-0.12, 0.12)
    upright_angvel: tuple[float, float] = (-0.05, 0.05)
    falling_pos: tuple[float, float] = (-0.3, 0.3)
    falling_vel: tuple[float, float] = (-0.5, 0.5)
    falling_angle_mag: tuple[float, float] = (1.0, 1.3)
    falling_angvel_mag: tuple[float, float] = (1.2, 2.2)


@dataclass(frozen=True)
class LanderInitConfig:
    """Initial-state mixture for lander episodes: inside vs. outside corridor."""

    p_unsafe: float = 0.3
    safe_px: tuple[float, float] = (9.2, 10.8)
    unsafe_px_low: tuple[float, float] = (4.0, 7.0)
    unsafe_px_high: tuple[float, float] = (13.0, 16.0)
    py: tuple[float, float] = (10.0, 14.0)
    vx: tuple[float, float] = (-0.3, 0.3)
    vy: tuple[float, float] = (-0.5, 0.1)
    tilt: tuple[float, float] = (-0.05, 0.05)
    tilt_vel: tuple[float, float] = (-0.05, 0.05)


def sample_init(env: str, rng: np.random.Generator,
                init_cfg: CartPoleInitConfig | LanderInitConfig) -> SimState:
    if env == ENV_CARTPOLE:
        c: CartPoleInitConfig = init_cfg
        if rng.random() < c.p_unsafe:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            return CartPoleState(
                cart_pos=rng.uniform(*c.falling_pos),
                cart_vel=rng.uniform(*c.falling_vel),
                pole_angle=sign * rng.uniform(*c.falling_angle_mag),
                pole_angvel=sign * rng.uniform(*c.falling_angvel_mag),
            )
        return CartPoleState(
            cart_pos=rng.uniform(*c.upright_pos),
            cart_vel=rng.uniform(*c.upright_vel),
            pole_angle=rng.uniform(*c.upright_angle),
            pole_angvel=rng.uniform(*c.upright_angvel),
        )
    l: LanderInitConfig = init_cfg
    if rng.random() < l.p_unsafe:
        px_range = l.unsafe_px_low if rng.random() < 0.5 else l.unsafe_px_high
    else:
        px_range = l.safe_px
    return LanderState(
        px=rng.uniform(*px_range),
        py=rng.uniform(*l.py),
        vx=rng.uniform(*l.vx),
        vy=rng.uniform(*l.vy),
        tilt=rng.uniform(*l.tilt),
        tilt_vel=rng.uniform(*l.tilt_vel),
    )


@dataclass(frozen=True)
class RunConfig:
    env: str
    out: str
    episodes: int = 200
    steps: int | None = None  # None: max(m) + max(k)
    seed: int = 7
    m: tuple[int, ...] = (1, 2, 4, 8)
    k: tuple[int, ...] | None = None  # None: per-env default
    predictor: str = "oracle"
    norm: str = "l2"
    eps: float = 0.5
    falling_threshold: float = math.pi / 12  # |theta| above this at the first
    # predicted step tags a cart-pole window as "falling"
    controller: ControllerConfig = ControllerConfig()
    params: EnvParams | None = None
    palette: Palette | None = None
    sampling: SamplingParams = SamplingParams()
    fragments: PromptFragments = PromptFragments()
    init: CartPoleInitConfig | LanderInitConfig | None = None

    def resolved(self) -> "RunConfig":
        """Fill env-dependent defaults and validate."""
        if self.env not in (ENV_CARTPOLE, ENV_LANDER):
            raise ConfigError("env", f"must be cartpole or lander, got {self.env!r}")
        if self.episodes < 1:
            raise ConfigError("episodes", "must be >= 1")
        if not self.m or any(v < 1 for v in self.m):
            raise ConfigError("m", "input lengths must all be >= 1")
        k = self.k if self.k is not None else DEFAULT_K[self.env]
        if not k or any(v < 1 for v in k):
            raise ConfigError("k", "horizons must all be >= 1")
        steps = self.steps if self.steps is not None else max(self.m) + max(k)
        if steps < max(self.m) + max(k):
            raise ConfigError("steps", f"must cover max(m)+max(k) = {max(self.m) + max(k)}")
        if self.norm not in ("l1", "l2"):
            raise ConfigError("norm", "must be l1 or l2")
        if self.predictor not in PREDICTOR_IDS:
            raise ConfigError("predictor", f"must be one of {PREDICTOR_IDS}")
        if not self.out:
            raise ConfigError("out", "output directory is required")
        params = self.params if self.params is not None else default_params(self.env)
        palette = self.palette if self.palette is not None else default_palette(self.env)
        init = self.init
        if init is None:
            init = CartPoleInitConfig() if self.env == ENV_CARTPOLE else LanderInitConfig()
        return replace(self, k=k, steps=steps, params=params, palette=palette, init=init)


def _range_pair(field_name: str, value) -> tuple[float, float]:
    if (not isinstance(value, (list, tuple))) or len(value) != 2:
        raise ConfigError(field_name, f"expected [low, high], got {value!r}")
    return float(value[0]), float(value[1])


def config_from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON config, with field-level errors."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {
        "env", "out", "episodes", "steps", "seed", "m", "k", "predictor", "norm",
        "eps", "falling_threshold", "controller", "params", "palette",
        "sampling", "fragments", "init",
    }
    for key in doc:
        if key not in known:
            raise ConfigError(key, "unknown config field")
    if "env" not in doc:
        raise ConfigError("env", "required")
    env = doc["env"]

    kwargs: dict = {"env": env, "out": doc.get("out", "")}
    for name in ("episodes", "steps", "seed"):
        if name in doc:
            if not isinstance(doc[name], int):
                raise ConfigError(name, f"expected an integer, got {doc[name]!r}")
            kwargs[name] = doc[name]
    for name in ("m", "k"):
        if name in doc:
            if not isinstance(doc[name], list) or not all(isinstance(v, int) for v in doc[name]):
                raise ConfigError(name, "expected a list of integers")
            kwargs[name] = tuple(doc[name])
    for name in ("predictor", "norm"):
        if name in doc:
            kwargs[name] = doc[name]
    for name in ("eps", "falling_threshold"):
        if name in doc:
            kwargs[name] = float(doc[name])

    if "controller" in doc:
        c = dict(doc["controller"])
        if "replay" in c:
            from .envsim import action_from_name
            c["replay"] = tuple(action_from_name(n) for n in c["replay"])
        try:
            kwargs["controller"] = ControllerConfig(**c)
        except TypeError as exc:
            raise ConfigError("controller", str(exc)) from exc
    if "params" in doc:
        try:
            kwargs["params"] = params_from_dict(env, doc["params"])
        except TypeError as exc:
            raise ConfigError("params", str(exc)) from exc
    if "palette" in doc:
        try:
            kwargs["palette"] = palette_from_dict(doc["palette"])
        except (KeyError, TypeError) as exc:
            raise ConfigError("palette", str(exc)) from exc
    if "sampling" in doc:
        try:
            kwargs["sampling"] = SamplingParams(**doc["sampling"])
        except TypeError as exc:
            raise ConfigError("sampling", str(exc)) from exc
    if "fragments" in doc:
        try:
            kwargs["fragments"] = PromptFragments(**doc["fragments"])
        except TypeError as exc:
            raise ConfigError("fragments", str(exc)) from exc
    if "init" in doc:
        cls = CartPoleInitConfig if env == ENV_CARTPOLE else LanderInitConfig
        fields = {f.name for f in dataclasses.fields(cls)}
        init_kwargs = {}
        for key, value in doc["init"].items():
            if key not in fields:
                raise ConfigError(f"init.{key}", "unknown init field")
            init_kwargs[key] = value if key == "p_unsafe" else _range_pair(f"init.{key}", value)
        kwargs["init"] = cls(**init_kwargs)

    return RunConfig(**kwargs).resolved()


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("<file>", f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)


def _config_fingerprint(cfg: RunConfig) -> str:
    import hashlib

    blob = json.dumps({
        "env": cfg.env, "episodes": cfg.episodes, "steps": cfg.steps, "seed": cfg.seed,
        "m": list(cfg.m), "k": list(cfg.k), "predictor": cfg.predictor, "norm": cfg.norm,
        "eps": cfg.eps, "controller": cfg.controller.describe(),
        "params": params_to_dict(cfg.params), "palette": palette_to_dict(cfg.palette),
    }, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# --- generate -----------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> Path:
    """Write cfg.episodes seeded episodes under cfg.out; idempotent per seed."""
    cfg = cfg.resolved()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(cfg.episodes):
        rng = np.random.default_rng((cfg.seed, i))
        init = sample_init(cfg.env, rng, cfg.init)
        controller = cfg.controller
        if controller.kind == "random":
            controller = replace(controller, seed=cfg.seed * 1_000_003 + i)
        ep = rollout(init, controller, cfg.steps, cfg.params, seed=i, palette=cfg.palette)
        save_episode(ep, out / f"ep{i:05d}")
    manifest = {
        "schema": "corpus/1",
        "env": cfg.env,
        "episodes": cfg.episodes,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "controller": cfg.controller.describe(),
        "palette_sha256": cfg.palette.sha256(),
        "config_sha256": _config_fingerprint(cfg),
    }
    (out / "corpus.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out


def load_corpus(corpus_dir: str | Path) -> tuple[dict, list[Episode]]:
    root = Path(corpus_dir)
    try:
        manifest = json.loads((root / "corpus.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise EpisodeFormatError(f"cannot read corpus manifest: {exc}") from exc
    episodes = [load_episode(root / f"ep{i:05d}") for i in range(int(manifest["episodes"]))]
    return manifest, episodes


# --- evaluate -----------------------------------------------------------------


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _make_predictor(predictor_id: str, episode: Episode, true_latents, llm_client):
    if predictor_id == "oracle":
        return OraclePredictor(episode.observations, true_latents)
    if predictor_id == "persistence":
        return predict_persistence
    if predictor_id == "constvel":
        return predict_const_velocity
    if predictor_id == "alwayssafe":
        # degenerate test-only predictor: the rollout runs persistence, and the
        # verdict below is forced to "safe" at every step
        return predict_persistence
    if predictor_id == "llm":
        return llm_client
    raise ConfigError("predictor", f"unknown predictor {predictor_id!r}")


def evaluate_corpus(cfg: RunConfig, episodes: Sequence[Episode],
                    save_trajectories_to: Path | None = None,
                    llm_endpoint: LlmEndpointConfig | None = None,
                    ) -> tuple[list[dict], list[dict]]:
    """Run the sweep; returns (records, errors) without touching disk.

    One record per episode x (m, k).  Metrics compare the horizon endpoint
    (step m+k); the safety verdict is the conjunction over steps m .. m+k.
    Failed windows land in the errors list and the run continues.
    """
    cfg = cfg.resolved()
    spec = default_safety(cfg.env)
    if cfg.env == ENV_LANDER:
        scale = cfg.params.world_size / cfg.params.width
        metric_cfg = MetricConfig(norm=cfg.norm, scale=scale)
    else:
        metric_cfg = MetricConfig(norm=cfg.norm, scale=1.0, angle_labels=("cart", "pole"))

    llm_client = None
    if cfg.predictor == "llm":
        llm_client = LlmClient(llm_endpoint or LlmEndpointConfig.from_env())

    records: list[dict] = []
    errors: list[dict] = []
    try:
        for idx, ep in enumerate(episodes):
            true_latents = [extract_latent(obs, cfg.palette, t)
                            for t, obs in enumerate(ep.observations)]
            predictor = _make_predictor(cfg.predictor, ep, true_latents, llm_client)
            for m in cfg.m:
                for k in cfg.k:
                    try:
                        records.append(_evaluate_window(
                            cfg, ep, idx, m, k, predictor, true_latents,
                            spec, metric_cfg, save_trajectories_to,
                        ))
                    except FwmError as exc:
                        errors.append({
                            "episode": idx, "m": m, "k": k,
                            "error": type(exc).__name__, "message": str(exc),
                        })
    finally:
        if llm_client is not None:
            llm_client.close()
    return records, errors


def _evaluate_window(cfg: RunConfig, ep: Episode, idx: int, m: int, k: int,
                     predictor, true_latents, spec, metric_cfg,
                     save_trajectories_to: Path | None) -> dict:
    traj = closed_loop_rollout(
        ep, m, predictor, k, cfg.controller,
        eps=cfg.eps, fragments=cfg.fragments, sampling=cfg.sampling,
        palette=cfg.palette, params=cfg.params,
    )
    rep = report(true_latents[m + k], traj.full_latents[-1],
                 ep.observations[m + k], traj.observations[-1], metric_cfg)
    verdict = horizon_verdict(
        ep.states[m:m + k + 1],
        [traj.anchor_latent, *traj.full_latents],
        spec, k, m,
    )
    if cfg.predictor == "alwayssafe":
        verdict = SafetyVerdict(
            predicted_safe=True, actual_safe=verdict.actual_safe,
            per_step_predicted=(True,) * (k + 1),
            per_step_actual=verdict.per_step_actual, k=k, m=m,
        )
    regime = None
    if cfg.env == ENV_CARTPOLE:
        probe = ep.states[m + 1].pole_angle
        regime = "falling" if abs(probe) > cfg.falling_threshold else "upright"

    if save_trajectories_to is not None:
        save_predicted_trajectory(
            traj, ep, save_trajectories_to / f"ep{idx:05d}" / f"m{m}_k{k}")

    return {
        "episode": idx,
        "seed": ep.seed,
        "m": m,
        "k": k,
        "regime": regime,
        "kept": list(traj.kept_labels),
        "cd": {label: rep.per_object_cd[label] for label in sorted(rep.per_object_cd)},
        "axis_error": {label: list(rep.per_object_axis_error[label])
                       for label in sorted(rep.per_object_axis_error)},
        "mse": rep.mse,
        "ssim": rep.ssim,
        "angle_error_deg": rep.angle_error_deg,
        "predicted_safe": verdict.predicted_safe,
        "actual_safe": verdict.actual_safe,
        "per_step_predicted": list(verdict.per_step_predicted),
        "per_step_actual": list(verdict.per_step_actual),
        "attempts": sum(traj.attempts),
    }


def cmd_evaluate(cfg: RunConfig, corpus_dir: str | Path,
                 save_trajectories: bool = False,
                 llm_endpoint: LlmEndpointConfig | None = None) -> tuple[Path, int]:
    """Evaluate a corpus and write results; returns (results path, error count)."""
    cfg = cfg.resolved()
    manifest, episodes = load_corpus(corpus_dir)
    if manifest["env"] != cfg.env:
        raise ConfigError("env", f"corpus is {manifest['env']!r}, config says {cfg.env!r}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    traj_dir = out / "predicted" if save_trajectories else None

    records, errors = evaluate_corpus(cfg, episodes, traj_dir, llm_endpoint)

    header = {
        "schema": RESULTS_SCHEMA,
        "env": cfg.env,
        "predictor": cfg.predictor,
        "norm": cfg.norm,
        "seed": cfg.seed,
        "episodes": len(episodes),
        "m": list(cfg.m),
        "k": list(cfg.k),
        "corpus": str(corpus_dir),
        "config_sha256": _config_fingerprint(cfg),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    results_path = out / "results.jsonl"
    with results_path.open("w") as fh:
        fh.write(_canonical_json(header) + "\n")
        for rec in records:
            fh.write(_canonical_json(rec) + "\n")
    errors_path = out / "errors.jsonl"
    if errors:
        with errors_path.open("w") as fh:
            for err in errors:
                fh.write(_canonical_json(err) + "\n")
    elif errors_path.exists():
        errors_path.unlink()
    return results_path, len(errors)


# --- report -------------------------------------------------------------------


def parse_results(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise EpisodeFormatError(f"results file {path} is empty")
    header = json.loads(lines[0])
    if header.get("schema") != RESULTS_SCHEMA:
        raise EpisodeFormatError(f"unknown results schema in {path}")
    return header, [json.loads(line) for line in lines[1:]]


def reserialize_results(header: dict, records: list[dict]) -> str:
    return "\n".join([_canonical_json(header)] + [_canonical_json(r) for r in records]) + "\n"


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def _fmt(value, digits: int = 4) -> str:
    return "—" if value is None else f"{value:.{digits}f}"


def _verdict_from_record(rec: dict) -> SafetyVerdict:
    return SafetyVerdict(
        predicted_safe=bool(rec["predicted_safe"]),
        actual_safe=bool(rec["actual_safe"]),
        per_step_predicted=tuple(rec["per_step_predicted"]),
        per_step_actual=tuple(rec["per_step_actual"]),
        k=rec["k"], m=rec["m"],
    )


def summarize(header: dict, records: list[dict]) -> dict:
    """Aggregate records into {(predictor, m, k, regime): cell} means."""
    cells: dict[tuple, dict] = {}
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        key = (header["predictor"], rec["m"], rec["k"], rec.get("regime"))
        groups.setdefault(key, []).append(rec)
    for key, recs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], str(kv[0][3]))):
        stats = confusion_stats([_verdict_from_record(r) for r in recs])
        labels = sorted({label for r in recs for label in r["cd"]})
        cells[key] = {
            "count": len(recs),
            "cd": {label: _mean([r["cd"].get(label) for r in recs]) for label in labels},
            "axis_error": {
                label: [_mean([r["axis_error"][label][0] for r in recs if label in r["axis_error"]]),
                        _mean([r["axis_error"][label][1] for r in recs if label in r["axis_error"]])]
                for label in labels
            },
            "mse": _mean([r["mse"] for r in recs]),
            "ssim": _mean([r["ssim"] for r in recs]),
            "angle_error_deg": _mean([r["angle_error_deg"] for r in recs]),
            "f1": stats.f1,
            "fpr": stats.fpr,
            "counts": {"tp": stats.tp, "fp": stats.fp, "fn": stats.fn, "tn": stats.tn},
        }
    return cells


def _table(rows: list[tuple], col_keys: list, cell_fn) -> str:
    header_cells = ["predictor", "m", "regime"] + [f"k={k}" for k in col_keys]
    lines = []
    widths = [max(len(h), 12) for h in header_cells]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header_cells, widths)))
    for row_key, row_cells in rows:
        predictor, m, regime = row_key
        cells = [predictor, str(m), regime or "-"] + [cell_fn(row_cells.get(k)) for k in col_keys]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def render_tables(summaries: dict[tuple, dict]) -> dict[str, str]:
    """Build text tables keyed by metric name from merged summaries."""
    ks = sorted({key[2] for key in summaries})
    row_keys = sorted({(key[0], key[1], key[3]) for key in summaries},
                      key=lambda rk: (rk[0], rk[1], str(rk[2])))
    rows: list[tuple] = []
    for rk in row_keys:
        row_cells = {}
        for k in ks:
            cell = summaries.get((rk[0], rk[1], k, rk[2]))
            if cell is not None:
                row_cells[k] = cell
        rows.append((rk, row_cells))

    def metric_table(pick):
        return _table(rows, ks, lambda cell: _fmt(pick(cell)) if cell else "—")

    labels = sorted({label for cell in summaries.values() for label in cell["cd"]})
    tables = {}
    for label in labels:
        tables[f"cd_{label}"] = metric_table(lambda c, lab=label: c["cd"].get(lab))
    if any(cell["angle_error_deg"] is not None for cell in summaries.values()):
        tables["angle_mae_deg"] = metric_table(lambda c: c["angle_error_deg"])
    tables["mse"] = metric_table(lambda c: c["mse"])
    tables["ssim"] = metric_table(lambda c: c["ssim"])
    tables["f1"] = metric_table(lambda c: c["f1"])
    tables["fpr"] = metric_table(lambda c: c["fpr"])
    return tables


def write_csv(summaries: dict[tuple, dict], path: Path) -> None:
    import csv

    labels = sorted({label for cell in summaries.values() for label in cell["cd"]})
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["predictor", "m", "k", "regime", "count"]
            + [f"cd_{label}" for label in labels]
            + ["mse", "ssim", "angle_mae_deg", "f1", "fpr", "tp", "fp", "fn", "tn"]
        )
        for (predictor, m, k, regime), cell in summaries.items():
            writer.writerow(
                [predictor, m, k, regime or "", cell["count"]]
                + [cell["cd"].get(label) for label in labels]
                + [cell["mse"], cell["ssim"], cell["angle_error_deg"],
                   cell["f1"], cell["fpr"],
                   cell["counts"]["tp"], cell["counts"]["fp"],
                   cell["counts"]["fn"], cell["counts"]["tn"]]
            )


def _write_strips(results_header: dict, out_dir: Path, strips: int) -> list[Path]:
    """Render true-vs-predicted frame strips for the first few episodes.

    Requires the evaluate run to have saved predicted trajectories; silently
    returns an empty list when they are absent.
    """
    from PIL import Image

    corpus_dir = Path(results_header["corpus"])
    predicted_root = out_dir / "predicted"
    if not predicted_root.exists():
        return []
    written: list[Path] = []
    strips_dir = out_dir / "strips"
    for ep_dir in sorted(predicted_root.iterdir())[:strips]:
        episode = load_episode(corpus_dir / ep_dir.name)
        for traj_dir in sorted(p for p in ep_dir.iterdir() if p.is_dir()):
            manifest = json.loads((traj_dir / "manifest.json").read_text())
            start, length = int(manifest["start_time"]), int(manifest["length"])
            true_frames = [episode.observations[t].pixels
                           for t in range(start + 1, start + length + 1)]
            pred_frames = []
            for i in range(length):
                frame = traj_dir / "frames" / f"frame_{i:05d}.png"
                pred_frames.append(np.asarray(Image.open(frame).convert("RGB"), dtype=np.uint8))
            top = np.concatenate(true_frames, axis=1)
            bottom = np.concatenate(pred_frames, axis=1)
            grid = np.concatenate([top, bottom], axis=0)
            strips_dir.mkdir(parents=True, exist_ok=True)
            out_path = strips_dir / f"{ep_dir.name}_{traj_dir.name}.png"
            Image.fromarray(grid, mode="RGB").save(out_path, format="PNG")
            written.append(out_path)
    return written


def cmd_report(results_paths: Sequence[str | Path], out_dir: str | Path,
               strips: int = 0) -> dict[str, str]:
    """Aggregate one or more results files into tables; returns the tables."""
    if not results_paths:
        raise ConfigError("results", "at least one results file is required")
    merged: dict[tuple, dict] = {}
    headers = []
    for path in results_paths:
        header, records = parse_results(path)
        if not records:
            raise EpisodeFormatError(f"results file {path} has no records")
        headers.append(header)
        merged.update(summarize(header, records))
    tables = render_tables(merged)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = "\n\n".join(f"== {name} ==\n{table}" for name, table in tables.items()) + "\n"
    (out / "tables.txt").write_text(text)
    write_csv(merged, out / "summary.csv")
    if strips > 0:
        for header in headers:
            _write_strips(header, Path(header.get("out", out)), strips)
    return tables


# --- argparse wiring ------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwm",
        description="Object-centric surrogate world model harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--env", choices=[ENV_CARTPOLE, ENV_LANDER])
        p.add_argument("--episodes", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--m", type=int, action="append",
                       help="input length (repeatable)")
        p.add_argument("--k", type=int, action="append",
                       help="prediction horizon (repeatable)")
        p.add_argument("--predictor", choices=list(PREDICTOR_IDS))
        p.add_argument("--norm", choices=["l1", "l2"])
        p.add_argument("--out", type=Path)

    gen = sub.add_parser("generate", help="write a seeded episode corpus")
    add_common(gen)

    ev = sub.add_parser("evaluate", help="sweep (m, k) over a corpus")
    add_common(ev)
    ev.add_argument("--corpus", type=Path, required=True)
    ev.add_argument("--save-trajectories", action="store_true",
                    help="persist predicted trajectories for frame strips")

    rep = sub.add_parser("report", help="aggregate results into tables")
    rep.add_argument("--results", type=Path, action="append", required=True,
                     help="results.jsonl path (repeatable)")
    rep.add_argument("--out", type=Path, required=True)
    rep.add_argument("--strips", type=int, default=0,
                     help="write true-vs-predicted strips for the first N episodes")
    return parser


def _merge_cli(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    for name in ("env", "episodes", "steps", "seed", "predictor", "norm"):
        value = getattr(args, name, None)
        if value is not None:
            doc[name] = value
    if getattr(args, "m", None):
        doc["m"] = args.m
    if getattr(args, "k", None):
        doc["k"] = args.k
    if getattr(args, "out", None):
        doc["out"] = str(args.out)
    return config_from_dict(doc)


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            cfg = _merge_cli(args)
            out = cmd_generate(cfg)
            print(f"wrote {cfg.episodes} episodes to {out}")
            return 0
        if args.command == "evaluate":
            cfg = _merge_cli(args)
            results_path, n_errors = cmd_evaluate(
                cfg, args.corpus, save_trajectories=args.save_trajectories)
            print(f"wrote {results_path} ({n_errors} failed windows)")
            return 1 if n_errors else 0
        if args.command == "report":
            tables = cmd_report(args.results, args.out, strips=args.strips)
            for name, table in tables.items():
                print(f"== {name} ==")
                print(table)
                print()
            return 0
    except FwmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

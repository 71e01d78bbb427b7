"""Surrogate dynamics predictors.

The centerpiece is the prompt-driven language-model predictor: past latent
states and actions are assembled into a text prompt from three fragments
(instruction, per-step assembly line, prediction order), sent to a
chat-completions endpoint with temperature / top-p sampling, and the reply
is scanned for a bracketed list of exactly 2*K numbers.

Deterministic predictors (persistence, constant velocity, and a ground-truth
oracle) share the same request/prediction types so the evaluation harness
can swap them freely.  Only `predict_llm` has external effects.
"""

from __future__ import annotations

import math
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from .envsim import Action
from .errors import (
    ContractViolationError,
    LlmAuthError,
    LlmHttpError,
    LlmRetriesExhaustedError,
    LlmTransportError,
    OracleError,
    ParseError,
    PromptError,
)
from .render import Observation
from .segment import Centroid, LatentState

DEFAULT_R1 = ("Suppose I have a sequence of actions and states of a system, "
              "please predict the next step's state given the following information.")
DEFAULT_R2 = "The time, states and the action for this step are:"
DEFAULT_R3 = ("Can you predict the state for the next moment? "
              "Please only give me your prediction values as a list.")


@dataclass(frozen=True)
class PromptFragments:
    r1: str = DEFAULT_R1
    r2: str = DEFAULT_R2
    r3: str = DEFAULT_R3

    def __post_init__(self):
        if not self.r3:
            raise ContractViolationError("r3 must be non-empty: it carries the output-format contract")


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.7
    top_p: float = 0.9

    def __post_init__(self):
        if self.temperature < 0:
            raise ContractViolationError("temperature must be nonnegative")
        if not 0.0 < self.top_p <= 1.0:
            raise ContractViolationError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class PredictionRequest:
    """Input window for one prediction: m+1 latents (post static filtering)
    and the m+1 actions taken at those steps."""

    latents: tuple[LatentState, ...]
    actions: tuple[Action, ...]
    fragments: PromptFragments = PromptFragments()
    sampling: SamplingParams = SamplingParams()

    def __post_init__(self):
        if len(self.latents) != len(self.actions) or not self.latents:
            raise ContractViolationError(
                f"request needs equal nonzero latent/action counts, got "
                f"{len(self.latents)}/{len(self.actions)}"
            )
        ref = self.latents[0].labels
        for lat in self.latents[1:]:
            if lat.labels != ref:
                raise ContractViolationError("request latents must share one ordered label set")

    @property
    def m(self) -> int:
        return len(self.latents) - 1

    @property
    def labels(self) -> tuple[str, ...]:
        return self.latents[0].labels

    @property
    def next_time(self) -> int:
        return self.latents[-1].time_index + 1


@dataclass
class Prediction:
    """One predicted latent (and, for the oracle, the true next frame)."""

    latent: LatentState
    raw_text: str = ""
    attempts: int = 1
    fallback: bool = False  # constant-velocity fell back to persistence (m = 0)
    observation: Observation | None = None


Predictor = Callable[[PredictionRequest], Prediction]


def assemble_prompt(req: PredictionRequest) -> tuple[str, list[float]]:
    """Build the full prompt and the flattened input-state vector.

    Layout: the instruction fragment, one assembly line per timestep holding
    the step index, every object as "(label: cx, cy)" with 2-decimal fixed
    formatting, and that step's action name, then the prediction fragment
    with an explicit arity statement.  The action appears once per timestep,
    not once per object.
    """
    if not req.labels:
        raise PromptError("nothing to predict: every object was filtered out")
    lines = [req.fragments.r1]
    flat: list[float] = []
    for latent, action in zip(req.latents, req.actions):
        parts = ", ".join(f"({label}: {c.cx:.2f}, {c.cy:.2f})" for label, c in latent.entries)
        lines.append(f"{req.fragments.r2} {latent.time_index}, {parts}, {action.value}")
        for _, c in latent.entries:
            flat.extend((c.cx, c.cy))
    arity = 2 * len(req.labels)
    lines.append(f"{req.fragments.r3} Return exactly {arity} numbers as a list.")
    return "\n".join(lines), flat


_BRACKETED = re.compile(r"\[([^\[\]]*)\]")


def parse_prediction(text: str, expected_arity: int, labels: Sequence[str],
                     time_index: int = 0) -> LatentState:
    """Extract the first bracketed numeric list of the expected arity.

    Bracketed groups that are not purely comma-separated numbers are skipped
    (the model may emit chatty text); the first group whose arity matches
    decides -- non-finite values in it are an error, not a reason to keep
    scanning.  Values pair up as (cx, cy) in label order.
    """
    if expected_arity != 2 * len(labels):
        raise ContractViolationError(
            f"expected_arity {expected_arity} does not match 2*{len(labels)} labels"
        )
    arities_seen = []
    for body in _BRACKETED.findall(text):
        parts = [p.strip() for p in body.split(",")]
        try:
            values = [float(p) for p in parts]
        except ValueError:
            continue
        arities_seen.append(len(values))
        if len(values) != expected_arity:
            continue
        if not all(math.isfinite(v) for v in values):
            raise ParseError("prediction list contains non-finite values", raw_text=text)
        entries = tuple(
            (label, Centroid(values[2 * i], values[2 * i + 1]))
            for i, label in enumerate(labels)
        )
        return LatentState(time_index, entries)
    if arities_seen:
        raise ParseError(
            f"no bracketed list of {expected_arity} numbers (saw arities {arities_seen})",
            raw_text=text,
        )
    raise ParseError("no bracketed numeric list found", raw_text=text)


# --- wire client --------------------------------------------------------------


@dataclass(frozen=True)
class LlmEndpointConfig:
    """Chat-completions endpoint. `url` is the full completions URL."""

    url: str
    api_key: str = ""
    model: str = "gpt-3.5-turbo"
    timeout: float = 30.0
    max_retries: int = 3      # total parse attempts per prediction
    max_concurrency: int = 4  # in-flight request bound

    @classmethod
    def from_env(cls, **overrides) -> "LlmEndpointConfig":
        url = overrides.pop("url", os.environ.get("FWM_LLM_ENDPOINT", ""))
        if not url:
            raise ContractViolationError("FWM_LLM_ENDPOINT is not set")
        return cls(
            url=url,
            api_key=overrides.pop("api_key", os.environ.get("FWM_LLM_API_KEY", "")),
            model=overrides.pop("model", os.environ.get("FWM_LLM_MODEL", "gpt-3.5-turbo")),
            **overrides,
        )


class LlmClient:
    """Thin chat-completions client with parse-failure retries.

    Wire shape: POST {"model", "messages": [{"role": "user", "content": prompt}],
    "temperature", "top_p"}; the reply text is choices[0].message.content.
    Parse failures retry the same prompt (the endpoint's sampling provides
    fresh randomness); transport and HTTP errors surface immediately.
    """

    def __init__(self, config: LlmEndpointConfig):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout)
        self._sem = threading.Semaphore(config.max_concurrency)

    def close(self) -> None:
        self._client.close()

    def _post(self, prompt: str, sampling: SamplingParams) -> str:
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
        }
        with self._sem:
            try:
                resp = self._client.post(self.config.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                raise LlmTransportError(f"transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise LlmAuthError(resp.status_code, resp.text)
        if not 200 <= resp.status_code < 300:
            raise LlmHttpError(resp.status_code, resp.text)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            # malformed envelope: treated as unparsable content, so it retries
            raise ParseError(f"malformed completion envelope: {exc}",
                             raw_text=resp.text) from exc

    def predict(self, req: PredictionRequest) -> Prediction:
        prompt, _ = assemble_prompt(req)
        arity = 2 * len(req.labels)
        last_text = ""
        for attempt in range(1, self.config.max_retries + 1):
            try:
                content = self._post(prompt, req.sampling)
            except ParseError as exc:
                last_text = exc.raw_text
                continue
            last_text = content
            try:
                latent = parse_prediction(content, arity, req.labels, req.next_time)
            except ParseError:
                continue
            return Prediction(latent=latent, raw_text=content, attempts=attempt)
        raise LlmRetriesExhaustedError(self.config.max_retries, last_text)

    def __call__(self, req: PredictionRequest) -> Prediction:
        return self.predict(req)


def predict_llm(req: PredictionRequest, endpoint: LlmEndpointConfig) -> Prediction:
    """One-shot convenience wrapper around LlmClient."""
    client = LlmClient(endpoint)
    try:
        return client.predict(req)
    finally:
        client.close()


# --- deterministic predictors --------------------------------------------------


def predict_persistence(req: PredictionRequest) -> Prediction:
    """Floor baseline: the last latent, unchanged."""
    last = req.latents[-1]
    return Prediction(latent=LatentState(req.next_time, last.entries))


def predict_const_velocity(req: PredictionRequest) -> Prediction:
    """Linear extrapolation from the final two latents.

    With a single input latent (m = 0) there is no velocity estimate; the
    prediction falls back to persistence and flags it.
    """
    if req.m < 1:
        pred = predict_persistence(req)
        pred.fallback = True
        return pred
    last, prev = req.latents[-1], req.latents[-2]
    entries = []
    for label, c in last.entries:
        p = prev.get(label)
        entries.append((label, Centroid(2.0 * c.cx - p.cx, 2.0 * c.cy - p.cy)))
    return Prediction(latent=LatentState(req.next_time, tuple(entries)))


class OraclePredictor:
    """Upper-bound predictor backed by the ground-truth continuation.

    Holds the true frames and latents of an episode; answers each request
    with the true next latent (restricted to the request's label set) and
    the true next frame, so downstream evaluation of a perfect predictor is
    exact end-to-end.
    """

    def __init__(self, observations: Sequence[Observation], latents: Sequence[LatentState]):
        self._by_time = {lat.time_index: (obs, lat) for obs, lat in zip(observations, latents)}

    def __call__(self, req: PredictionRequest) -> Prediction:
        t = req.next_time
        if t not in self._by_time:
            raise OracleError(f"no ground truth recorded for step {t}")
        obs, latent = self._by_time[t]
        return Prediction(latent=latent.restrict(req.labels), observation=obs)

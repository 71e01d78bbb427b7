"""Safety predicates and horizon-k safety verdicts with F1/FPR scoring.

The cart-pole is safe while the pole stays strictly within pi/4 of vertical;
the lander is safe while its horizontal position stays strictly inside the
(8, 12) landing corridor.  Boundary states are unsafe.

A horizon verdict is the conjunction of the per-step predicate over steps
t+m .. t+m+k -- all intermediate states count, not only the final one.  The
positive class for F1/FPR is "safe": a false positive is the dangerous case
of declaring an unsafe future safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from .envsim import CartPoleState, LanderState, SimState
from .errors import ContractViolationError, DomainError, SafetyEvalError
from .metrics import angle_from_centroids
from .segment import LatentState


@dataclass(frozen=True)
class CartPoleSafety:
    angle_limit: float = math.pi / 4  # radians

    def __post_init__(self):
        if self.angle_limit <= 0:
            raise ContractViolationError("angle_limit must be positive")


@dataclass(frozen=True)
class LanderSafety:
    x_min: float = 8.0
    x_max: float = 12.0
    # frame geometry for latent-based evaluation (pixel -> world units)
    world_size: float = 20.0
    width: int = 96

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ContractViolationError("x_min must be < x_max")


SafetySpec = Union[CartPoleSafety, LanderSafety]


def default_safety(env: str) -> SafetySpec:
    return CartPoleSafety() if env == "cartpole" else LanderSafety()


def phi(state_or_latent: SimState | LatentState, spec: SafetySpec) -> bool:
    """Per-state safety predicate (strict inequalities at the thresholds).

    Accepts a true simulator state or a latent state; for latents the angle /
    position is recovered from centroids.  A missing required object raises
    SafetyEvalError -- safety is never silently assumed either way.
    """
    if isinstance(spec, CartPoleSafety):
        if isinstance(state_or_latent, CartPoleState):
            return abs(state_or_latent.pole_angle) < spec.angle_limit
        if isinstance(state_or_latent, LatentState):
            cart = state_or_latent.get("cart")
            pole = state_or_latent.get("pole")
            if cart is None or pole is None:
                raise SafetyEvalError("cart or pole missing from latent; cannot evaluate safety")
            try:
                angle = math.radians(angle_from_centroids(cart, pole))
            except DomainError as exc:
                raise SafetyEvalError(str(exc)) from exc
            return abs(angle) < spec.angle_limit
        raise ContractViolationError("cartpole safety spec got a lander input")

    if isinstance(state_or_latent, LanderState):
        return spec.x_min < state_or_latent.px < spec.x_max
    if isinstance(state_or_latent, LatentState):
        lander = state_or_latent.get("lander")
        if lander is None:
            raise SafetyEvalError("lander missing from latent; cannot evaluate safety")
        d_x = (lander.cx + 0.5) * spec.world_size / spec.width
        return spec.x_min < d_x < spec.x_max
    raise ContractViolationError("lander safety spec got a cartpole input")


@dataclass(frozen=True)
class SafetyVerdict:
    """Horizon-k verdict: conjunction over steps t+m .. t+m+k (k+1 entries)."""

    predicted_safe: bool
    actual_safe: bool
    per_step_predicted: tuple[bool, ...]
    per_step_actual: tuple[bool, ...]
    k: int
    m: int


def horizon_verdict(true_states: Sequence[SimState],
                    predicted_latents: Sequence[LatentState],
                    spec: SafetySpec, k: int, m: int) -> SafetyVerdict:
    """Score one prediction window.

    `true_states` are the ground-truth states at steps t+m .. t+m+k and
    `predicted_latents` the corresponding latent states (the first entry is
    the latent of the last observed frame, then k predicted steps).  Any
    per-step evaluation failure propagates as SafetyEvalError, poisoning the
    verdict; callers exclude poisoned windows from aggregation.
    """
    if len(true_states) != k + 1 or len(predicted_latents) != k + 1:
        raise ContractViolationError(
            f"horizon k={k} needs k+1 steps, got {len(true_states)} true / "
            f"{len(predicted_latents)} predicted"
        )
    actual = tuple(phi(s, spec) for s in true_states)
    predicted = tuple(phi(z, spec) for z in predicted_latents)
    return SafetyVerdict(
        predicted_safe=all(predicted),
        actual_safe=all(actual),
        per_step_predicted=predicted,
        per_step_actual=actual,
        k=k,
        m=m,
    )


@dataclass(frozen=True)
class ConfusionStats:
    """F1/FPR with positive class = "safe"; degenerate denominators yield None."""

    tp: int
    fp: int
    fn: int
    tn: int
    f1: float | None
    fpr: float | None


def confusion_stats(verdicts: Sequence[SafetyVerdict]) -> ConfusionStats:
    if not verdicts:
        raise ContractViolationError("confusion_stats needs at least one verdict")
    tp = sum(1 for v in verdicts if v.predicted_safe and v.actual_safe)
    fp = sum(1 for v in verdicts if v.predicted_safe and not v.actual_safe)
    fn = sum(1 for v in verdicts if not v.predicted_safe and v.actual_safe)
    tn = sum(1 for v in verdicts if not v.predicted_safe and not v.actual_safe)
    f1 = (2.0 * tp / (2 * tp + fp + fn)) if (2 * tp + fp + fn) > 0 else None
    fpr = (fp / (fp + tn)) if (fp + tn) > 0 else None
    return ConfusionStats(tp=tp, fp=fp, fn=fn, tn=tn, f1=f1, fpr=fpr)

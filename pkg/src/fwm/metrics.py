"""State- and image-prediction metrics: centroid distance, pole angle from
centroids, pixel MSE, and single-window (global) SSIM.

SSIM here uses one global window -- mean/variance/covariance over all pixels
of the luma image -- rather than the common sliding-window variant.  MSE and
SSIM operate on intensities normalized to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, DomainError, LabelMismatchError
from .render import Observation
from .segment import Centroid, LatentState

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # Rec. 601


def centroid_distance(a: Centroid, b: Centroid, norm: str = "l2") -> float:
    """Norm of the centroid difference; `norm` is "l1" or "l2"."""
    dx, dy = a.cx - b.cx, a.cy - b.cy
    if norm == "l2":
        return math.hypot(dx, dy)
    if norm == "l1":
        return abs(dx) + abs(dy)
    raise ContractViolationError(f"unknown norm {norm!r}")


def image_mse(y: Observation, y_hat: Observation) -> float:
    """Mean squared error over all pixels and channels, intensities in [0, 1]."""
    if y.pixels.shape != y_hat.pixels.shape:
        raise ContractViolationError(
            f"frame shapes differ: {y.pixels.shape} vs {y_hat.pixels.shape}"
        )
    a = y.pixels.astype(np.float64) / 255.0
    b = y_hat.pixels.astype(np.float64) / 255.0
    return float(np.mean((a - b) ** 2))


def _luma(obs: Observation) -> np.ndarray:
    w = np.asarray(LUMA_WEIGHTS)
    return (obs.pixels.astype(np.float64) / 255.0) @ w


def ssim_global(y: Observation, y_hat: Observation) -> float:
    """Single-window SSIM on [0, 1] luma with C1=0.01^2, C2=0.03^2.

    Means, variances, and the covariance are taken over all pixels at once
    (population statistics), so the result is one scalar in [-1, 1].
    """
    if y.pixels.shape != y_hat.pixels.shape:
        raise ContractViolationError(
            f"frame shapes differ: {y.pixels.shape} vs {y_hat.pixels.shape}"
        )
    a, b = _luma(y), _luma(y_hat)
    mu_a, mu_b = float(a.mean()), float(b.mean())
    da, db = a - mu_a, b - mu_b
    # variances through the covariance path so ssim(y, y) is exactly 1
    cov = float((da * db).mean())
    var_a = float((da * da).mean())
    var_b = float((db * db).mean())
    return ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)) / (
        (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    )


def angle_from_centroids(cart: Centroid, pole: Centroid) -> float:
    """Pole angle in degrees from the cart->pole centroid vector.

    0 means the pole centroid is directly above the cart centroid (image y
    grows downward); positive is clockwise on screen; range (-180, 180].
    """
    dx = pole.cx - cart.cx
    dy = pole.cy - cart.cy
    if dx == 0.0 and dy == 0.0:
        raise DomainError("coincident centroids: angle undefined")
    return math.degrees(math.atan2(dx, -dy))


@dataclass(frozen=True)
class MetricConfig:
    norm: str = "l2"
    scale: float = 1.0  # multiplies pixel-space CDs (e.g. world-units-per-pixel)
    angle_labels: tuple[str, str] | None = None  # (reference, tip), e.g. ("cart", "pole")


@dataclass
class MetricReport:
    """Per-step prediction quality: per-object CDs plus image-level MSE/SSIM."""

    per_object_cd: dict[str, float]
    per_object_axis_error: dict[str, tuple[float, float]]
    mse: float
    ssim: float
    angle_error_deg: float | None
    norm_used: str
    scale: float


def report(true_latent: LatentState, pred_latent: LatentState,
           true_obs: Observation, pred_obs: Observation,
           cfg: MetricConfig = MetricConfig()) -> MetricReport:
    """Score one predicted step against ground truth."""
    if set(true_latent.labels) != set(pred_latent.labels):
        diff = set(true_latent.labels) ^ set(pred_latent.labels)
        raise LabelMismatchError(f"latent label sets differ: {sorted(diff)}",
                                 tuple(sorted(diff)))
    cds: dict[str, float] = {}
    axis: dict[str, tuple[float, float]] = {}
    for label in true_latent.labels:
        t, p = true_latent.get(label), pred_latent.get(label)
        cds[label] = centroid_distance(t, p, cfg.norm) * cfg.scale
        axis[label] = (abs(p.cx - t.cx) * cfg.scale, abs(p.cy - t.cy) * cfg.scale)

    angle_error = None
    if cfg.angle_labels is not None:
        ref, tip = cfg.angle_labels
        if all(lat.get(l) is not None for lat in (true_latent, pred_latent) for l in (ref, tip)):
            true_angle = angle_from_centroids(true_latent.get(ref), true_latent.get(tip))
            pred_angle = angle_from_centroids(pred_latent.get(ref), pred_latent.get(tip))
            angle_error = abs(pred_angle - true_angle)
            if angle_error > 180.0:  # shortest arc
                angle_error = 360.0 - angle_error

    return MetricReport(
        per_object_cd=cds,
        per_object_axis_error=axis,
        mse=image_mse(true_obs, pred_obs),
        ssim=ssim_global(true_obs, pred_obs),
        angle_error_deg=angle_error,
        norm_used=cfg.norm,
        scale=cfg.scale,
    )

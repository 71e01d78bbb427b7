"""Exact-color segmentation, centroid extraction, and static-object filtering.

Rendered frames use one solid color per object, so segmentation is an exact
color match: one boolean mask per palette color present in the frame, masks
pairwise disjoint and jointly covering the frame.  Masks produced offline by
a real segmentation network can be imported through the JSON mask container
instead (`import_masks`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LabelMismatchError, MaskFormatError, SegmentationError
from .render import Observation, Palette


@dataclass(eq=False)
class SegmentMask:
    """One object's boolean pixel mask (True = object pixel)."""

    label: str
    mask: np.ndarray

    def __post_init__(self):
        if self.mask.ndim != 2 or self.mask.dtype != np.bool_:
            raise MaskFormatError(f"mask for {self.label!r} must be a 2-D boolean array")
        if not self.mask.any():
            raise SegmentationError(f"mask for {self.label!r} has no true pixels")


@dataclass(frozen=True)
class Centroid:
    """Continuous pixel-space center of mass (cx = column axis, cy = row axis)."""

    cx: float
    cy: float


@dataclass(frozen=True)
class LatentState:
    """Ordered (label, centroid) entries for one frame; the interpretable latent."""

    time_index: int
    entries: tuple[tuple[str, Centroid], ...]

    def __post_init__(self):
        labels = [label for label, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise LabelMismatchError("latent labels must be unique", tuple(labels))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.entries)

    def get(self, label: str) -> Centroid | None:
        for lab, c in self.entries:
            if lab == label:
                return c
        return None

    def restrict(self, labels: Sequence[str]) -> "LatentState":
        keep = set(labels)
        return LatentState(self.time_index,
                           tuple((l, c) for l, c in self.entries if l in keep))


def segment(obs: Observation, palette: Palette) -> list[SegmentMask]:
    """Split a frame into per-object masks by exact palette-color match.

    Raises SegmentationError naming the offending color if any pixel matches
    no palette color (guards against non-rendered inputs).
    """
    pixels = obs.pixels
    # one packed-int comparison per color instead of a 3-channel reduction
    key = (
        (pixels[..., 0].astype(np.int32) << 16)
        | (pixels[..., 1].astype(np.int32) << 8)
        | pixels[..., 2].astype(np.int32)
    )
    covered = np.zeros(pixels.shape[:2], dtype=bool)
    masks: list[SegmentMask] = []
    for label, (r, g, b) in palette.entries:
        m = key == ((r << 16) | (g << 8) | b)
        if m.any():
            masks.append(SegmentMask(label, m))
            covered |= m
    if not covered.all():
        i, j = np.argwhere(~covered)[0]
        bad = tuple(int(v) for v in pixels[i, j])
        raise SegmentationError(
            f"pixel ({i}, {j}) has color {bad} which is not in the palette", color=bad
        )
    return masks


def centroid(mask: SegmentMask) -> Centroid:
    """Center of mass of the true pixels (mean column index, mean row index)."""
    ys, xs = np.nonzero(mask.mask)
    if len(xs) == 0:
        raise SegmentationError(f"mask for {mask.label!r} is empty")
    return Centroid(float(xs.mean()), float(ys.mean()))


def extract_latent(obs: Observation, palette: Palette, time_index: int) -> LatentState:
    """Segment then take centroids, in canonical palette order."""
    masks = segment(obs, palette)
    return LatentState(time_index, tuple((m.label, centroid(m)) for m in masks))


def filter_static(latents: Sequence[LatentState], eps: float = 0.5
                  ) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split labels into (kept, dropped); dropped labels never moved.

    A label is dropped iff its centroid stays within `eps` pixels (per axis,
    max minus min over time) of its starting position -- i.e. it "did not
    change at any time" up to sub-pixel jitter.  Order follows the first
    latent.  Requires >= 2 latents with one consistent label set.
    """
    if len(latents) < 2:
        raise LabelMismatchError("filter_static needs at least 2 latents")
    ref = latents[0].labels
    for lat in latents[1:]:
        if set(lat.labels) != set(ref):
            diff = set(lat.labels) ^ set(ref)
            raise LabelMismatchError(
                f"inconsistent label sets across latents: {sorted(diff)}", tuple(sorted(diff))
            )
    kept, dropped = [], []
    for label in ref:
        cxs = [lat.get(label).cx for lat in latents]
        cys = [lat.get(label).cy for lat in latents]
        moved = max(max(cxs) - min(cxs), max(cys) - min(cys)) > eps
        (kept if moved else dropped).append(label)
    return tuple(kept), tuple(dropped)


# --- JSON mask container -----------------------------------------------------
#
# Schema (documented byte-exactly in the README):
#   {"format": "mask-container/1",
#    "masks": [{"label": str, "width": int, "height": int,
#               "rows": [[run, run, ...], ...]}]}
# Each rows[i] lists run lengths alternating False/True and starting with
# False; runs must sum to `width`, and there must be exactly `height` rows.


MASK_FORMAT = "mask-container/1"


def export_masks(masks: Sequence[SegmentMask], path: str | Path) -> None:
    """Write masks to the JSON mask container format."""
    out = []
    for m in masks:
        h, w = m.mask.shape
        rows = []
        for i in range(h):
            runs, current, count = [], False, 0
            for v in m.mask[i]:
                if bool(v) == current:
                    count += 1
                else:
                    runs.append(count)
                    current, count = bool(v), 1
            runs.append(count)
            rows.append(runs)
        out.append({"label": m.label, "width": w, "height": h, "rows": rows})
    Path(path).write_text(json.dumps({"format": MASK_FORMAT, "masks": out}, indent=1))


def import_masks(path: str | Path) -> list[SegmentMask]:
    """Load masks from the JSON mask container, validating dimensions."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MaskFormatError(f"cannot read mask container {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MASK_FORMAT:
        raise MaskFormatError(f"not a {MASK_FORMAT} container")
    masks = []
    for entry in doc.get("masks", []):
        try:
            label = entry["label"]
            width, height, rows = int(entry["width"]), int(entry["height"]), entry["rows"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MaskFormatError(f"malformed mask entry: {exc}") from exc
        if len(rows) != height:
            raise MaskFormatError(
                f"mask {label!r}: declared {height} rows but container has {len(rows)}"
            )
        grid = np.zeros((height, width), dtype=bool)
        for i, runs in enumerate(rows):
            if sum(runs) != width:
                raise MaskFormatError(
                    f"mask {label!r} row {i}: runs sum to {sum(runs)}, expected {width}"
                )
            pos, value = 0, False
            for run in runs:
                if run < 0:
                    raise MaskFormatError(f"mask {label!r} row {i}: negative run length")
                if value:
                    grid[i, pos:pos + run] = True
                pos += run
                value = not value
        if not grid.any():
            raise MaskFormatError(f"mask {label!r} has no true pixels")
        masks.append(SegmentMask(label, grid))
    return masks

"""Score-map post-processing, landmark detection, goal selection and dice evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    BadKernelSchedule,
    DimensionMismatch,
    EmptyCorpus,
    NoTraversableRegion,
    UnknownLabel,
)

BACKGROUND = "other"
DEFAULT_KERNELS = (9, 5, 3)
DEFAULT_CONFIDENCE_FLOOR = 0.4

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Per-pixel class scores, ``scores[c, row, col]``; ``labels[0]`` is the background."""

    labels: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 3 or scores.shape[0] != len(self.labels):
            raise ValueError(f"scores shape {scores.shape} does not match {len(self.labels)} labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")
        if self.height < 8 or self.width < 8:
            raise ValueError("score maps must be at least 8x8")
        if np.any(np.abs(scores.sum(axis=0) - 1.0) > 1e-6):
            raise ValueError("per-pixel scores must sum to 1")

    @property
    def height(self) -> int:
        return self.scores.shape[1]

    @property
    def width(self) -> int:
        return self.scores.shape[2]

    @classmethod
    def from_class_ids(cls, labels, class_ids, confidence=1.0) -> "ScoreMap":
        """One-hot scores softened to ``confidence`` with the rest spread uniformly."""
        labels = tuple(labels)
        ids = np.asarray(class_ids)
        n = len(labels)
        rest = (1.0 - confidence) / (n - 1) if n > 1 else 0.0
        scores = np.full((n,) + ids.shape, rest)
        np.put_along_axis(scores, ids[None].astype(np.intp), confidence, axis=0)
        return cls(labels, scores)


@dataclass(frozen=True, eq=False)
class LabelMask:
    labels: tuple[str, ...]
    class_ids: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        ids = np.asarray(self.class_ids)
        if ids.ndim != 2:
            raise ValueError("class_ids must be 2-D")
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.labels)):
            raise ValueError("class id out of range")
        object.__setattr__(self, "class_ids", ids.astype(np.uint8, copy=False))

    @property
    def height(self) -> int:
        return self.class_ids.shape[0]

    @property
    def width(self) -> int:
        return self.class_ids.shape[1]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(label) from None

    def pixels_of(self, label: str) -> np.ndarray:
        return self.class_ids == self.index(label)

    def __eq__(self, other):
        return (
            isinstance(other, LabelMask)
            and self.labels == other.labels
            and np.array_equal(self.class_ids, other.class_ids)
        )


@dataclass(frozen=True)
class Region:
    label: str
    pixel_count: int
    centroid: tuple[float, float]
    bbox: tuple[int, int, int, int]  # row_min, col_min, row_max, col_max (inclusive)


@dataclass(frozen=True)
class CoverageBinReport:
    label: str
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    dice_mean: tuple[float, ...]
    dice_variance: tuple[float, ...]

    def rows(self):
        for i, count in enumerate(self.counts):
            yield self.edges[i], self.edges[i + 1], count, self.dice_mean[i], self.dice_variance[i]


def argmax_mask(score_map: ScoreMap) -> LabelMask:
    # np.argmax returns the first maximal index, i.e. the lowest class id on ties.
    return LabelMask(score_map.labels, np.argmax(score_map.scores, axis=0))


def _check_schedule(kernels: Sequence[int], confidence_floor: float) -> None:
    if not kernels:
        raise BadKernelSchedule("empty kernel schedule")
    for k in kernels:
        if int(k) != k or k < 3 or k % 2 == 0:
            raise BadKernelSchedule(f"kernel sizes must be odd and >= 3, got {list(kernels)}")
    if any(b >= a for a, b in zip(kernels, kernels[1:])):
        raise BadKernelSchedule(f"kernel sizes must strictly decrease, got {list(kernels)}")
    if not 0.0 <= confidence_floor < 1.0:
        raise BadKernelSchedule(f"confidence floor must be in [0, 1), got {confidence_floor}")


def _box_sum(planes: np.ndarray, k: int) -> np.ndarray:
    """Sum over a k x k window, stride 1, edge-replicated borders, via an integral image."""
    r = k // 2
    padded = np.pad(planes, ((0, 0), (r, r), (r, r)), mode="edge")
    c, h, w = padded.shape
    integral = np.zeros((c, h + 1, w + 1))
    np.cumsum(padded, axis=1, out=integral[:, 1:, 1:])
    np.cumsum(integral[:, 1:, 1:], axis=2, out=integral[:, 1:, 1:])
    return integral[:, k:, k:] - integral[:, :-k, k:] - integral[:, k:, :-k] + integral[:, :-k, :-k]


def pool_scores(score_map: ScoreMap, kernels: Sequence[int] = DEFAULT_KERNELS) -> np.ndarray:
    """Cascade of average pools, largest window first.

    Window sums are kept unnormalised until the end so integer-valued inputs
    (hard one-hot maps) pool exactly and ties stay ties.
    """
    _check_schedule(kernels, 0.0)
    acc = score_map.scores
    scale = 1.0
    for k in kernels:
        acc = _box_sum(acc, k)
        scale *= k * k
    return acc / scale


def denoise(
    score_map: ScoreMap,
    kernels: Sequence[int] = DEFAULT_KERNELS,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> LabelMask:
    _check_schedule(kernels, confidence_floor)
    pooled = pool_scores(score_map, kernels)
    ids = np.argmax(pooled, axis=0)
    if confidence_floor > 0:
        ids[pooled.max(axis=0) < confidence_floor] = 0
    return LabelMask(score_map.labels, ids)


def _check_pair(a: LabelMask, b: LabelMask) -> None:
    if a.class_ids.shape != b.class_ids.shape:
        raise DimensionMismatch(f"{a.class_ids.shape} vs {b.class_ids.shape}")
    if a.labels != b.labels:
        raise DimensionMismatch("label sets differ")


def dice(a: LabelMask, b: LabelMask, label: str) -> float:
    _check_pair(a, b)
    pa = a.pixels_of(label)
    pb = b.pixels_of(label)
    total = int(pa.sum()) + int(pb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pa, pb).sum()) / total


def coverage(mask: LabelMask, label: str) -> float:
    return float(mask.pixels_of(label).sum()) / mask.class_ids.size


COVERAGE_EDGES = tuple(i / 10 for i in range(11))


def coverage_bin(fraction: float) -> int:
    """Equal-width bin index over [0, 1]; coverage 1.0 falls in the last bin."""
    for i in range(9, 0, -1):
        if fraction >= COVERAGE_EDGES[i]:
            return i
    return 0


def coverage_report(pairs, label: str) -> CoverageBinReport:
    pairs = list(pairs)
    if not pairs:
        raise EmptyCorpus("no mask pairs to evaluate")
    shape = pairs[0][0].class_ids.shape
    per_bin: list[list[float]] = [[] for _ in range(10)]
    for truth, pred in pairs:
        if truth.class_ids.shape != shape:
            raise DimensionMismatch("corpus masks have inconsistent dimensions")
        per_bin[coverage_bin(coverage(truth, label))].append(dice(truth, pred, label))
    means, variances = [], []
    for values in per_bin:
        if values:
            arr = np.asarray(values)
            means.append(float(arr.mean()))
            variances.append(float(arr.var()))
        else:
            means.append(math.nan)
            variances.append(math.nan)
    return CoverageBinReport(
        label, COVERAGE_EDGES, tuple(len(v) for v in per_bin), tuple(means), tuple(variances)
    )


def components(binary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """4-connected components numbered in row-major order of first pixel.

    Returns the label image (0 = none) and pixel counts indexed by component id.
    """
    labelled, n = ndimage.label(binary, structure=_FOUR_CONNECTED)
    return labelled, np.bincount(labelled.ravel(), minlength=n + 1)


def _largest(binary: np.ndarray):
    labelled, sizes = components(binary)
    if sizes.size <= 1:
        return None, 0
    comp = int(np.argmax(sizes[1:])) + 1  # first (row-major) on ties
    return labelled == comp, int(sizes[comp])


def _region(label: str, pixels: np.ndarray, count: int) -> Region:
    rows, cols = np.nonzero(pixels)
    return Region(
        label,
        count,
        (float(rows.mean()), float(cols.mean())),
        (int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
    )


def detect_landmark(mask: LabelMask, label: str, min_pixels: int) -> Region | None:
    pixels, count = _largest(mask.pixels_of(label))
    if pixels is None or count < min_pixels:
        return None
    return _region(label, pixels, count)


def select_goal_pixel(mask: LabelMask, preferred_terrain: str, band: tuple[int, int]) -> tuple[int, int]:
    """Goal pixel on the largest preferred-terrain blob within rows ``[row_lo, row_hi)``."""
    row_lo, row_hi = int(band[0]), int(band[1])
    if not 0 <= row_lo < row_hi <= mask.height:
        raise ValueError(f"bad band {band} for height {mask.height}")
    binary = np.zeros(mask.class_ids.shape, dtype=bool)
    binary[row_lo:row_hi] = mask.pixels_of(preferred_terrain)[row_lo:row_hi]
    pixels, count = _largest(binary)
    if pixels is None:
        raise NoTraversableRegion(f"no {preferred_terrain!r} pixels in rows {row_lo}..{row_hi}")
    rows, cols = np.nonzero(pixels)
    r = math.floor(rows.mean() + 0.5)
    c = math.floor(cols.mean() + 0.5)
    if pixels[r, c]:
        return r, c
    nearest = int(np.argmin((rows - r) ** 2 + (cols - c) ** 2))
    return int(rows[nearest]), int(cols[nearest])

"""Frame-level and pixel-level detection metrics.

Polarity: a lower score is more anomalous, so a frame is flagged at
threshold t when its score <= t. Sweeping t over every distinct score from
-inf upwards traces the ROC from (0, 0) to (1, 1).

Pixel level: an abnormal frame counts as detected only when the detected
region covers at least ``coverage`` (40%) of its ground-truth anomalous
pixels; a normal frame raises a false alarm as soon as anything is detected.
"""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from hmof_vad.core.frames import PatchGrid
from hmof_vad.models.classifier import frame_score
from hmof_vad.util.errors import DataError, DimensionMismatchError


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-frame labels and optional anomalous-pixel masks.

    Attributes:
        labels: (n_frames,) bool, True for abnormal frames.
        masks: One (H, W) bool mask per frame, or None when the dataset
            has no pixel-level annotation.
    """

    labels: np.ndarray
    masks: tuple[np.ndarray, ...] | None = None

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=bool).ravel()
        object.__setattr__(self, "labels", labels)
        if self.masks is None:
            return
        masks = tuple(np.asarray(m, dtype=bool) for m in self.masks)
        if len(masks) != labels.size:
            raise DataError(f"{len(masks)} masks for {labels.size} labelled frames")
        shapes = {m.shape for m in masks}
        if len(shapes) > 1:
            raise DimensionMismatchError(f"ground-truth masks differ in size: {sorted(shapes)}")
        for i, (mask, label) in enumerate(zip(masks, labels)):
            if mask.any() and not label:
                raise DataError(f"frame {i} has anomalous pixels but is labelled normal")
        object.__setattr__(self, "masks", masks)

    @property
    def n_frames(self) -> int:
        return int(self.labels.size)

    @property
    def has_masks(self) -> bool:
        return self.masks is not None


class PixelVerdict(str, Enum):
    """Pixel-level outcome of one frame."""

    TRUE_POSITIVE = "true_positive"
    MISS = "miss"
    FALSE_ALARM = "false_alarm"
    TRUE_NEGATIVE = "true_negative"


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC points ordered along the sweep.

    Attributes:
        thresholds: Score threshold of each point; the first is -inf.
        tpr: True-positive rate per point.
        fpr: False-positive rate per point.
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray

    def points(self) -> list[tuple[float, float, float]]:
        """(threshold, TPR, FPR) triples."""
        return [
            (float(t), float(tp), float(fp))
            for t, tp, fp in zip(self.thresholds, self.tpr, self.fpr)
        ]


def _labels_array(labels: Sequence[bool] | np.ndarray) -> np.ndarray:
    return np.asarray(labels, dtype=bool)


def roc(frame_scores: Sequence[float] | np.ndarray, labels: Sequence[bool] | np.ndarray) -> RocCurve:
    """Sweep a threshold over every distinct score.

    Args:
        frame_scores: One score per frame; lower means more anomalous.
        labels: True for abnormal frames.

    Raises:
        DataError: If lengths differ, a score is NaN, or only one class is present.
    """
    scores = np.asarray(frame_scores, dtype=np.float64)
    positives = _labels_array(labels)
    if scores.shape != positives.shape:
        raise DataError(f"{scores.size} scores but {positives.size} labels")
    if np.any(np.isnan(scores)):
        raise DataError("scores contain NaN")
    n_pos = int(positives.sum())
    n_neg = int(positives.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both normal and abnormal frames")

    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    tp = np.cumsum(positives[order])
    fp = np.cumsum(~positives[order])
    # Last index of each run of equal scores; compared directly so tied infinities stay one run.
    last = np.append(np.flatnonzero(sorted_scores[1:] != sorted_scores[:-1]), sorted_scores.size - 1)

    thresholds = np.concatenate(([-np.inf], sorted_scores[last]))
    tpr = np.concatenate(([0.0], tp[last] / n_pos))
    fpr = np.concatenate(([0.0], fp[last] / n_neg))
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve over FPR."""
    widths = np.diff(curve.fpr)
    heights = 0.5 * (curve.tpr[1:] + curve.tpr[:-1])
    return float(np.sum(widths * heights))


def eer(curve: RocCurve) -> float:
    """Rate where FPR equals the miss rate 1 - TPR.

    Linearly interpolates between the two sweep points bracketing the
    crossing.
    """
    gap = curve.fpr + curve.tpr - 1.0
    above = np.flatnonzero(gap >= 0.0)
    j = int(above[0])
    if gap[j] == 0.0 or j == 0:
        return float(curve.fpr[j])
    g0, g1 = gap[j - 1], gap[j]
    t = -g0 / (g1 - g0)
    return float(curve.fpr[j - 1] + t * (curve.fpr[j] - curve.fpr[j - 1]))


def _meets_coverage(hit: int, total: int, coverage: float) -> bool:
    return hit >= math.ceil(round(coverage * total, 9))


def pixel_level_verdict(
    detected_mask: np.ndarray,
    gt_mask: np.ndarray,
    coverage: float = 0.4,
) -> PixelVerdict:
    """Judge one frame at pixel level.

    Raises:
        DimensionMismatchError: If the masks differ in shape.
    """
    detected = np.asarray(detected_mask, dtype=bool)
    truth = np.asarray(gt_mask, dtype=bool)
    if detected.shape != truth.shape:
        raise DimensionMismatchError(
            f"detection mask {detected.shape} and ground-truth mask {truth.shape} differ"
        )
    total = int(truth.sum())
    if total > 0:
        hit = int(np.count_nonzero(detected & truth))
        return PixelVerdict.TRUE_POSITIVE if _meets_coverage(hit, total, coverage) else PixelVerdict.MISS
    return PixelVerdict.FALSE_ALARM if detected.any() else PixelVerdict.TRUE_NEGATIVE


def pixel_detection_score(
    patch_scores: Mapping[int, float],
    gt_mask: np.ndarray,
    grid: PatchGrid,
    beta: int,
    coverage: float = 0.4,
) -> float:
    """Smallest alpha at which this frame stops being a pixel-level negative.

    For a frame with ground-truth pixels this is the smallest alpha giving a
    true positive (the frame is Abnormal and the abnormal patches cover
    enough ground truth). For a frame without ground-truth pixels it is the
    smallest alpha raising a false alarm, i.e. the frame score. +inf means
    never.
    """
    truth = np.asarray(gt_mask, dtype=bool)
    if truth.shape != (grid.height, grid.width):
        raise DimensionMismatchError(
            f"ground-truth mask {truth.shape} does not match frame {grid.height}x{grid.width}"
        )
    fire = frame_score(list(patch_scores.values()), beta)
    total = int(truth.sum())
    if total == 0:
        return fire

    ids = sorted(patch_scores, key=lambda pid: (patch_scores[pid], pid))
    if not ids:
        return math.inf
    overlaps = grid.blocks(truth).sum(axis=1)
    need = math.ceil(round(coverage * total, 9))
    covered = 0
    for pid in ids:
        covered += int(overlaps[pid])
        if covered >= need:
            return max(fire, float(patch_scores[pid]))
    return math.inf


def pixel_roc(
    frame_patch_scores: Sequence[Mapping[int, float]],
    gt_masks: Sequence[np.ndarray | None],
    labels: Sequence[bool] | np.ndarray,
    grid: PatchGrid,
    beta: int,
    coverage: float = 0.4,
) -> RocCurve:
    """Pixel-level ROC over the alpha sweep.

    At each alpha a frame's detected region is the union of its Abnormal
    patches when the frame itself is Abnormal, and empty otherwise. TPR is
    taken over abnormal frames, FPR over normal frames.

    Raises:
        DataError: If any frame lacks a mask or the inputs differ in length.
    """
    positives = _labels_array(labels)
    if not (len(frame_patch_scores) == len(gt_masks) == positives.size):
        raise DataError("patch scores, masks and labels must cover the same frames")
    if any(mask is None for mask in gt_masks):
        raise DataError("pixel-level ROC needs a ground-truth mask for every frame")

    scores = np.empty(positives.size)
    for i, (patch_scores, mask) in enumerate(zip(frame_patch_scores, gt_masks)):
        value = pixel_detection_score(patch_scores, mask, grid, beta, coverage)
        if positives[i] and not np.any(mask):
            # Abnormal without annotated pixels can never be a pixel-level hit.
            value = math.inf
        scores[i] = value
    return roc(scores, positives)

"""Patch and frame decision rules on GMM scores.

A patch is Normal iff its score exceeds alpha. A frame is Abnormal iff at
least beta of its patches are Abnormal. The frame score is the beta-th
smallest patch score (+inf with fewer than beta patches), so thresholding
the frame score at alpha reproduces the frame verdict exactly.
"""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Verdict(str, Enum):
    """Patch or frame verdict."""

    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


@dataclass(frozen=True)
class DecisionThresholds:
    """alpha: patch score threshold (log-density); beta: abnormal-patch count."""

    alpha: float
    beta: int = 3

    def __post_init__(self) -> None:
        if not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class FrameDecision:
    """Verdict for one frame.

    Attributes:
        frame_index: Frame the decision belongs to.
        n_patches: Patches that were scored (the foreground patches).
        abnormal_patches: Ids of patches judged Abnormal, ascending.
        verdict: Frame verdict.
        frame_score: beta-th smallest patch score, or +inf.
    """

    frame_index: int
    n_patches: int
    abnormal_patches: tuple[int, ...]
    verdict: Verdict
    frame_score: float

    @property
    def n_abnormal(self) -> int:
        return len(self.abnormal_patches)


def classify_patch(s: float, alpha: float) -> Verdict:
    """Normal iff s > alpha; a score equal to alpha is Abnormal."""
    return Verdict.NORMAL if s > alpha else Verdict.ABNORMAL


def frame_score(scores: Sequence[float] | np.ndarray, beta: int) -> float:
    """beta-th smallest score, or +inf when fewer than beta scores exist."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size < beta:
        return math.inf
    return float(np.partition(values, beta - 1)[beta - 1])


def classify_frame(
    patch_scores: Mapping[int, float],
    alpha: float,
    beta: int,
    frame_index: int = 0,
) -> FrameDecision:
    """Apply the patch rule to every patch, then the count rule to the frame.

    Args:
        patch_scores: Patch id -> GMM score for the frame's foreground patches.
        alpha: Patch threshold.
        beta: Minimum abnormal-patch count for an Abnormal frame.
        frame_index: Frame the scores belong to.

    Raises:
        ValueError: If beta < 1.
    """
    if beta < 1:
        raise ValueError(f"beta must be >= 1, got {beta}")
    abnormal = tuple(
        pid
        for pid in sorted(patch_scores)
        if classify_patch(patch_scores[pid], alpha) is Verdict.ABNORMAL
    )
    verdict = Verdict.ABNORMAL if len(abnormal) >= beta else Verdict.NORMAL
    return FrameDecision(
        frame_index=frame_index,
        n_patches=len(patch_scores),
        abnormal_patches=abnormal,
        verdict=verdict,
        frame_score=frame_score(list(patch_scores.values()), beta),
    )


def calibrate_alpha(training_scores: Sequence[float] | np.ndarray, quantile: float = 0.01) -> float:
    """Lower empirical quantile: the ceil(q * N)-th smallest training score.

    Raises:
        ValueError: If the list is empty or q is outside (0, 1).
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {quantile}")
    values = np.sort(np.asarray(training_scores, dtype=np.float64).ravel())
    if values.size == 0:
        raise ValueError("cannot calibrate alpha from an empty score list")
    rank = max(1, math.ceil(round(quantile * values.size, 9)))
    return float(values[rank - 1])

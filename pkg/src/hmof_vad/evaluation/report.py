"""Evaluation report assembly.

``build_report`` turns a detection run (per-frame scores and verdicts, the
optional per-patch score dump and detection masks) plus ground truth into an
``EvalReport``. The JSON form holds the summary metrics and ROC point
arrays; per-frame rows travel separately as ``frames.csv``.
"""

import math
from collections.abc import Mapping, Sequence
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel

from hmof_vad.core.frames import PatchGrid
from hmof_vad.evaluation.metrics import (
    GroundTruth,
    PixelVerdict,
    RocCurve,
    auc,
    eer,
    pixel_level_verdict,
    pixel_roc,
    roc,
)
from hmof_vad.util.errors import DataError

MASKS_ABSENT = "masks absent"
PATCH_SCORES_ABSENT = "patch scores absent"


def _finite_or_none(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


class RocPoints(BaseModel):
    """ROC curve as parallel arrays; infinite thresholds serialise as null."""

    thresholds: list[float | None]
    tpr: list[float]
    fpr: list[float]

    @classmethod
    def from_curve(cls, curve: RocCurve) -> "RocPoints":
        return cls(
            thresholds=[_finite_or_none(t) for t in curve.thresholds],
            tpr=[float(x) for x in curve.tpr],
            fpr=[float(x) for x in curve.fpr],
        )


class FrameEvaluation(BaseModel):
    """One frame of the evaluated run."""

    frame: int
    label: Literal["normal", "abnormal"]
    frame_score: float | None
    verdict: Literal["Normal", "Abnormal"]
    pixel_verdict: PixelVerdict | None = None


class EvalReport(BaseModel):
    """Frame-level and pixel-level results of one detection run.

    Attributes:
        n_frames: Evaluated frames.
        n_abnormal: Frames labelled abnormal.
        auc_frame: Frame-level AUC.
        eer_frame: Frame-level EER.
        auc_pixel: Pixel-level AUC, when masks and patch scores exist.
        eer_pixel: Pixel-level EER, when masks and patch scores exist.
        pixel_tpr: Pixel-level TPR at the operating alpha, when masks exist.
        pixel_fpr: Pixel-level FPR at the operating alpha, when masks exist.
        roc_frame: Frame-level ROC points.
        roc_pixel: Pixel-level ROC points.
        notes: Why a metric was omitted.
        frames: Per-frame rows (excluded from the JSON report).
    """

    n_frames: int
    n_abnormal: int
    auc_frame: float
    eer_frame: float
    auc_pixel: float | None = None
    eer_pixel: float | None = None
    pixel_tpr: float | None = None
    pixel_fpr: float | None = None
    roc_frame: RocPoints
    roc_pixel: RocPoints | None = None
    notes: list[str] = []
    frames: list[FrameEvaluation] = []

    def to_json(self) -> str:
        """Report body written to report.json."""
        return self.model_dump_json(indent=2, exclude={"frames"}) + "\n"

    def summary(self) -> str:
        """Human-readable summary lines."""

        def fmt(value: float | None) -> str:
            return "n/a" if value is None else f"{value:.4f}"

        lines = [
            f"frames          {self.n_frames} ({self.n_abnormal} abnormal)",
            f"frame AUC       {fmt(self.auc_frame)}",
            f"frame EER       {fmt(self.eer_frame)}",
            f"pixel AUC       {fmt(self.auc_pixel)}",
            f"pixel EER       {fmt(self.eer_pixel)}",
        ]
        lines.extend(f"note: {note}" for note in self.notes)
        return "\n".join(lines) + "\n"


def build_report(
    decisions: pd.DataFrame,
    truth: GroundTruth,
    *,
    grid: PatchGrid,
    beta: int,
    patch_scores: Sequence[Mapping[int, float]] | None = None,
    detection_masks: Sequence[np.ndarray] | None = None,
    coverage: float = 0.4,
) -> EvalReport:
    """Score a detection run against ground truth.

    Args:
        decisions: decisions.csv table (frame, frame_score, verdict, ...),
            one row per frame in frame order.
        truth: Labels and optional masks for the same frames.
        grid: Patch grid the detections were made on.
        beta: Frame threshold used by the run.
        patch_scores: Per-frame patch scores, needed for the pixel ROC.
        detection_masks: Per-frame detected regions at the operating alpha.
        coverage: Pixel-level coverage criterion.

    Raises:
        DataError: On frame-count mismatch or single-class ground truth.
    """
    if len(decisions) != truth.n_frames:
        raise DataError(
            f"frame-count mismatch: {len(decisions)} detections vs {truth.n_frames} ground-truth frames"
        )
    scores = decisions["frame_score"].to_numpy(dtype=np.float64)
    frame_curve = roc(scores, truth.labels)
    notes: list[str] = []

    pixel_verdicts: list[PixelVerdict | None] = [None] * len(decisions)
    pixel_tpr = pixel_fpr = None
    pixel_curve: RocCurve | None = None
    masks = truth.masks
    if masks is None:
        notes.append(MASKS_ABSENT)
    else:
        if detection_masks is not None:
            if len(detection_masks) != len(decisions):
                raise DataError(f"{len(detection_masks)} detection masks for {len(decisions)} frames")
            pixel_verdicts = [
                pixel_level_verdict(det, gt, coverage) for det, gt in zip(detection_masks, masks)
            ]
            n_pos = int(truth.labels.sum())
            n_neg = truth.n_frames - n_pos
            pixel_tpr = sum(v is PixelVerdict.TRUE_POSITIVE for v in pixel_verdicts) / n_pos
            pixel_fpr = sum(v is PixelVerdict.FALSE_ALARM for v in pixel_verdicts) / n_neg
        if patch_scores is None:
            notes.append(PATCH_SCORES_ABSENT)
        else:
            pixel_curve = pixel_roc(patch_scores, masks, truth.labels, grid, beta, coverage)

    frames = [
        FrameEvaluation(
            frame=int(frame),
            label="abnormal" if label else "normal",
            frame_score=_finite_or_none(score),
            verdict=verdict,
            pixel_verdict=pv,
        )
        for frame, score, verdict, label, pv in zip(
            decisions["frame"], scores, decisions["verdict"], truth.labels, pixel_verdicts
        )
    ]
    return EvalReport(
        n_frames=truth.n_frames,
        n_abnormal=int(truth.labels.sum()),
        auc_frame=auc(frame_curve),
        eer_frame=eer(frame_curve),
        auc_pixel=None if pixel_curve is None else auc(pixel_curve),
        eer_pixel=None if pixel_curve is None else eer(pixel_curve),
        pixel_tpr=pixel_tpr,
        pixel_fpr=pixel_fpr,
        roc_frame=RocPoints.from_curve(frame_curve),
        roc_pixel=None if pixel_curve is None else RocPoints.from_curve(pixel_curve),
        notes=notes,
        frames=frames,
    )

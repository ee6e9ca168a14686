"""Tabular and JSON run artefacts.

CSV files go through pandas; floats are read back with round-trip
precision so detect -> eval never perturbs a score. Infinite frame scores
(frames with fewer than beta foreground patches) are written as ``inf``.

Ground truth is a header-less ``frame_index,label`` file (label ``normal``
or ``abnormal``, ``0``/``1`` also accepted) plus an optional sibling
``gt_masks/`` folder of ``NNNNNN.pgm`` masks.
"""

import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from hmof_vad.evaluation.metrics import GroundTruth
from hmof_vad.evaluation.report import EvalReport
from hmof_vad.models.classifier import FrameDecision
from hmof_vad.storage.frame_store import frame_filename, read_mask, write_mask
from hmof_vad.util.errors import DataError
from hmof_vad.util.logging import log_event

logger = logging.getLogger(__name__)

DECISION_COLUMNS = ["frame", "n_foreground_patches", "n_abnormal_patches", "frame_score", "verdict"]
PATCH_SCORE_COLUMNS = ["frame", "patch_id", "score"]
GT_MASK_DIR = "gt_masks"

_LABELS = {"normal": False, "abnormal": True, "0": False, "1": True}


def _read_csv(path: Path, **kwargs: Any) -> pd.DataFrame:
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        return pd.read_csv(path, float_precision="round_trip", **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise DataError(f"cannot parse {path.name}: {e}") from e


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def decisions_frame(decisions: Sequence[FrameDecision]) -> pd.DataFrame:
    """decisions.csv rows."""
    return pd.DataFrame(
        {
            "frame": [d.frame_index for d in decisions],
            "n_foreground_patches": [d.n_patches for d in decisions],
            "n_abnormal_patches": [d.n_abnormal for d in decisions],
            "frame_score": np.array([d.frame_score for d in decisions], dtype=np.float64),
            "verdict": [d.verdict.value for d in decisions],
        },
        columns=DECISION_COLUMNS,
    )


def write_decisions(decisions: Sequence[FrameDecision], path: Path) -> None:
    _write_csv(decisions_frame(decisions), path)


def read_decisions(path: Path) -> pd.DataFrame:
    """Load decisions.csv, checking columns and frame order.

    Raises:
        DataError: If the file is missing, malformed or frames are not 0..n-1.
    """
    table = _read_csv(path)
    missing = [c for c in DECISION_COLUMNS if c not in table.columns]
    if missing:
        raise DataError(f"{path.name}: missing columns {missing}")
    if not np.array_equal(table["frame"].to_numpy(), np.arange(len(table))):
        raise DataError(f"{path.name}: frames must be listed as 0..n-1")
    table["frame_score"] = table["frame_score"].astype(np.float64)
    return table


def write_patch_scores(frame_scores: Iterable[tuple[int, Mapping[int, float]]], path: Path) -> None:
    """patch_scores.csv: one row per scored foreground patch."""
    rows = [
        (frame, pid, float(scores[pid]))
        for frame, scores in frame_scores
        for pid in sorted(scores)
    ]
    _write_csv(pd.DataFrame(rows, columns=PATCH_SCORE_COLUMNS), path)


def read_patch_scores(path: Path, n_frames: int) -> list[dict[int, float]]:
    """Per-frame ``patch id -> score`` maps for frames 0..n_frames-1."""
    table = _read_csv(path)
    out: list[dict[int, float]] = [{} for _ in range(n_frames)]
    for frame, pid, score in table[PATCH_SCORE_COLUMNS].itertuples(index=False):
        if not 0 <= frame < n_frames:
            raise DataError(f"{path.name}: frame {frame} outside 0..{n_frames - 1}")
        out[int(frame)][int(pid)] = float(score)
    return out


def features_frame(frame: int, patch_ids: Sequence[int], features: np.ndarray, kind: str) -> pd.DataFrame:
    """Rows ``frame, patch_id, kind, v1..vd`` for one frame's feature matrix."""
    table = pd.DataFrame(features, columns=[f"v{i + 1}" for i in range(features.shape[1])])
    table.insert(0, "kind", kind)
    table.insert(0, "patch_id", list(patch_ids))
    table.insert(0, "frame", frame)
    return table


def write_features(tables: Sequence[pd.DataFrame], path: Path) -> None:
    non_empty = [t for t in tables if not t.empty]
    if not non_empty:
        return
    _write_csv(pd.concat(non_empty, ignore_index=True), path)


def read_ground_truth(path: Path) -> GroundTruth:
    """Load labels and, when a ``gt_masks/`` folder sits beside the file, masks.

    Frames without a mask file get an empty mask.

    Raises:
        DataError: If the file is missing, labels are unknown or frames are
            not 0..n-1.
    """
    if not path.is_file():
        raise DataError(f"ground truth not found: {path}")
    table = _read_csv(path, header=None, names=["frame_index", "label"], dtype={"label": str})
    labels = table["label"].str.strip().str.lower()
    unknown = sorted(set(labels) - set(_LABELS))
    if unknown:
        raise DataError(f"{path.name}: unknown labels {unknown}")
    if not np.array_equal(table["frame_index"].to_numpy(), np.arange(len(table))):
        raise DataError(f"{path.name}: frame indices must be 0..n-1")
    flags = labels.map(_LABELS).to_numpy(dtype=bool)

    mask_dir = path.parent / GT_MASK_DIR
    masks: tuple[np.ndarray, ...] | None = None
    files = sorted(mask_dir.glob("*.pgm")) if mask_dir.is_dir() else []
    if files:
        first = read_mask(files[0])
        masks = tuple(
            read_mask(mask_dir / frame_filename(i))
            if (mask_dir / frame_filename(i)).is_file()
            else np.zeros_like(first)
            for i in range(len(flags))
        )
    return GroundTruth(labels=flags, masks=masks)


def write_ground_truth(truth: GroundTruth, path: Path) -> None:
    """Write labels and, when present, every mask under ``gt_masks/``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(f"{i},{'abnormal' if flag else 'normal'}\n" for i, flag in enumerate(truth.labels)),
        encoding="utf-8",
    )
    if truth.masks is not None:
        for i, mask in enumerate(truth.masks):
            write_mask(mask, path.parent / GT_MASK_DIR / frame_filename(i))


def write_json(payload: Any, path: Path) -> None:
    """Deterministic JSON (sorted keys, two-space indent)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_report(report: EvalReport, out_dir: Path) -> None:
    """report.json plus frames.csv with the per-frame rows."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    rows = pd.DataFrame([f.model_dump(mode="json") for f in report.frames])
    _write_csv(rows, out_dir / "frames.csv")
    log_event(
        logger,
        logging.INFO,
        f"Report written to {out_dir}",
        event="report_written",
        out_dir=str(out_dir),
        auc_frame=report.auc_frame,
        eer_frame=report.eer_frame,
        eer_pixel=report.eer_pixel,
    )

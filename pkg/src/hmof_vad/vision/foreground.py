"""Foreground extraction under the matting model I = aF + (1 - a)B.

The background B is a running average of past frames; the foreground
weight a of a pixel grows linearly with its deviation from B and saturates
at ``sensitivity``. A patch's foreground value is the intensity of the
extracted foreground image (a * I) summed over its pixels; patches whose
value exceeds ``tau`` go on to feature extraction.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from hmof_vad.core.frames import Frame, PatchGrid
from hmof_vad.util.errors import DataError, DimensionMismatchError


@dataclass(frozen=True, eq=False)
class BackgroundModel:
    """Running-average background.

    Attributes:
        background: (H, W) background intensities in [0, 1].
        learning_rate: Blend factor in (0, 1].
    """

    background: np.ndarray
    learning_rate: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        grid = np.asarray(self.background)
        if grid.ndim != 2:
            raise DimensionMismatchError(f"background must be a 2-D grid, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)) or grid.min() < 0.0 or grid.max() > 1.0:
            raise DataError("background intensities must lie in [0, 1]")

    @classmethod
    def from_frame(cls, frame: Frame, learning_rate: float = 0.05) -> "BackgroundModel":
        """Initialise the background from a first frame."""
        return cls(np.array(frame.intensity, copy=True), learning_rate)

    @property
    def width(self) -> int:
        return int(self.background.shape[1])

    @property
    def height(self) -> int:
        return int(self.background.shape[0])


@dataclass(frozen=True, eq=False)
class AlphaMap:
    """Per-pixel foreground weight a in [0, 1]; (H, W) array."""

    a: np.ndarray


@dataclass(frozen=True)
class PatchSelection:
    """Foreground patches of one frame.

    Attributes:
        frame_index: Frame the selection belongs to.
        selected: Ids whose foreground value exceeds the threshold, ascending.
        values: Foreground value per patch id.
    """

    frame_index: int
    selected: tuple[int, ...]
    values: dict[int, float]

    def __len__(self) -> int:
        return len(self.selected)


def _check_shape(model: BackgroundModel, frame: Frame) -> None:
    if model.background.shape != frame.shape:
        raise DimensionMismatchError(
            f"frame {frame.index} is {frame.width}x{frame.height}, "
            f"background is {model.width}x{model.height}"
        )


def update_background(model: BackgroundModel, frame: Frame) -> BackgroundModel:
    """Blend a frame into the background: B' = (1 - r) B + r I."""
    _check_shape(model, frame)
    rate = model.learning_rate
    blended = (1.0 - rate) * model.background + rate * frame.intensity
    # Rounding may push the blend of two [0, 1] values a ulp outside the range.
    return BackgroundModel(np.clip(blended, 0.0, 1.0), rate)


def estimate_alpha(model: BackgroundModel, frame: Frame, sensitivity: float) -> AlphaMap:
    """Foreground weight a = min(1, |I - B| / sensitivity).

    Raises:
        ValueError: If sensitivity <= 0.
        DimensionMismatchError: If the frame and background differ in size.
    """
    if sensitivity <= 0:
        raise ValueError(f"sensitivity must be > 0, got {sensitivity}")
    _check_shape(model, frame)
    deviation = np.abs(frame.intensity - model.background)
    return AlphaMap(np.minimum(1.0, deviation / sensitivity))


def patch_foreground_values(alpha: AlphaMap, frame: Frame, grid: PatchGrid) -> np.ndarray:
    """Summed a * I for every patch of the grid, indexed by patch id."""
    if alpha.a.shape != frame.shape:
        raise DimensionMismatchError("alpha map and frame differ in size")
    return grid.blocks(alpha.a * frame.intensity).sum(axis=1)


def patch_foreground_value(alpha: AlphaMap, frame: Frame, grid: PatchGrid, patch_id: int) -> float:
    """Summed a * I over one patch.

    Raises:
        IndexError: If patch_id is not in the grid.
    """
    rows, cols = grid.slices(patch_id)
    return float(np.sum(alpha.a[rows, cols] * frame.intensity[rows, cols]))


def select_patches(
    values: Sequence[float] | Mapping[int, float] | np.ndarray,
    tau: float,
    frame_index: int = 0,
) -> PatchSelection:
    """Select patches whose foreground value strictly exceeds ``tau``.

    Args:
        values: One value per patch, as a sequence indexed by patch id or a
            mapping from patch id.
        tau: Foreground threshold.
        frame_index: Frame the values belong to.
    """
    if isinstance(values, Mapping):
        by_id = {int(pid): float(values[pid]) for pid in sorted(values)}
    else:
        by_id = {pid: float(v) for pid, v in enumerate(np.asarray(values, dtype=np.float64))}
    selected = tuple(pid for pid, value in by_id.items() if value > tau)
    return PatchSelection(frame_index=frame_index, selected=selected, values=by_id)


class ForegroundTracker:
    """Stateful per-sequence foreground selector.

    Scores each frame against the background built from earlier frames,
    then blends the frame in. Frames inside the warm-up window update the
    background but yield empty selections.

    Args:
        grid: Patch grid of the sequence.
        learning_rate: Background blend factor.
        sensitivity: Deviation at which a saturates to 1.
        tau: Foreground patch threshold.
        warmup_frames: Frames to absorb before emitting selections.
    """

    def __init__(
        self,
        grid: PatchGrid,
        *,
        learning_rate: float = 0.05,
        sensitivity: float = 0.1,
        tau: float | None = None,
        warmup_frames: int = 30,
    ) -> None:
        if sensitivity <= 0:
            raise ValueError(f"sensitivity must be > 0, got {sensitivity}")
        self._grid = grid
        self._learning_rate = learning_rate
        self._sensitivity = sensitivity
        self._tau = 0.05 * grid.patch_area if tau is None else tau
        self._warmup = warmup_frames
        self._model: BackgroundModel | None = None
        self._seen = 0

    @property
    def tau(self) -> float:
        return self._tau

    @property
    def warmup_frames(self) -> int:
        return self._warmup

    @property
    def model(self) -> BackgroundModel | None:
        return self._model

    def step(self, frame: Frame) -> tuple[PatchSelection, AlphaMap]:
        """Score one frame and advance the background."""
        if self._model is None:
            self._model = BackgroundModel.from_frame(frame, self._learning_rate)
        alpha = estimate_alpha(self._model, frame, self._sensitivity)
        if self._seen < self._warmup:
            selection = PatchSelection(frame_index=frame.index, selected=(), values={})
        else:
            values = patch_foreground_values(alpha, frame, self._grid)
            selection = select_patches(values, self._tau, frame_index=frame.index)
        self._model = update_background(self._model, frame)
        self._seen += 1
        return selection, alpha

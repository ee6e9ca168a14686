"""Frames, frame sequences and the fixed patch grid.

Every downstream stage indexes patches through ``PatchGrid``: patch ids are
row-major (``id = row * cols + col``) and patches never overlap. Pixels in
the right/bottom remainder strip belong to no patch.
"""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

from hmof_vad.util.errors import DataError, DimensionMismatchError


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Frame:
    """Grayscale frame with luminance in [0, 1].

    Attributes:
        intensity: (height, width) array, row-major.
        index: Ordinal position in its sequence.
    """

    intensity: np.ndarray
    index: int = 0

    def __post_init__(self) -> None:
        grid = np.asarray(self.intensity)
        if grid.ndim != 2 or grid.shape[0] == 0 or grid.shape[1] == 0:
            raise DataError(f"frame {self.index}: intensity must be a non-empty 2-D grid")
        if not np.all(np.isfinite(grid)) or grid.min() < 0.0 or grid.max() > 1.0:
            raise DataError(f"frame {self.index}: intensities must lie in [0, 1]")
        object.__setattr__(self, "intensity", _frozen(grid))

    @property
    def width(self) -> int:
        return int(self.intensity.shape[1])

    @property
    def height(self) -> int:
        return int(self.intensity.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width)."""
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Ordered frames of identical size.

    Args:
        frames: Frames with consecutive indices starting at 0.
        fps: Frames per second (metadata only).
    """

    frames: tuple[Frame, ...]
    fps: float = 10.0

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        for position, frame in enumerate(frames):
            if frame.index != position:
                raise DataError(
                    f"frame indices must be consecutive from 0: position {position} "
                    f"holds index {frame.index}"
                )
            if frame.shape != frames[0].shape:
                raise DimensionMismatchError(
                    f"frame {frame.index} is {frame.width}x{frame.height}, "
                    f"expected {frames[0].width}x{frames[0].height}"
                )

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], fps: float = 10.0) -> "FrameSequence":
        """Build a sequence from raw [0, 1] intensity arrays."""
        return cls(tuple(Frame(a, index=i) for i, a in enumerate(arrays)), fps=fps)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, index: int) -> Frame:
        return self.frames[index]

    @property
    def width(self) -> int:
        if not self.frames:
            raise DataError("empty sequence has no width")
        return self.frames[0].width

    @property
    def height(self) -> int:
        if not self.frames:
            raise DataError("empty sequence has no height")
        return self.frames[0].height

    def pairs(self) -> Iterator[tuple[Frame, Frame]]:
        """Consecutive (previous, current) frame pairs."""
        for i in range(1, len(self.frames)):
            yield self.frames[i - 1], self.frames[i]


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping square patches tiling the top-left of a frame.

    Attributes:
        width: Frame width in pixels.
        height: Frame height in pixels.
        patch_size: Square patch edge in pixels.
    """

    width: int
    height: int
    patch_size: int
    rows: int = field(init=False)
    cols: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", self.height // self.patch_size)
        object.__setattr__(self, "cols", self.width // self.patch_size)

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    @property
    def patch_area(self) -> int:
        return self.patch_size * self.patch_size

    def _check_id(self, patch_id: int) -> None:
        if not 0 <= patch_id < self.n_patches:
            raise IndexError(f"patch id {patch_id} outside grid of {self.n_patches} patches")

    def coords(self, patch_id: int) -> tuple[int, int]:
        """Grid (row, col) of a patch."""
        self._check_id(patch_id)
        return divmod(patch_id, self.cols)

    def patch_id(self, row: int, col: int) -> int:
        """Patch id of grid cell (row, col)."""
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"grid cell ({row}, {col}) outside {self.rows}x{self.cols}")
        return row * self.cols + col

    def origin(self, patch_id: int) -> tuple[int, int]:
        """Top-left pixel (x, y) of a patch."""
        row, col = self.coords(patch_id)
        return (col * self.patch_size, row * self.patch_size)

    def slices(self, patch_id: int) -> tuple[slice, slice]:
        """(row slice, column slice) selecting a patch from a (H, W) array."""
        x, y = self.origin(patch_id)
        return (slice(y, y + self.patch_size), slice(x, x + self.patch_size))

    def blocks(self, grid: np.ndarray) -> np.ndarray:
        """Reshape a (H, W) array into (n_patches, patch_size**2) rows.

        Row ``i`` holds the pixels of patch ``i`` in row-major order.
        """
        if grid.shape[:2] != (self.height, self.width):
            raise DimensionMismatchError(
                f"array shape {grid.shape[:2]} does not match grid frame "
                f"{self.height}x{self.width}"
            )
        ps = self.patch_size
        cropped = grid[: self.rows * ps, : self.cols * ps]
        return (
            cropped.reshape(self.rows, ps, self.cols, ps)
            .swapaxes(1, 2)
            .reshape(self.n_patches, ps * ps)
        )

    def mask(self, patch_ids: Sequence[int] | np.ndarray) -> np.ndarray:
        """Boolean (H, W) mask covering the union of the given patches."""
        cells = np.zeros(self.n_patches, dtype=bool)
        ids = np.asarray(patch_ids, dtype=np.int64)
        if ids.size:
            if ids.min() < 0 or ids.max() >= self.n_patches:
                raise IndexError("patch id outside grid")
            cells[ids] = True
        ps = self.patch_size
        expanded = np.repeat(np.repeat(cells.reshape(self.rows, self.cols), ps, axis=0), ps, axis=1)
        out = np.zeros((self.height, self.width), dtype=bool)
        out[: self.rows * ps, : self.cols * ps] = expanded
        return out


def partition(width: int, height: int, patch_size: int) -> PatchGrid:
    """Split a frame into a grid of non-overlapping square patches.

    Args:
        width: Frame width in pixels.
        height: Frame height in pixels.
        patch_size: Patch edge in pixels.

    Returns:
        PatchGrid with floor(height / patch_size) rows and
        floor(width / patch_size) columns.

    Raises:
        ValueError: If patch_size is < 1 or exceeds either dimension.
    """
    if width < 1 or height < 1:
        raise ValueError(f"frame dimensions must be positive, got {width}x{height}")
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    if patch_size > min(width, height):
        raise ValueError(f"patch_size {patch_size} exceeds frame dimensions {width}x{height}")
    return PatchGrid(width=width, height=height, patch_size=patch_size)

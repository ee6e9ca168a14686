"""Dense Horn-Schunck optical flow and flow magnitudes.

Flow is estimated on full frames and sliced per patch downstream. The
estimator is a fixed-iteration global-smoothness scheme:

    u <- u_avg - Ix * (Ix u_avg + Iy v_avg + It) / (a^2 + Ix^2 + Iy^2)
    v <- v_avg - Iy * (Ix u_avg + Iy v_avg + It) / (a^2 + Ix^2 + Iy^2)

Spatial derivatives are central differences of the mean of both frames,
the temporal derivative is the forward difference, and all borders are
replicate-padded.
"""

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, PositiveFloat, PositiveInt

from hmof_vad.core.frames import Frame
from hmof_vad.util.errors import DataError, DimensionMismatchError


class FlowSettings(BaseModel, extra="forbid", frozen=True):
    """Estimator settings.

    Attributes:
        iterations: Fixed-point iterations.
        smoothness: Regularisation weight in 8-bit intensity levels.
    """

    iterations: PositiveInt = 100
    smoothness: PositiveFloat = 15.0


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement in pixels per frame; (H, W) arrays."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DimensionMismatchError(f"u {self.u.shape} and v {self.v.shape} must match")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise DataError("flow field contains non-finite values")

    @property
    def width(self) -> int:
        return int(self.u.shape[1])

    @property
    def height(self) -> int:
        return int(self.u.shape[0])

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass(frozen=True, eq=False)
class MagnitudeMap:
    """Per-pixel flow amplitude; (H, W) array of non-negative values."""

    m: np.ndarray

    @property
    def width(self) -> int:
        return int(self.m.shape[1])

    @property
    def height(self) -> int:
        return int(self.m.shape[0])


def _central_differences(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(image, 1, mode="edge")
    ix = (padded[1:-1, 2:] - padded[1:-1, :-2]) * 0.5
    iy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) * 0.5
    return ix, iy


def _replicate_edges(padded: np.ndarray) -> None:
    padded[:, 1:-1, 0] = padded[:, 1:-1, 1]
    padded[:, 1:-1, -1] = padded[:, 1:-1, -2]
    padded[:, 0, :] = padded[:, 1, :]
    padded[:, -1, :] = padded[:, -2, :]


class _NeighbourAverage:
    """Horn-Schunck neighbourhood average of a stacked (2, H, W) field.

    The 3x3 kernel (corners 1/12, sides 1/6, centre 0) equals
    ([1, 2, 1] x [1, 2, 1] - 4 * centre) / 12, so it is applied as two
    1-D passes over a replicate-padded buffer. Buffers are allocated once.
    """

    def __init__(self, height: int, width: int) -> None:
        self.padded = np.zeros((2, height + 2, width + 2), dtype=np.float32)
        self.field = self.padded[:, 1:-1, 1:-1]
        self._rows = np.empty((2, height + 2, width), dtype=np.float32)
        self._centre = np.empty((2, height, width), dtype=np.float32)
        self.out = np.empty((2, height, width), dtype=np.float32)

    def __call__(self) -> np.ndarray:
        padded, rows, out = self.padded, self._rows, self.out
        _replicate_edges(padded)
        np.add(padded[:, :, :-2], padded[:, :, 2:], out=rows)
        rows += padded[:, :, 1:-1]
        rows += padded[:, :, 1:-1]
        np.add(rows[:, :-2], rows[:, 2:], out=out)
        out += rows[:, 1:-1]
        out += rows[:, 1:-1]
        np.multiply(self.field, 4.0, out=self._centre)
        out -= self._centre
        out *= 1.0 / 12.0
        return out


def estimate_flow(prev: Frame, next: Frame, settings: FlowSettings | None = None) -> FlowField:
    """Estimate dense optical flow from ``prev`` to ``next``.

    Iterates in float32 with preallocated buffers; the result is returned
    as float64.

    Args:
        prev: Earlier frame.
        next: Later frame.
        settings: Iteration count and smoothness; defaults if None.

    Returns:
        FlowField with the same dimensions as the frames.

    Raises:
        DimensionMismatchError: If the frames differ in size.
    """
    settings = settings or FlowSettings()
    if prev.shape != next.shape:
        raise DimensionMismatchError(
            f"cannot estimate flow between {prev.width}x{prev.height} "
            f"and {next.width}x{next.height} frames"
        )

    first = prev.intensity
    second = next.intensity
    it = (second - first).astype(np.float32)
    if not np.any(it):
        return FlowField.zeros(prev.height, prev.width)

    ix, iy = (d.astype(np.float32) for d in _central_differences(0.5 * (first + second)))
    alpha = settings.smoothness / 255.0
    inv_denom = (1.0 / (alpha * alpha + ix * ix + iy * iy)).astype(np.float32)

    average = _NeighbourAverage(prev.height, prev.width)
    u, v = average.field[0], average.field[1]
    step = np.empty_like(it)
    scratch = np.empty_like(it)
    for _ in range(settings.iterations):
        u_avg, v_avg = average()
        np.multiply(ix, u_avg, out=step)
        np.multiply(iy, v_avg, out=scratch)
        step += scratch
        step += it
        step *= inv_denom
        np.multiply(ix, step, out=scratch)
        np.subtract(u_avg, scratch, out=u)
        np.multiply(iy, step, out=scratch)
        np.subtract(v_avg, scratch, out=v)

    return FlowField(u.astype(np.float64), v.astype(np.float64))


def magnitude(flow: FlowField) -> MagnitudeMap:
    """Elementwise Euclidean norm of a flow field."""
    return MagnitudeMap(np.hypot(flow.u, flow.v))

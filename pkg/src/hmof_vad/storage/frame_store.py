"""Frame, mask, alpha-map and flow-field files.

Frames are 8-bit grayscale PGM (binary P5) or PNG images read through
Pillow; colour inputs are luma-converted. Intensities are normalised to
[0, 1] on load and quantised back to 8 bits on save, so a load -> save ->
load round trip is bit-identical.

Flow dumps are raw little-endian: uint32 width, uint32 height, then the u
grid and the v grid as float32, row-major.
"""

import logging
import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from hmof_vad.core.frames import Frame, FrameSequence
from hmof_vad.util.errors import DataError, DimensionMismatchError
from hmof_vad.util.logging import log_event
from hmof_vad.vision.flow import FlowField
from hmof_vad.vision.foreground import AlphaMap

logger = logging.getLogger(__name__)

_FLOW_HEADER = struct.Struct("<II")


def frame_filename(index: int, suffix: str = ".pgm") -> str:
    """Zero-padded per-frame file name, e.g. ``000042.pgm``."""
    return f"{index:06d}{suffix}"


def _read_gray(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            gray = img if img.mode == "L" else img.convert("L")
            return np.asarray(gray, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DataError(f"cannot decode {path.name}: {e}") from e


def _to_bytes(grid: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(grid, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def load_sequence(directory: Path, pattern: str = "*.pgm", fps: float = 10.0) -> FrameSequence:
    """Load every matching image in lexicographic filename order.

    Args:
        directory: Folder holding the frames.
        pattern: Filename glob.
        fps: Frame rate recorded on the sequence.

    Returns:
        FrameSequence with intensities in [0, 1].

    Raises:
        DataError: If the directory is missing, nothing matches, or a file
            cannot be decoded.
        DimensionMismatchError: If a frame differs in size from the first.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"frame directory not found: {directory}")
    paths = sorted((p for p in directory.glob(pattern) if p.is_file()), key=lambda p: p.name)
    if not paths:
        raise DataError(f"no frames matched {pattern!r} in {directory}")

    arrays: list[np.ndarray] = []
    first_shape: tuple[int, int] | None = None
    for path in paths:
        pixels = _read_gray(path)
        if first_shape is None:
            first_shape = pixels.shape
        elif pixels.shape != first_shape:
            raise DimensionMismatchError(
                f"{path.name} is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"expected {first_shape[1]}x{first_shape[0]} like {paths[0].name}"
            )
        arrays.append(pixels / 255.0)

    sequence = FrameSequence.from_arrays(arrays, fps=fps)
    log_event(
        logger,
        logging.INFO,
        f"Loaded {len(sequence)} frames from {directory}",
        event="frames_loaded",
        directory=str(directory),
        frames=len(sequence),
        width=sequence.width,
        height=sequence.height,
    )
    return sequence


def save_frame(frame: Frame, path: Path) -> None:
    """Write one frame as 8-bit grayscale (format from the suffix)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_bytes(frame.intensity), mode="L").save(path)


def save_sequence(sequence: FrameSequence, directory: Path, suffix: str = ".pgm") -> list[Path]:
    """Write every frame as ``NNNNNN<suffix>``; returns the written paths."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for frame in sequence:
        path = directory / frame_filename(frame.index, suffix)
        save_frame(frame, path)
        paths.append(path)
    return paths


def write_mask(mask: np.ndarray, path: Path) -> None:
    """Write a binary mask as PGM: 255 for set pixels, 0 elsewhere."""
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path)


def read_mask(path: Path) -> np.ndarray:
    """Read a mask image; any nonzero pixel is set."""
    return _read_gray(path) > 0


def write_alpha(alpha: AlphaMap, path: Path) -> None:
    """Export a foreground alpha map as an 8-bit image."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_bytes(alpha.a), mode="L").save(path)


def write_flow(flow: FlowField, path: Path) -> None:
    """Dump a flow field in the raw ``.flo`` layout described above."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_FLOW_HEADER.pack(flow.width, flow.height))
        fh.write(flow.u.astype("<f4").tobytes())
        fh.write(flow.v.astype("<f4").tobytes())


def read_flow(path: Path) -> FlowField:
    """Read a flow dump written by ``write_flow``.

    Raises:
        DataError: If the file is truncated or its size disagrees with the header.
    """
    raw = path.read_bytes()
    if len(raw) < _FLOW_HEADER.size:
        raise DataError(f"{path.name}: truncated flow header")
    width, height = _FLOW_HEADER.unpack_from(raw)
    n = width * height
    expected = _FLOW_HEADER.size + 2 * 4 * n
    if len(raw) != expected:
        raise DataError(f"{path.name}: expected {expected} bytes for {width}x{height}, got {len(raw)}")
    body = np.frombuffer(raw, dtype="<f4", offset=_FLOW_HEADER.size)
    u = body[:n].reshape(height, width).astype(np.float64)
    v = body[n:].reshape(height, width).astype(np.float64)
    return FlowField(u, v)

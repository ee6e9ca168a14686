"""Deterministic synthetic scenes with planted speed anomalies.

Bright square movers drift over a dark background and wrap around the frame
edges. Normal movers are present in every frame; anomaly movers, drawn from a
strictly faster speed range, exist only inside the anomaly window. Rendering
is anti-aliased (fractional pixel coverage), optionally blurred, and then
quantised to 8-bit levels so frames survive a PGM round trip bit-exactly.

Ground truth is exact: a pixel is anomalous when its centre lies inside an
anomaly mover's square.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from hmof_vad.core.frames import FrameSequence
from hmof_vad.evaluation.metrics import GroundTruth
from hmof_vad.foundation.config import SynthConfig
from hmof_vad.util.logging import log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mover:
    """Square object moving at constant velocity.

    Attributes:
        x: Left edge at ``start`` (pixels).
        y: Top edge at ``start`` (pixels).
        vx: Horizontal speed (pixels per frame).
        vy: Vertical speed (pixels per frame).
        start: First frame the mover exists in.
        end: Last frame the mover exists in (inclusive).
    """

    x: float
    y: float
    vx: float
    vy: float
    start: int
    end: int

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vx, self.vy))

    def active(self, t: int) -> bool:
        return self.start <= t <= self.end

    def position(self, t: int) -> tuple[float, float]:
        """Top-left corner at frame t, before wrapping."""
        dt = t - self.start
        return self.x + self.vx * dt, self.y + self.vy * dt


def _draw_movers(
    rng: np.random.Generator,
    count: int,
    speed_range: tuple[float, float],
    cfg: SynthConfig,
    start: int,
    end: int,
) -> list[Mover]:
    movers = []
    for _ in range(count):
        x = rng.uniform(0.0, cfg.width)
        y = rng.uniform(0.0, cfg.height)
        speed = rng.uniform(*speed_range)
        heading = rng.uniform(0.0, 2.0 * np.pi)
        movers.append(
            Mover(
                x=x,
                y=y,
                vx=speed * np.cos(heading),
                vy=speed * np.sin(heading),
                start=start,
                end=end,
            )
        )
    return movers


def plan_movers(cfg: SynthConfig) -> tuple[list[Mover], list[Mover]]:
    """Draw (normal, anomaly) movers from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    normal = _draw_movers(
        rng,
        cfg.normal_count,
        (cfg.normal_speed_min, cfg.normal_speed_max),
        cfg,
        0,
        cfg.frames - 1,
    )
    anomalous = _draw_movers(
        rng,
        cfg.anomaly_count,
        (cfg.anomaly_speed_min, cfg.anomaly_speed_max),
        cfg,
        cfg.anomaly_start,
        cfg.anomaly_end,
    )
    return normal, anomalous


def _coverage_1d(start: float, size: int, length: int) -> np.ndarray:
    """Fraction of each pixel cell covered by [start, start + size) on a ring."""
    lo = start % length
    cells = np.arange(length, dtype=np.float64)
    cover = np.zeros(length)
    for shift in (0.0, -float(length)):
        a, b = lo + shift, lo + shift + size
        cover += np.clip(np.minimum(cells + 1.0, b) - np.maximum(cells, a), 0.0, 1.0)
    return np.minimum(cover, 1.0)


def _centres_inside(start: float, size: int, length: int) -> np.ndarray:
    lo = start % length
    centres = np.arange(length, dtype=np.float64) + 0.5
    inside = np.zeros(length, dtype=bool)
    for shift in (0.0, -float(length)):
        a = lo + shift
        inside |= (centres >= a) & (centres < a + size)
    return inside


def _coverage(mover: Mover, t: int, cfg: SynthConfig) -> np.ndarray:
    x, y = mover.position(t)
    return np.outer(
        _coverage_1d(y, cfg.object_size, cfg.height),
        _coverage_1d(x, cfg.object_size, cfg.width),
    )


def anomaly_mask(movers: list[Mover], t: int, cfg: SynthConfig) -> np.ndarray:
    """Pixels whose centre lies inside an active anomaly mover at frame t."""
    mask = np.zeros((cfg.height, cfg.width), dtype=bool)
    for mover in movers:
        if mover.active(t):
            x, y = mover.position(t)
            mask |= np.outer(
                _centres_inside(y, cfg.object_size, cfg.height),
                _centres_inside(x, cfg.object_size, cfg.width),
            )
    return mask


def render_frame(movers: list[Mover], t: int, cfg: SynthConfig) -> np.ndarray:
    """Quantised (H, W) intensity image of frame t."""
    cover = np.zeros((cfg.height, cfg.width))
    for mover in movers:
        if mover.active(t):
            np.maximum(cover, _coverage(mover, t, cfg), out=cover)
    image = cfg.background_level + (cfg.object_level - cfg.background_level) * cover
    if cfg.blur_sigma > 0:
        image = gaussian_filter(image, sigma=cfg.blur_sigma, mode="wrap")
    return np.clip(np.round(image * 255.0), 0.0, 255.0) / 255.0


def generate(cfg: SynthConfig) -> tuple[FrameSequence, GroundTruth]:
    """Render a sequence and its exact ground truth.

    Frame t is abnormal iff anomaly movers are present (anomaly_count > 0 and
    t inside the window). Same config and seed give bit-identical output.

    Args:
        cfg: Validated generator settings.

    Returns:
        (frames, ground truth with per-frame masks).
    """
    normal, anomalous = plan_movers(cfg)
    movers = normal + anomalous
    frames = []
    masks = []
    labels = np.zeros(cfg.frames, dtype=bool)
    for t in range(cfg.frames):
        frames.append(render_frame(movers, t, cfg))
        mask = anomaly_mask(anomalous, t, cfg)
        masks.append(mask)
        labels[t] = any(m.active(t) for m in anomalous)

    log_event(
        logger,
        logging.INFO,
        f"Generated {cfg.frames} synthetic frames ({int(labels.sum())} abnormal)",
        event="synth_generated",
        frames=cfg.frames,
        abnormal=int(labels.sum()),
        seed=cfg.seed,
        width=cfg.width,
        height=cfg.height,
    )
    return FrameSequence.from_arrays(frames, fps=cfg.fps), GroundTruth(labels=labels, masks=tuple(masks))

"""Per-stage running-time harness.

The timed run is single-threaded so stage costs are meaningful. Figures are
seconds per scored frame: frames inside the warm-up window only feed the
background model, so their cost is charged to the frames that follow.
An optional second run measures multi-threaded throughput.
"""

import logging
import time

from pydantic import BaseModel, NonNegativeFloat, model_validator

from hmof_vad.core.frames import FrameSequence, partition
from hmof_vad.core.pipeline import STAGES, DetectionModels, FramePipeline, StageTimer
from hmof_vad.features.descriptors import DescriptorSpec
from hmof_vad.foundation.config import PipelineConfig
from hmof_vad.util.errors import DataError, ModelError
from hmof_vad.util.logging import log_event

logger = logging.getLogger(__name__)

_LABELS = {
    "foreground": "Foreground",
    "optical_flow": "Optical flow",
    "feature": "Feature",
    "autoencoder": "Autoencoder",
    "gmm": "GMM",
    "total": "Total",
}


class StageTimings(BaseModel, extra="forbid"):
    """Mean seconds per frame for each stage and for the whole chain."""

    foreground: NonNegativeFloat
    optical_flow: NonNegativeFloat
    feature: NonNegativeFloat
    autoencoder: NonNegativeFloat
    gmm: NonNegativeFloat
    total: NonNegativeFloat
    n_frames: int
    n_scored: int

    def stage_sum(self) -> float:
        return self.foreground + self.optical_flow + self.feature + self.autoencoder + self.gmm

    def table(self) -> str:
        """Aligned two-column text table (stage, seconds per frame)."""
        width = max(len(label) for label in _LABELS.values())
        rows = [f"{'Stage':<{width}}  s/frame"]
        for key, label in _LABELS.items():
            rows.append(f"{label:<{width}}  {getattr(self, key):.4f}")
        return "\n".join(rows) + "\n"


class BenchReport(BaseModel, extra="forbid"):
    """timings.json contents."""

    width: int
    height: int
    timings: StageTimings
    budget_s: float
    within_budget: bool
    workers: int | None = None
    threaded_fps: float | None = None

    @model_validator(mode="after")
    def check_threaded(self) -> "BenchReport":
        if (self.workers is None) != (self.threaded_fps is None):
            raise ValueError("workers and threaded_fps go together")
        return self


def _check_inputs(sequence: FrameSequence, models: DetectionModels | None) -> None:
    if models is None:
        raise ModelError("benchmark needs trained models")
    if len(sequence) == 0:
        raise DataError("cannot benchmark an empty sequence")


def benchmark(
    config: PipelineConfig,
    sequence: FrameSequence,
    models: DetectionModels | None,
    spec: DescriptorSpec,
) -> StageTimings:
    """Run the full chain once, single-threaded, and report per-frame means.

    Means are taken over the frames that reached optical flow.

    Raises:
        ModelError: If no trained models are given.
        DataError: If the sequence is empty or ends inside the warm-up window.
    """
    _check_inputs(sequence, models)
    grid = partition(sequence.width, sequence.height, config.grid.patch_size)
    pipeline = FramePipeline.from_config(config, grid, spec=spec, models=models, workers=1)

    timer = StageTimer()
    scored = 0
    start = time.perf_counter()
    for result in pipeline.run(sequence):
        timer.add(result.timer)
        scored += result.flow_estimated
    elapsed = time.perf_counter() - start

    if scored == 0:
        raise DataError(
            f"no frame of {len(sequence)} gets past the {config.fg.warmup_frames}-frame warm-up window"
        )
    timings = StageTimings(
        **{stage: timer.seconds[stage] / scored for stage in STAGES},
        total=elapsed / scored,
        n_frames=len(sequence),
        n_scored=scored,
    )
    log_event(
        logger,
        logging.INFO,
        f"Benchmark: {timings.total:.4f} s/frame over {scored} scored frames",
        event="bench_done",
        **timings.model_dump(),
    )
    return timings


def threaded_throughput(
    config: PipelineConfig,
    sequence: FrameSequence,
    models: DetectionModels | None,
    spec: DescriptorSpec,
) -> float:
    """Frames per second with ``run.workers`` threads."""
    _check_inputs(sequence, models)
    grid = partition(sequence.width, sequence.height, config.grid.patch_size)
    pipeline = FramePipeline.from_config(config, grid, spec=spec, models=models)
    start = time.perf_counter()
    n = sum(1 for _ in pipeline.run(sequence))
    elapsed = time.perf_counter() - start
    fps = n / elapsed if elapsed > 0 else float("inf")
    log_event(
        logger,
        logging.INFO,
        f"Threaded throughput: {fps:.1f} frames/s with {config.run.workers} workers",
        event="bench_threaded",
        workers=config.run.workers,
        fps=fps,
    )
    return fps

"""Per-frame stage chain: foreground -> optical flow -> features -> autoencoder -> GMM.

The background model is stateful, so foreground selection runs sequentially
in frame order. Everything after it depends only on the frame pair and the
selection, so it runs on a thread pool one chunk at a time; results are
yielded in frame order whatever the completion order.

Flow is estimated for every frame past the warm-up window (and never for
frame 0). Warm-up frames produce an empty result.
"""

import time
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from hmof_vad.core.frames import Frame, FrameSequence, PatchGrid
from hmof_vad.features.descriptors import DescriptorSpec
from hmof_vad.foundation.config import PipelineConfig
from hmof_vad.models.autoencoder import AutoEncoderParams, decode_batch, encode_batch
from hmof_vad.models.classifier import DecisionThresholds, FrameDecision, classify_frame
from hmof_vad.models.gmm import GmmModel, score_samples
from hmof_vad.vision.flow import FlowField, FlowSettings, estimate_flow
from hmof_vad.vision.foreground import AlphaMap, ForegroundTracker, PatchSelection

STAGES = ("foreground", "optical_flow", "feature", "autoencoder", "gmm")

FeatureOutput = Literal["latent", "reconstruction"]


@dataclass
class StageTimer:
    """Wall-clock seconds accumulated per stage."""

    seconds: dict[str, float] = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))

    @contextmanager
    def measure(self, stage: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[stage] += time.perf_counter() - start

    def add(self, other: "StageTimer") -> None:
        for stage, value in other.seconds.items():
            self.seconds[stage] += value


def project(params: AutoEncoderParams, features: np.ndarray, output: FeatureOutput = "latent") -> np.ndarray:
    """Map descriptor rows into the space the GMM models."""
    latent = encode_batch(params, features)
    return latent if output == "latent" else decode_batch(params, latent)


@dataclass(frozen=True, eq=False)
class DetectionModels:
    """Trained artefacts needed to score frames."""

    autoencoder: AutoEncoderParams
    gmm: GmmModel
    thresholds: DecisionThresholds
    output: FeatureOutput = "latent"


@dataclass(eq=False)
class FrameResult:
    """Everything the chain produced for one frame.

    Attributes:
        frame_index: Frame the result belongs to.
        selection: Foreground patches.
        flow: Flow from the previous frame, None for frame 0 and warm-up frames.
        u_blocks: (P, ps*ps) horizontal flow of the selected patches.
        v_blocks: (P, ps*ps) vertical flow of the selected patches.
        features: (P, d) descriptors, when a descriptor was configured.
        projected: (P, h) autoencoder output, when models were given.
        scores: Patch id -> GMM log-density, when models were given.
        decision: Frame decision, when models were given.
        flow_estimated: Whether flow was estimated for this frame.
        timer: Stage seconds spent on this frame.
    """

    frame_index: int
    selection: PatchSelection
    flow: FlowField | None
    u_blocks: np.ndarray
    v_blocks: np.ndarray
    features: np.ndarray | None = None
    projected: np.ndarray | None = None
    scores: dict[int, float] = field(default_factory=dict)
    decision: FrameDecision | None = None
    flow_estimated: bool = False
    timer: StageTimer = field(default_factory=StageTimer)


@dataclass(frozen=True, eq=False)
class _Job:
    prev: Frame | None
    frame: Frame
    selection: PatchSelection
    foreground_s: float


class FramePipeline:
    """Runs the stage chain over a sequence.

    Args:
        grid: Patch grid of the sequence.
        tracker_factory: Builds a fresh ForegroundTracker per run.
        flow_settings: Optical flow settings.
        spec: Descriptor to compute; None stops after flow.
        models: Trained models; None stops after the descriptor.
        workers: Threads for the post-foreground stages.
        alpha_sink: Called with each frame's alpha map, in frame order.
        keep_flow: Keep the full flow field on each result.
    """

    def __init__(
        self,
        grid: PatchGrid,
        tracker_factory: Callable[[], ForegroundTracker],
        flow_settings: FlowSettings,
        *,
        spec: DescriptorSpec | None = None,
        models: DetectionModels | None = None,
        workers: int = 1,
        alpha_sink: Callable[[int, AlphaMap], None] | None = None,
        keep_flow: bool = False,
    ) -> None:
        if models is not None and spec is None:
            raise ValueError("scoring needs a descriptor spec")
        self._grid = grid
        self._tracker_factory = tracker_factory
        self._flow_settings = flow_settings
        self._spec = spec
        self._models = models
        self._workers = workers
        self._alpha_sink = alpha_sink
        self._keep_flow = keep_flow

    @classmethod
    def from_config(
        cls,
        config: PipelineConfig,
        grid: PatchGrid,
        *,
        spec: DescriptorSpec | None = None,
        models: DetectionModels | None = None,
        workers: int | None = None,
        alpha_sink: Callable[[int, AlphaMap], None] | None = None,
        keep_flow: bool = False,
    ) -> "FramePipeline":
        """Build a pipeline from the fg, flow and run sections."""
        fg = config.fg
        tau = config.foreground_tau()

        def tracker() -> ForegroundTracker:
            return ForegroundTracker(
                grid,
                learning_rate=fg.learning_rate,
                sensitivity=fg.sensitivity,
                tau=tau,
                warmup_frames=fg.warmup_frames,
            )

        return cls(
            grid,
            tracker,
            FlowSettings(iterations=config.flow.iterations, smoothness=config.flow.smoothness),
            spec=spec,
            models=models,
            workers=config.run.workers if workers is None else workers,
            alpha_sink=alpha_sink,
            keep_flow=keep_flow,
        )

    def _analyse(self, job: _Job) -> FrameResult:
        timer = StageTimer()
        timer.seconds["foreground"] = job.foreground_s
        ids = np.asarray(job.selection.selected, dtype=np.int64)
        width = self._grid.patch_area
        empty = np.zeros((0, width))

        flow = None
        u_blocks = v_blocks = empty
        if job.prev is not None:
            with timer.measure("optical_flow"):
                flow = estimate_flow(job.prev, job.frame, self._flow_settings)
            u_blocks = self._grid.blocks(flow.u)[ids]
            v_blocks = self._grid.blocks(flow.v)[ids]

        result = FrameResult(
            frame_index=job.frame.index,
            selection=job.selection,
            flow=flow if self._keep_flow else None,
            u_blocks=u_blocks,
            v_blocks=v_blocks,
            timer=timer,
            flow_estimated=flow is not None,
        )
        if self._spec is None:
            return result

        with timer.measure("feature"):
            result.features = self._spec.describe(u_blocks, v_blocks)
        if self._models is None:
            return result

        models = self._models
        with timer.measure("autoencoder"):
            result.projected = (
                project(models.autoencoder, result.features, models.output)
                if len(ids)
                else np.zeros((0, models.gmm.dim))
            )
        with timer.measure("gmm"):
            values = score_samples(models.gmm, result.projected) if len(ids) else np.zeros(0)
            result.scores = {int(pid): float(s) for pid, s in zip(ids, values)}
            result.decision = classify_frame(
                result.scores,
                models.thresholds.alpha,
                models.thresholds.beta,
                frame_index=job.frame.index,
            )
        return result

    def _jobs(self, sequence: FrameSequence) -> Iterator[_Job]:
        tracker = self._tracker_factory()
        prev: Frame | None = None
        for frame in sequence:
            start = time.perf_counter()
            selection, alpha = tracker.step(frame)
            elapsed = time.perf_counter() - start
            if self._alpha_sink is not None:
                self._alpha_sink(frame.index, alpha)
            if prev is None or frame.index < tracker.warmup_frames:
                # No flow without a usable previous frame.
                selection = PatchSelection(frame_index=frame.index, selected=(), values=selection.values)
                yield _Job(prev=None, frame=frame, selection=selection, foreground_s=elapsed)
            else:
                yield _Job(prev=prev, frame=frame, selection=selection, foreground_s=elapsed)
            prev = frame

    def run(self, sequence: FrameSequence) -> Iterator[FrameResult]:
        """Yield one FrameResult per frame, in frame order."""
        jobs = self._jobs(sequence)
        if self._workers <= 1:
            yield from map(self._analyse, jobs)
            return
        chunk = 4 * self._workers
        with ThreadPoolExecutor(max_workers=self._workers, thread_name_prefix="frame") as pool:
            while True:
                batch = [job for _, job in zip(range(chunk), jobs)]
                if not batch:
                    break
                yield from pool.map(self._analyse, batch)

"""Shared fixtures: small synthetic scenes and a fast pipeline configuration."""

from pathlib import Path

import numpy as np
import pytest

from hmof_vad.core.frames import FrameSequence, partition
from hmof_vad.core.pipeline import DetectionModels
from hmof_vad.features.descriptors import DescriptorKind, DescriptorSpec
from hmof_vad.foundation.config import (
    AutoEncoderConfig,
    FlowConfig,
    ForegroundConfig,
    GmmConfig,
    GridConfig,
    PathsConfig,
    PipelineConfig,
    SynthConfig,
)
from hmof_vad.models.autoencoder import init
from hmof_vad.models.classifier import DecisionThresholds
from hmof_vad.models.gmm import GmmModel
from hmof_vad.synth.generator import generate

SMALL_SYNTH = SynthConfig(
    width=64,
    height=48,
    frames=60,
    seed=3,
    normal_count=3,
    normal_speed_min=0.5,
    normal_speed_max=1.0,
    anomaly_count=1,
    anomaly_speed_min=3.0,
    anomaly_speed_max=4.0,
    anomaly_start=40,
    anomaly_end=55,
    object_size=8,
    blur_sigma=0.8,
)


def paths_under(root: Path) -> PathsConfig:
    data = root / "data"
    return PathsConfig(
        train_dir=data / "train",
        test_dir=data / "test",
        gt_path=data / "test" / "gt.csv",
        model_dir=root / "models",
        out_dir=root / "out",
    )


def small_config(root: Path) -> PipelineConfig:
    """Fast settings for a 64x48, 60-frame scene rooted at ``root``."""
    return PipelineConfig(
        paths=paths_under(root),
        grid=GridConfig(patch_size=8),
        flow=FlowConfig(iterations=20),
        fg=ForegroundConfig(warmup_frames=5),
        ae=AutoEncoderConfig(epochs=15, batch=32),
        gmm=GmmConfig(k=2, max_iters=50),
        synth=SMALL_SYNTH,
    )


@pytest.fixture
def synth_config() -> SynthConfig:
    return SMALL_SYNTH


@pytest.fixture
def pipeline_config(tmp_path: Path) -> PipelineConfig:
    return small_config(tmp_path)


@pytest.fixture(scope="session")
def small_sequence() -> FrameSequence:
    sequence, _ = generate(SMALL_SYNTH)
    return sequence


@pytest.fixture
def hmof_spec() -> DescriptorSpec:
    return DescriptorSpec(kind=DescriptorKind.HMOF, bins=4, delta=1.0)


@pytest.fixture
def toy_models() -> DetectionModels:
    """Untrained but valid models over a 4-bin HMOF and a 2-d latent space."""
    return DetectionModels(
        autoencoder=init(4, 2, seed=1),
        gmm=GmmModel(weights=np.array([1.0]), means=np.zeros((1, 2)), covariances=np.eye(2)[None, :, :]),
        thresholds=DecisionThresholds(alpha=-1.9, beta=1),
    )


@pytest.fixture
def small_grid(small_sequence: FrameSequence):
    return partition(small_sequence.width, small_sequence.height, 8)

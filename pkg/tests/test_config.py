from pathlib import Path

import pytest

from hmof_vad.foundation.config import (
    PipelineConfig,
    apply_overrides,
    flatten_config,
    load_config,
    parse_flat,
    render_config,
    validate_config,
)
from hmof_vad.util.errors import ConfigError


def test_defaults_without_file():
    config = load_config(None)
    assert config == PipelineConfig()
    assert config.grid.patch_size == 20
    assert config.flow.iterations == 100
    assert config.gmm.beta == 3
    assert config.foreground_tau() == pytest.approx(20.0)


def test_yaml_file(tmp_path: Path):
    path = tmp_path / "cfg.yaml"
    path.write_text("grid:\n  patch_size: 10\nflow:\n  iterations: 5\nfeat:\n  kind: mhof\n")
    config = load_config(path)
    assert config.grid.patch_size == 10
    assert config.flow.iterations == 5
    assert config.feat.kind == "mhof"
    assert config.foreground_tau() == pytest.approx(5.0)


def test_flat_file_with_comments(tmp_path: Path):
    path = tmp_path / "cfg.txt"
    path.write_text(
        "# experiment\n"
        "grid.patch_size = 10  # smaller patches\n"
        "\n"
        "feat.kind = hof\n"
        "gmm.alpha = -3.5\n"
        "fg.tau = null\n"
        "paths.pattern = *.png\n"
    )
    config = load_config(path)
    assert config.grid.patch_size == 10
    assert config.feat.kind == "hof"
    assert config.gmm.alpha == -3.5
    assert config.fg.tau is None
    assert config.paths.pattern == "*.png"


@pytest.mark.parametrize(
    "text",
    [
        "grid:\n  patchsize: 3\n",
        "nope:\n  x: 1\n",
        "grid:\n  patch_size: 0\n",
        "- 1\n- 2\n",
        "grid: [\n",
    ],
)
def test_invalid_yaml_rejected(tmp_path: Path, text: str):
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("text", ["grid.patch_size 10\n", "patch_size = 10\n", "a.b.c = 1\n"])
def test_malformed_flat_line(tmp_path: Path, text: str):
    path = tmp_path / "cfg.txt"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path: Path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.yaml")


def test_overrides_revalidate():
    config = apply_overrides(PipelineConfig(), ["fg.tau=3.5", "run.workers=4", "feat.dump=true"])
    assert config.fg.tau == 3.5
    assert config.run.workers == 4
    assert config.feat.dump is True
    assert config.foreground_tau() == 3.5


@pytest.mark.parametrize("item", ["grid.patch_size=0", "workers=3", "run.workers", "run.colour=red"])
def test_bad_override(item: str):
    with pytest.raises(ConfigError):
        apply_overrides(PipelineConfig(), [item])


def test_synth_speed_ranges_must_separate():
    with pytest.raises(ConfigError, match="anomaly speeds"):
        apply_overrides(PipelineConfig(), ["synth.anomaly_speed_min=1.0"])


def test_synth_window_inside_sequence():
    with pytest.raises(ConfigError, match="past the last frame"):
        apply_overrides(PipelineConfig(), ["synth.frames=300"])
    config = apply_overrides(PipelineConfig(), ["synth.frames=300", "synth.anomaly_count=0"])
    assert config.synth.frames == 300


def test_render_is_sorted_and_parses_back():
    config = apply_overrides(PipelineConfig(), ["gmm.tol=1e-08", "feat.mhof_thresh=0.75"])
    text = render_config(config)
    keys = [line.split(" = ")[0] for line in text.splitlines()]
    assert keys == sorted(keys)
    assert "gmm.alpha = null" in text.splitlines()
    assert "paths.train_dir = data/train" in text.splitlines()
    assert validate_config(parse_flat(text)) == config


def test_flatten_covers_every_field():
    flat = flatten_config(PipelineConfig())
    assert flat["grid.patch_size"] == "20"
    assert flat["ae.adaptive_lr"] == "true"
    assert flat["run.log_level"] == "INFO"
    assert all(key.count(".") == 1 for key in flat)

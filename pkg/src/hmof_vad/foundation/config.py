"""Pipeline configuration contract with strict Pydantic v2 validation.

Two on-disk formats are accepted:
- YAML, one mapping per section (``flow: {iterations: 100}``)
- flat text, one ``section.key = value`` line per setting

Both resolve to the same ``PipelineConfig``; unknown sections and keys are
rejected so a typo never silently falls back to a default.
"""

from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import (
    BaseModel,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from hmof_vad.util.errors import ConfigError


class PathsConfig(BaseModel, extra="forbid"):
    """Input and output locations."""

    train_dir: Path = Path("data/train")
    test_dir: Path = Path("data/test")
    gt_path: Path = Path("data/test/gt.csv")
    model_dir: Path = Path("models")
    out_dir: Path = Path("out")
    pattern: str = "*.pgm"


class GridConfig(BaseModel, extra="forbid"):
    """Patch tiling."""

    patch_size: PositiveInt = 20


class FlowConfig(BaseModel, extra="forbid"):
    """Horn-Schunck optical flow settings."""

    iterations: PositiveInt = 100
    # Expressed in 8-bit intensity levels.
    smoothness: PositiveFloat = 15.0
    dump: bool = False


class ForegroundConfig(BaseModel, extra="forbid"):
    """Background model and foreground patch selection."""

    learning_rate: float = Field(default=0.05, gt=0.0, le=1.0)
    sensitivity: PositiveFloat = 0.1
    # None means 0.05 * patch_size**2.
    tau: float | None = None
    warmup_frames: NonNegativeInt = 30
    export_alpha: bool = False


class FeatureConfig(BaseModel, extra="forbid"):
    """Patch descriptor settings."""

    kind: Literal["hmof", "hof", "mhof"] = "hmof"
    bins: PositiveInt = 8
    discard_fraction: float = Field(default=0.05, ge=0.0, lt=1.0)
    # None means delta / 2.
    mhof_thresh: PositiveFloat | None = None
    delta_source: Literal["foreground", "all"] = "foreground"
    dump: bool = False


class AutoEncoderConfig(BaseModel, extra="forbid"):
    """Autoencoder architecture and training."""

    hidden: PositiveInt = 4
    epochs: PositiveInt = 200
    lr: float = Field(default=0.1, ge=0.0)
    batch: PositiveInt = 64
    seed: int = 1
    adaptive_lr: bool = True
    output: Literal["latent", "reconstruction"] = "latent"


class GmmConfig(BaseModel, extra="forbid"):
    """Gaussian mixture fitting and decision thresholds."""

    k: PositiveInt = 5
    seed: int = 1
    max_iters: PositiveInt = 200
    tol: float = Field(default=1e-6, ge=0.0)
    reg: PositiveFloat = 1e-6
    alpha_quantile: float = Field(default=0.01, gt=0.0, lt=1.0)
    # None means calibrate from alpha_quantile.
    alpha: float | None = None
    beta: PositiveInt = 3


class EvalConfig(BaseModel, extra="forbid"):
    """Evaluation protocol."""

    coverage: float = Field(default=0.4, gt=0.0, le=1.0)


class SynthConfig(BaseModel, extra="forbid"):
    """Synthetic scene generator.

    Speeds are in pixels per frame; the anomaly window is inclusive.
    """

    width: PositiveInt = 320
    height: PositiveInt = 240
    frames: PositiveInt = 400
    seed: int = 7
    fps: PositiveFloat = 10.0
    normal_count: NonNegativeInt = 6
    normal_speed_min: float = Field(default=0.5, ge=0.0)
    normal_speed_max: float = Field(default=1.5, ge=0.0)
    anomaly_count: NonNegativeInt = 2
    anomaly_speed_min: float = Field(default=4.0, ge=0.0)
    anomaly_speed_max: float = Field(default=6.0, ge=0.0)
    anomaly_start: NonNegativeInt = 250
    anomaly_end: NonNegativeInt = 350
    object_size: PositiveInt = 16
    background_level: float = Field(default=0.1, ge=0.0, le=1.0)
    object_level: float = Field(default=0.9, ge=0.0, le=1.0)
    blur_sigma: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def check_ranges(self) -> "SynthConfig":
        """Enforce magnitude separability and a window inside the sequence."""
        if self.normal_speed_min > self.normal_speed_max:
            raise ValueError("normal_speed_min must be <= normal_speed_max")
        if self.anomaly_speed_min > self.anomaly_speed_max:
            raise ValueError("anomaly_speed_min must be <= anomaly_speed_max")
        if self.anomaly_count > 0:
            if self.anomaly_speed_min <= self.normal_speed_max:
                raise ValueError("anomaly speeds must lie strictly above normal speeds")
            if self.anomaly_start > self.anomaly_end:
                raise ValueError("anomaly window is empty (anomaly_start > anomaly_end)")
            if self.anomaly_end >= self.frames:
                raise ValueError("anomaly window extends past the last frame")
        if self.object_size > min(self.width, self.height):
            raise ValueError("object_size exceeds frame dimensions")
        if self.object_level <= self.background_level:
            raise ValueError("object_level must be brighter than background_level")
        return self


class BenchConfig(BaseModel, extra="forbid"):
    """Timing harness."""

    threaded: bool = False
    budget_s: PositiveFloat = 0.100


class RunConfig(BaseModel, extra="forbid"):
    """Process-level settings."""

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    workers: PositiveInt = 1
    patch_scores: bool = True


class PipelineConfig(BaseModel, extra="forbid"):
    """Complete pipeline configuration.

    All fields have documented defaults; see ``render_config`` for the flat view.
    """

    paths: PathsConfig = PathsConfig()
    grid: GridConfig = GridConfig()
    flow: FlowConfig = FlowConfig()
    fg: ForegroundConfig = ForegroundConfig()
    feat: FeatureConfig = FeatureConfig()
    ae: AutoEncoderConfig = AutoEncoderConfig()
    gmm: GmmConfig = GmmConfig()
    eval: EvalConfig = EvalConfig()
    synth: SynthConfig = SynthConfig()
    bench: BenchConfig = BenchConfig()
    run: RunConfig = RunConfig()

    def foreground_tau(self) -> float:
        """Resolved foreground threshold in summed-intensity units."""
        if self.fg.tau is not None:
            return self.fg.tau
        return 0.05 * self.grid.patch_size**2


def _parse_scalar(raw: str) -> Any:
    """Type a textual value the way YAML would (ints, floats, bools, null)."""
    try:
        return yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError:
        return raw


def _assign(data: dict[str, Any], dotted_key: str, value: Any) -> None:
    """Set ``section.key`` in a nested dict."""
    parts = dotted_key.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"Config keys must look like section.key, got {dotted_key!r}")
    section, key = parts
    target = data.setdefault(section, {})
    if not isinstance(target, dict):
        raise ConfigError(f"Config section {section!r} is not a mapping")
    target[key] = value


def parse_flat(text: str, *, source: str = "<text>") -> dict[str, Any]:
    """Parse ``section.key = value`` lines into a nested dict.

    Args:
        text: Flat configuration text.
        source: Name used in error messages.

    Returns:
        Nested mapping ready for validation.

    Raises:
        ConfigError: On a malformed line.
    """
    data: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, raw = stripped.split("=", 1)
        _assign(data, key, _parse_scalar(raw.strip()))
    return data


def validate_config(raw_data: dict[str, Any]) -> PipelineConfig:
    """Validate a nested mapping, raising ConfigError on failure."""
    try:
        return PipelineConfig.model_validate(raw_data)
    except ValidationError as e:
        raise ConfigError(f"Configuration validation failed: {e}") from e


def load_config(path: Path | None) -> PipelineConfig:
    """Load and validate configuration from a YAML or flat text file.

    Args:
        path: Configuration file, or None for all defaults.

    Returns:
        Validated PipelineConfig instance.

    Raises:
        ConfigError: If file is missing, unreadable, or contains invalid data.
    """
    if path is None:
        return PipelineConfig()

    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file: {e}") from e

    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            raw_data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in configuration file: {e}") from e
        if raw_data is None:
            raw_data = {}
        if not isinstance(raw_data, dict):
            raise ConfigError(f"Configuration must be a mapping, got {type(raw_data).__name__}")
    else:
        raw_data = parse_flat(text, source=str(path))

    return validate_config(raw_data)


def apply_overrides(config: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply ``section.key=value`` overrides and re-validate.

    Args:
        config: Base configuration.
        overrides: Items as given to ``--set``.

    Returns:
        New validated configuration.

    Raises:
        ConfigError: On malformed items or invalid resulting values.
    """
    if not overrides:
        return config
    data = config.model_dump(mode="python")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _assign(data, key, _parse_scalar(raw))
    return validate_config(data)


def _render_value(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Path):
        return value.as_posix()
    return str(value)


def flatten_config(config: PipelineConfig) -> dict[str, str]:
    """Flatten a config into ``section.key -> rendered value``."""
    flat: dict[str, str] = {}
    for section, values in config.model_dump(mode="python").items():
        for key, value in values.items():
            flat[f"{section}.{key}"] = _render_value(value)
    return flat


def render_config(config: PipelineConfig) -> str:
    """Render the fully resolved configuration as sorted flat lines."""
    flat = flatten_config(config)
    return "".join(f"{key} = {flat[key]}\n" for key in sorted(flat))

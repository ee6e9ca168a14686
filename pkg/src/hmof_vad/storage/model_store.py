"""Versioned binary model files and the training manifest.

Autoencoder (``.hmae``), little-endian throughout::

    b"HMAE" | uint32 version | uint32 d | uint32 h
    | float64 w_enc (h*d) | b_enc (h) | w_dec (d*h) | b_dec (d)

Gaussian mixture (``.hmgm``)::

    b"HMGM" | uint32 version | uint32 K | uint32 h
    | float64 weights (K) | means (K*h) | covariances (K*h*h) | reg

Matrices are row-major. The manifest is the flat ``section.key = value``
config rendering plus ``model.*`` lines describing the trained artefacts.
"""

import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError

from hmof_vad.foundation.config import PipelineConfig, flatten_config, parse_flat, validate_config
from hmof_vad.models.autoencoder import AutoEncoderParams
from hmof_vad.models.gmm import GmmModel
from hmof_vad.util.errors import ConfigError, DataError, ModelError

AE_MAGIC = b"HMAE"
GMM_MAGIC = b"HMGM"
FORMAT_VERSION = 1

AE_FILENAME = "autoencoder.hmae"
GMM_FILENAME = "gmm.hmgm"
MANIFEST_FILENAME = "manifest.txt"

_HEADER = struct.Struct("<4sIII")


def _f64(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


def _read_header(raw: bytes, magic: bytes, path: Path) -> tuple[int, int]:
    if len(raw) < _HEADER.size:
        raise ModelError(f"{path.name}: truncated header")
    found, version, a, b = _HEADER.unpack_from(raw)
    if found != magic:
        raise ModelError(f"{path.name}: bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelError(f"{path.name}: unsupported format version {version}")
    return a, b


def _read_floats(raw: bytes, count: int, path: Path) -> np.ndarray:
    expected = _HEADER.size + 8 * count
    if len(raw) != expected:
        raise ModelError(f"{path.name}: expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)


def _read(path: Path) -> bytes:
    if not path.is_file():
        raise ModelError(f"model file not found: {path}")
    return path.read_bytes()


def save_autoencoder(params: AutoEncoderParams, path: Path) -> None:
    """Write autoencoder parameters."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _HEADER.pack(AE_MAGIC, FORMAT_VERSION, params.input_dim, params.latent_dim)
    payload += b"".join(_f64(a) for a in params.arrays())
    path.write_bytes(payload)


def load_autoencoder(path: Path) -> AutoEncoderParams:
    """Read autoencoder parameters.

    Raises:
        ModelError: If the file is missing, malformed or the wrong version.
    """
    raw = _read(path)
    d, h = _read_header(raw, AE_MAGIC, path)
    body = _read_floats(raw, 2 * h * d + h + d, path)
    sizes = [h * d, h, d * h, d]
    w_enc, b_enc, w_dec, b_dec = np.split(body, np.cumsum(sizes)[:-1])
    try:
        return AutoEncoderParams(w_enc.reshape(h, d), b_enc, w_dec.reshape(d, h), b_dec)
    except DataError as e:
        raise ModelError(f"{path.name}: {e}") from e


def save_gmm(model: GmmModel, path: Path) -> None:
    """Write mixture parameters."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _HEADER.pack(GMM_MAGIC, FORMAT_VERSION, model.n_components, model.dim)
    payload += _f64(model.weights) + _f64(model.means) + _f64(model.covariances)
    payload += _f64(np.array([model.reg]))
    path.write_bytes(payload)


def load_gmm(path: Path) -> GmmModel:
    """Read mixture parameters.

    Raises:
        ModelError: If the file is missing, malformed or the wrong version.
    """
    raw = _read(path)
    k, h = _read_header(raw, GMM_MAGIC, path)
    body = _read_floats(raw, k + k * h + k * h * h + 1, path)
    weights, means, covs, reg = np.split(body, np.cumsum([k, k * h, k * h * h]))
    return GmmModel(
        weights=weights,
        means=means.reshape(k, h),
        covariances=covs.reshape(k, h, h),
        reg=float(reg[0]),
    )


class ModelSummary(BaseModel, extra="forbid"):
    """Trained-model facts recorded as ``model.*`` manifest lines."""

    delta: float
    alpha: float
    width: int
    height: int
    fingerprint: str
    n_train_patches: int
    ae_loss_initial: float
    ae_loss_final: float
    gmm_log_likelihood: float


class TrainingManifest(BaseModel, extra="forbid"):
    """Resolved settings and model facts of one training run."""

    settings: dict[str, str]
    model: ModelSummary

    @classmethod
    def build(cls, config: PipelineConfig, model: ModelSummary) -> "TrainingManifest":
        return cls(settings=flatten_config(config), model=model)

    def render(self) -> str:
        lines = dict(self.settings)
        for key, value in self.model.model_dump().items():
            lines[f"model.{key}"] = repr(value) if isinstance(value, float) else str(value)
        return "".join(f"{key} = {lines[key]}\n" for key in sorted(lines))

    def setting(self, key: str) -> str:
        """Raw manifest value of a ``section.key`` setting.

        Raises:
            ModelError: If the manifest lacks the key.
        """
        try:
            return self.settings[key]
        except KeyError:
            raise ModelError(f"manifest has no setting {key!r}") from None

    def config(self) -> PipelineConfig:
        """Settings the models were trained with.

        Raises:
            ModelError: If the recorded settings no longer validate.
        """
        text = "".join(f"{key} = {value}\n" for key, value in self.settings.items())
        try:
            return validate_config(parse_flat(text, source="manifest"))
        except ConfigError as e:
            raise ModelError(f"manifest settings are invalid: {e}") from e


def write_manifest(manifest: TrainingManifest, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.render(), encoding="utf-8")


def read_manifest(path: Path) -> TrainingManifest:
    """Parse a manifest written by ``write_manifest``.

    Raises:
        ModelError: If the file is missing or malformed, or its settings no longer validate.
    """
    if not path.is_file():
        raise ModelError(f"training manifest not found: {path}")
    settings: dict[str, str] = {}
    model: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ModelError(f"{path.name}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key.startswith("model."):
            model[key.removeprefix("model.")] = value
        else:
            settings[key] = value
    try:
        summary = ModelSummary.model_validate(model)
    except ValidationError as e:
        raise ModelError(f"{path.name}: invalid model section: {e}") from e
    manifest = TrainingManifest(settings=settings, model=summary)
    manifest.config()
    return manifest

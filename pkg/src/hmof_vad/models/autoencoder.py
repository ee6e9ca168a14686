"""Single-hidden-layer autoencoder d -> h -> d.

Encoder: z = tanh(W_enc x + b_enc). Decoder: x_hat = W_dec z + b_dec.
Loss is the per-sample mean squared reconstruction error averaged over the
batch. Training is plain mini-batch gradient descent with seeded shuffling;
with ``adaptive_lr`` an epoch that raises the mean training loss is rolled
back and the learning rate halved, so the loss trace never increases.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, Field, PositiveInt

from hmof_vad.util.errors import DataError, DimensionMismatchError
from hmof_vad.util.logging import log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AutoEncoderParams:
    """Weights and biases.

    Attributes:
        w_enc: (h, d) encoder weights.
        b_enc: (h,) encoder bias.
        w_dec: (d, h) decoder weights.
        b_dec: (d,) decoder bias.
    """

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray

    def __post_init__(self) -> None:
        h, d = self.w_enc.shape
        if self.b_enc.shape != (h,) or self.w_dec.shape != (d, h) or self.b_dec.shape != (d,):
            raise DimensionMismatchError(
                f"inconsistent autoencoder shapes: w_enc {self.w_enc.shape}, b_enc "
                f"{self.b_enc.shape}, w_dec {self.w_dec.shape}, b_dec {self.b_dec.shape}"
            )
        for name in ("w_enc", "b_enc", "w_dec", "b_dec"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"autoencoder parameter {name} is not finite")

    @property
    def input_dim(self) -> int:
        return int(self.w_enc.shape[1])

    @property
    def latent_dim(self) -> int:
        return int(self.w_enc.shape[0])

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(w_enc, b_enc, w_dec, b_dec) in file order."""
        return (self.w_enc, self.b_enc, self.w_dec, self.b_dec)

    def equals(self, other: "AutoEncoderParams") -> bool:
        """Bit-identical comparison."""
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


class TrainSettings(BaseModel, extra="forbid", frozen=True):
    """Mini-batch gradient descent settings."""

    epochs: PositiveInt = 200
    learning_rate: float = Field(default=0.1, ge=0.0)
    batch_size: PositiveInt = 64
    seed: int = 1
    adaptive_lr: bool = True


@dataclass
class TrainResult:
    """Outcome of ``train``.

    Attributes:
        params: Trained parameters.
        loss_trace: Mean training loss before training and after each epoch.
        final_lr: Learning rate in effect at the end.
    """

    params: AutoEncoderParams
    loss_trace: list[float] = field(default_factory=list)
    final_lr: float = 0.0


def init(d: int, h: int, seed: int = 1) -> AutoEncoderParams:
    """Seeded initialisation: weights ~ U[-1/sqrt(d), 1/sqrt(d)], zero biases.

    Raises:
        ValueError: If either dimension is < 1.
    """
    if d < 1 or h < 1:
        raise ValueError(f"autoencoder dimensions must be >= 1, got d={d}, h={h}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    w_enc = rng.uniform(-bound, bound, size=(h, d))
    w_dec = rng.uniform(-bound, bound, size=(d, h))
    return AutoEncoderParams(w_enc, np.zeros(h), w_dec, np.zeros(d))


def _as_batch(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    batch = arr[None, :] if arr.ndim == 1 else arr
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise DimensionMismatchError(f"{what} has dimension {batch.shape[-1]}, expected {dim}")
    return batch


def encode_batch(params: AutoEncoderParams, x: np.ndarray) -> np.ndarray:
    """Latent rows tanh(X W_enc^T + b_enc) for a (n, d) batch."""
    batch = _as_batch(x, params.input_dim, "input")
    return np.tanh(batch @ params.w_enc.T + params.b_enc)


def decode_batch(params: AutoEncoderParams, z: np.ndarray) -> np.ndarray:
    """Reconstruction rows Z W_dec^T + b_dec for a (n, h) batch."""
    batch = _as_batch(z, params.latent_dim, "latent")
    return batch @ params.w_dec.T + params.b_dec


def encode(params: AutoEncoderParams, x: np.ndarray) -> np.ndarray:
    """Project one feature vector into the latent space H."""
    return encode_batch(params, np.asarray(x, dtype=np.float64).ravel())[0]


def decode(params: AutoEncoderParams, z: np.ndarray) -> np.ndarray:
    """Reconstruct one feature vector from its latent code."""
    return decode_batch(params, np.asarray(z, dtype=np.float64).ravel())[0]


def reconstruction_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean squared error (1/d) sum (x_i - x_hat_i)^2."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(x_hat, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot compare vectors of length {a.size} and {b.size}")
    return float(np.mean((a - b) ** 2))


def mean_loss(params: AutoEncoderParams, data: np.ndarray) -> float:
    """Mean per-sample reconstruction loss over a (n, d) dataset."""
    batch = _as_batch(data, params.input_dim, "input")
    recon = decode_batch(params, encode_batch(params, batch))
    return float(np.mean((recon - batch) ** 2))


def gradients(params: AutoEncoderParams, batch: np.ndarray) -> tuple[np.ndarray, ...]:
    """Backpropagated gradients of ``mean_loss`` on ``batch``.

    Returns:
        (dw_enc, db_enc, dw_dec, db_dec), matching ``params.arrays()``.
    """
    x = _as_batch(batch, params.input_dim, "input")
    n, d = x.shape
    z = np.tanh(x @ params.w_enc.T + params.b_enc)
    x_hat = z @ params.w_dec.T + params.b_dec

    d_out = 2.0 * (x_hat - x) / (n * d)
    dw_dec = d_out.T @ z
    db_dec = d_out.sum(axis=0)
    d_pre = (d_out @ params.w_dec) * (1.0 - z * z)
    dw_enc = d_pre.T @ x
    db_enc = d_pre.sum(axis=0)
    return dw_enc, db_enc, dw_dec, db_dec


def _step(params: AutoEncoderParams, grads: tuple[np.ndarray, ...], lr: float) -> AutoEncoderParams:
    return AutoEncoderParams(*(p - lr * g for p, g in zip(params.arrays(), grads)))


def train(
    params: AutoEncoderParams,
    dataset: np.ndarray,
    settings: TrainSettings | None = None,
) -> TrainResult:
    """Train by minimising reconstruction error.

    Args:
        params: Starting parameters.
        dataset: (n, d) feature rows.
        settings: Training settings; defaults if None.

    Returns:
        TrainResult with final parameters and the per-epoch loss trace.

    Raises:
        DataError: If the dataset is empty.
        DimensionMismatchError: If rows do not match the input dimension.
    """
    settings = settings or TrainSettings()
    data = np.asarray(dataset, dtype=np.float64)
    if data.size == 0:
        raise DataError("cannot train the autoencoder on an empty dataset")
    data = _as_batch(data, params.input_dim, "training vector")

    rng = np.random.default_rng(settings.seed)
    lr = settings.learning_rate
    current = params
    current_loss = mean_loss(current, data)
    trace = [current_loss]
    n = data.shape[0]

    for epoch in range(settings.epochs):
        order = rng.permutation(n)
        candidate = current
        for start in range(0, n, settings.batch_size):
            batch = data[order[start : start + settings.batch_size]]
            candidate = _step(candidate, gradients(candidate, batch), lr)
        loss = mean_loss(candidate, data)

        if settings.adaptive_lr and loss > current_loss:
            lr *= 0.5
            log_event(
                logger,
                logging.DEBUG,
                f"epoch {epoch} raised loss; learning rate halved to {lr:g}",
                event="ae_lr_halved",
                epoch=epoch,
                lr=lr,
            )
            trace.append(current_loss)
            continue

        current, current_loss = candidate, loss
        trace.append(current_loss)

    log_event(
        logger,
        logging.INFO,
        f"Autoencoder trained: loss {trace[0]:.6g} -> {trace[-1]:.6g}",
        event="ae_trained",
        epochs=settings.epochs,
        loss_initial=trace[0],
        loss_final=trace[-1],
        final_lr=lr,
    )
    return TrainResult(params=current, loss_trace=trace, final_lr=lr)

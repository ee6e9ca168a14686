import numpy as np
import pytest

from hmof_vad.models.autoencoder import (
    AutoEncoderParams,
    TrainSettings,
    decode,
    decode_batch,
    encode,
    encode_batch,
    gradients,
    init,
    mean_loss,
    reconstruction_loss,
    train,
)
from hmof_vad.util.errors import DataError, DimensionMismatchError


def _random_params(rng: np.random.Generator, d: int, h: int) -> AutoEncoderParams:
    return AutoEncoderParams(
        rng.normal(scale=0.7, size=(h, d)),
        rng.normal(scale=0.3, size=h),
        rng.normal(scale=0.7, size=(d, h)),
        rng.normal(scale=0.3, size=d),
    )


def _numeric_gradients(params: AutoEncoderParams, batch: np.ndarray, eps: float = 3e-6) -> list[np.ndarray]:
    arrays = [a.copy() for a in params.arrays()]
    out = []
    for array in arrays:
        grad = np.zeros_like(array)
        for idx in np.ndindex(array.shape):
            original = array[idx]
            array[idx] = original + eps
            plus = mean_loss(AutoEncoderParams(*arrays), batch)
            array[idx] = original - eps
            minus = mean_loss(AutoEncoderParams(*arrays), batch)
            array[idx] = original
            grad[idx] = (plus - minus) / (2 * eps)
        out.append(grad)
    return out


def test_init_shapes_and_bounds():
    params = init(8, 3, seed=5)
    assert params.w_enc.shape == (3, 8)
    assert params.w_dec.shape == (8, 3)
    assert not params.b_enc.any() and not params.b_dec.any()
    bound = 1 / np.sqrt(8)
    assert np.all(np.abs(params.w_enc) <= bound)
    assert np.all(np.abs(params.w_dec) <= bound)
    assert params.equals(init(8, 3, seed=5))
    assert not params.equals(init(8, 3, seed=6))
    with pytest.raises(ValueError):
        init(0, 3)


def test_shape_consistency_enforced():
    with pytest.raises(DimensionMismatchError):
        AutoEncoderParams(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(DataError):
        AutoEncoderParams(np.full((1, 1), np.nan), np.zeros(1), np.zeros((1, 1)), np.zeros(1))


def test_encode_decode():
    params = init(4, 2, seed=1)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    z = encode(params, x)
    assert z.shape == (2,)
    assert np.all(np.abs(z) < 1.0)
    np.testing.assert_allclose(z, np.tanh(params.w_enc @ x))
    np.testing.assert_allclose(decode(params, z), params.w_dec @ z)
    batch = np.vstack([x, x[::-1]])
    np.testing.assert_allclose(encode_batch(params, batch)[0], z)
    assert decode_batch(params, encode_batch(params, batch)).shape == (2, 4)
    with pytest.raises(DimensionMismatchError):
        encode(params, np.zeros(3))


def test_reconstruction_loss_is_mean_squared_error():
    assert reconstruction_loss([1.0, 2.0], [1.0, 0.0]) == pytest.approx(2.0)
    with pytest.raises(DimensionMismatchError):
        reconstruction_loss([1.0], [1.0, 2.0])


def test_backprop_matches_central_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(2, 9))
        h = int(rng.integers(1, 6))
        n = int(rng.integers(1, 7))
        params = _random_params(rng, d, h)
        batch = rng.uniform(size=(n, d))
        analytic = gradients(params, batch)
        numeric = _numeric_gradients(params, batch)
        for a, f in zip(analytic, numeric):
            rel = np.abs(a - f) / (np.abs(f) + 1e-8)
            assert rel.max() < 1e-4


def test_training_lowers_loss_and_trace_never_rises():
    rng = np.random.default_rng(3)
    latent = rng.uniform(-1, 1, size=(200, 2))
    data = latent @ rng.normal(size=(2, 6)) * 0.3 + 0.5
    result = train(init(6, 2, seed=1), data, TrainSettings(epochs=40, learning_rate=0.5, batch_size=16))
    trace = np.array(result.loss_trace)
    assert len(trace) == 41
    assert np.all(np.diff(trace) <= 0.0)
    assert trace[-1] < trace[0]
    assert result.loss_trace[-1] == pytest.approx(mean_loss(result.params, data))


def test_too_large_rate_is_halved():
    rng = np.random.default_rng(8)
    data = rng.uniform(size=(50, 4))
    result = train(init(4, 3, seed=2), data, TrainSettings(epochs=10, learning_rate=200.0, batch_size=50))
    assert result.final_lr < 200.0
    assert np.all(np.diff(result.loss_trace) <= 0.0)


def test_training_is_deterministic():
    data = np.random.default_rng(1).uniform(size=(30, 5))
    settings = TrainSettings(epochs=5, learning_rate=0.2, batch_size=7, seed=4)
    first = train(init(5, 2), data, settings)
    second = train(init(5, 2), data, settings)
    assert first.params.equals(second.params)
    assert first.loss_trace == second.loss_trace


def test_empty_or_mismatched_dataset():
    with pytest.raises(DataError):
        train(init(3, 2), np.zeros((0, 3)))
    with pytest.raises(DimensionMismatchError):
        train(init(3, 2), np.zeros((4, 5)))


def test_single_vector_is_memorised():
    x = np.array([[0.5, 0.25, 0.125, 0.0625, 0.0625, 0.0, 0.0, 0.0]])
    result = train(init(8, 4, seed=1), x, TrainSettings(epochs=500, learning_rate=0.05, batch_size=1))
    assert result.loss_trace[-1] < 1e-3
    assert reconstruction_loss(x[0], decode(result.params, encode(result.params, x[0]))) < 1e-3


def test_zero_learning_rate_leaves_parameters_unchanged():
    start = init(5, 3, seed=7)
    data = np.random.default_rng(2).uniform(size=(20, 5))
    result = train(start, data, TrainSettings(epochs=4, learning_rate=0.0, batch_size=6))
    assert result.params.equals(start)
    assert len(set(result.loss_trace)) == 1

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hmof_vad.features.descriptors import (
    DescriptorKind,
    DescriptorSpec,
    HmofConfig,
    calibrate_delta,
    hmof,
    flow_angles,
    hmof_batch,
    hof,
    hof_batch,
    mhof,
    mhof_batch,
)
from hmof_vad.util.errors import DataError


def _brute_force_bin(m: float, n: int, delta: float) -> int:
    for i in range(1, n + 1):
        lower = (i - 1) / n * delta
        upper = i / n * delta
        if i == n and m >= lower:
            return i - 1
        if lower <= m < upper:
            return i - 1
    raise AssertionError(f"magnitude {m} fell in no bin")


def test_delta_discards_top_five_percent():
    assert calibrate_delta(np.arange(1.0, 101.0)) == 95.0
    # 0.05 * 60 = 3 values dropped, not 4.
    assert calibrate_delta(np.arange(1.0, 61.0)) == 57.0
    assert calibrate_delta([3.0, 1.0, 2.0], discard_fraction=0.0) == 3.0
    assert calibrate_delta(np.arange(1.0, 21.0), discard_fraction=0.1) == 18.0


@pytest.mark.parametrize(
    ("magnitudes", "fraction", "expected"),
    [
        (np.arange(1.0, 21.0), 0.05, 19.0),
        ([2.0] * 40, 0.05, 2.0),
        ([1.0, 5.0, 5.0, 5.0], 0.25, 5.0),
        ([0.0, 0.0, 3.0, 7.0], 0.25, 3.0),
        ([4.0], 0.0, 4.0),
    ],
)
def test_delta_quantile_edges(magnitudes, fraction: float, expected: float):
    assert calibrate_delta(magnitudes, fraction) == expected


def test_delta_needs_a_remainder():
    # ceil(0.05 * 1) = 1 value discarded out of 1.
    with pytest.raises(DataError, match="leaves none"):
        calibrate_delta([4.0], 0.05)
    with pytest.raises(DataError, match="all zero"):
        calibrate_delta([0.0, 0.0, 0.0, 9.0], 0.25)


def test_delta_failures():
    with pytest.raises(DataError):
        calibrate_delta([])
    with pytest.raises(DataError, match="all zero"):
        calibrate_delta(np.zeros(50))
    with pytest.raises(ValueError):
        calibrate_delta([1.0], discard_fraction=1.0)


def test_hmof_bin_boundaries():
    cfg = HmofConfig(n=4, delta=1.0)
    vector = hmof([0.0, 0.25, 0.5, 0.99, 1.0, 5.0], cfg)
    assert vector.kind is DescriptorKind.HMOF
    np.testing.assert_allclose(vector.values, [1 / 6, 1 / 6, 1 / 6, 3 / 6])
    with pytest.raises(DataError):
        hmof([], cfg)


@settings(max_examples=40, deadline=None)
@given(
    mags=hnp.arrays(
        np.float64,
        st.tuples(st.integers(1, 25), st.integers(1, 40)),
        elements=st.floats(min_value=0.0, max_value=8.0, allow_nan=False),
    ),
    n=st.integers(min_value=1, max_value=12),
    delta=st.floats(min_value=0.05, max_value=6.0),
)
def test_hmof_matches_interval_scan(mags: np.ndarray, n: int, delta: float):
    cfg = HmofConfig(n=n, delta=delta)
    batch = hmof_batch(mags, cfg)
    assert batch.shape == (mags.shape[0], n)
    np.testing.assert_allclose(batch.sum(axis=1), 1.0)
    for row, values in zip(mags, batch):
        counts = np.zeros(n)
        for m in row:
            counts[_brute_force_bin(float(m), n, delta)] += 1
        np.testing.assert_allclose(values * row.size, counts, rtol=0, atol=1e-9)


def test_hmof_on_thousand_random_patches():
    rng = np.random.default_rng(11)
    cfg = HmofConfig(n=8, delta=2.0)
    mags = rng.exponential(1.0, size=(1000, 16))
    mags[::7, ::3] = rng.choice(cfg.edges(), size=mags[::7, ::3].shape)
    batch = hmof_batch(mags, cfg)
    expected = np.zeros_like(batch)
    for p, row in enumerate(mags):
        for m in row:
            expected[p, _brute_force_bin(float(m), 8, 2.0)] += 1
    np.testing.assert_allclose(batch * 16, expected, rtol=0, atol=1e-9)


def test_hof_is_magnitude_weighted():
    vector = hof([(1.0, 1.0), (-2.0, 2.0)], n_dir=4)
    np.testing.assert_allclose(vector.values, [1 / 3, 2 / 3, 0.0, 0.0])
    quadrants = hof([(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)], n_dir=4)
    np.testing.assert_allclose(quadrants.values, [0.25] * 4)


def test_motionless_patch_is_zero_vector():
    np.testing.assert_array_equal(hof(np.zeros((9, 2)), n_dir=8).values, np.zeros(8))
    np.testing.assert_array_equal(mhof(np.zeros((9, 2)), n_dir=4).values, np.zeros(8))


def test_mhof_splits_magnitude_bands():
    vector = mhof([(0.5, 0.5), (2.0, 2.0)], n_dir=4, m_thresh=1.0)
    assert vector.dimension == 8
    np.testing.assert_allclose(vector.values, [0.2, 0, 0, 0, 0.8, 0, 0, 0])
    with pytest.raises(ValueError):
        mhof([(1.0, 0.0)], n_dir=4, m_thresh=0.0)


def test_spec_dimension_and_describe():
    spec = DescriptorSpec(kind=DescriptorKind.MHOF, bins=6, delta=2.0)
    assert spec.dimension == 12
    assert spec.band_threshold == 1.0
    assert spec.describe(np.zeros((0, 4)), np.zeros((0, 4))).shape == (0, 12)

    rng = np.random.default_rng(2)
    u = rng.normal(size=(5, 16))
    v = rng.normal(size=(5, 16))
    hmof_spec = DescriptorSpec(kind=DescriptorKind.HMOF, bins=5, delta=1.5)
    np.testing.assert_array_equal(
        hmof_spec.describe(u, v), hmof_batch(np.hypot(u, v), HmofConfig(n=5, delta=1.5))
    )
    hof_rows = DescriptorSpec(kind=DescriptorKind.HOF, bins=8, delta=1.0).describe(u, v)
    np.testing.assert_allclose(hof_rows.sum(axis=1), 1.0)


@pytest.mark.parametrize("kwargs", [{"n": 0}, {"delta": 0.0}, {"discard_fraction": 1.0}])
def test_hmof_config_validation(kwargs):
    with pytest.raises(ValueError):
        HmofConfig(**kwargs)


def test_hmof_worked_example():
    cfg = HmofConfig(n=8, delta=8.0)
    np.testing.assert_allclose(hmof([0.5, 1.5, 9.0, 9.0], cfg).values, [0.25, 0.25, 0, 0, 0, 0, 0, 0.5])
    assert int(np.argmax(hmof([1.0], cfg).values)) == 1
    np.testing.assert_array_equal(hmof(np.zeros(5), cfg).values, [1, 0, 0, 0, 0, 0, 0, 0])


def test_hmof_ignores_pixel_duplication_and_rotation():
    rng = np.random.default_rng(21)
    cfg = HmofConfig(n=8, delta=2.0)
    u = rng.normal(size=50)
    v = rng.normal(size=50)
    base = hmof(np.hypot(u, v), cfg).values
    np.testing.assert_allclose(hmof(np.tile(np.hypot(u, v), 2), cfg).values, base)

    c, s = np.cos(1.1), np.sin(1.1)
    ru, rv = c * u - s * v, s * u + c * v
    np.testing.assert_allclose(hmof(np.hypot(ru, rv), cfg).values, base)
    # Orientation histograms do move under rotation.
    assert not np.allclose(hof(np.column_stack([ru, rv])).values, hof(np.column_stack([u, v])).values)


def _brute_force_sector(theta: float, n_dir: int) -> int:
    for j in range(n_dir):
        if j * (2.0 * np.pi) / n_dir <= theta < (j + 1) * (2.0 * np.pi) / n_dir:
            return j
    raise AssertionError(f"angle {theta} fell in no sector")


def _oracle(u: np.ndarray, v: np.ndarray, n_dir: int, m_thresh: float | None) -> np.ndarray:
    n_bins = n_dir if m_thresh is None else 2 * n_dir
    out = np.zeros((u.shape[0], n_bins))
    angles = flow_angles(u, v)
    for p in range(u.shape[0]):
        for i in range(u.shape[1]):
            m = float(np.hypot(u[p, i], v[p, i]))
            b = _brute_force_sector(float(angles[p, i]), n_dir)
            if m_thresh is not None and m >= m_thresh:
                b += n_dir
            out[p, b] += m
        total = out[p].sum()
        if total > 0:
            out[p] /= total
    return out


def _random_flow(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    u = rng.normal(scale=1.5, size=(1000, 16))
    v = rng.normal(scale=1.5, size=(1000, 16))
    # Some motionless patches and pixels.
    u[::50] = 0.0
    v[::50] = 0.0
    u[:, ::5] = 0.0
    v[:, ::5] = 0.0
    return u, v


def test_hof_matches_sector_scan_on_thousand_patches():
    u, v = _random_flow(31)
    batch = hof_batch(u, v, 8)
    np.testing.assert_allclose(batch, _oracle(u, v, 8, None), rtol=0, atol=1e-12)
    sums = batch.sum(axis=1)
    assert np.all(np.isclose(sums, 1.0) | (sums == 0.0))
    assert not batch[::50].any()


def test_mhof_matches_band_and_sector_scan_on_thousand_patches():
    u, v = _random_flow(32)
    batch = mhof_batch(u, v, 8, 1.5)
    assert batch.shape == (1000, 16)
    np.testing.assert_allclose(batch, _oracle(u, v, 8, 1.5), rtol=0, atol=1e-12)
    sums = batch.sum(axis=1)
    assert np.all(np.isclose(sums, 1.0) | (sums == 0.0))

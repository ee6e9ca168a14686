import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmof_vad.core.frames import Frame, partition
from hmof_vad.util.errors import DataError, DimensionMismatchError
from hmof_vad.vision.foreground import (
    AlphaMap,
    BackgroundModel,
    ForegroundTracker,
    estimate_alpha,
    patch_foreground_value,
    patch_foreground_values,
    select_patches,
    update_background,
)


def test_running_average_update():
    model = BackgroundModel(np.zeros((2, 2)), learning_rate=0.25)
    updated = update_background(model, Frame(np.ones((2, 2))))
    np.testing.assert_allclose(updated.background, 0.25)
    again = update_background(updated, Frame(np.ones((2, 2))))
    np.testing.assert_allclose(again.background, 0.4375)


def test_background_must_be_unit_range_grid():
    with pytest.raises(DataError):
        BackgroundModel(np.full((2, 2), 1.5))
    with pytest.raises(DataError):
        BackgroundModel(np.array([[0.2, np.nan]]))
    with pytest.raises(DimensionMismatchError):
        BackgroundModel(np.zeros(4))


def test_blend_stays_in_unit_range():
    model = BackgroundModel(np.ones((3, 3)), learning_rate=0.3)
    for _ in range(20):
        model = update_background(model, Frame(np.ones((3, 3))))
    assert model.background.max() <= 1.0


@pytest.mark.parametrize("rate", [0.0, -0.1, 1.5])
def test_learning_rate_range(rate: float):
    with pytest.raises(ValueError):
        BackgroundModel(np.zeros((2, 2)), learning_rate=rate)


def test_alpha_saturates_at_sensitivity():
    model = BackgroundModel(np.zeros((1, 3)))
    alpha = estimate_alpha(model, Frame(np.array([[0.0, 0.05, 0.2]])), sensitivity=0.1)
    np.testing.assert_allclose(alpha.a, [[0.0, 0.5, 1.0]])
    with pytest.raises(ValueError):
        estimate_alpha(model, Frame(np.zeros((1, 3))), sensitivity=0.0)
    with pytest.raises(DimensionMismatchError):
        estimate_alpha(model, Frame(np.zeros((2, 3))), sensitivity=0.1)


def test_patch_values_sum_foreground_intensity():
    rng = np.random.default_rng(4)
    frame = Frame(rng.uniform(size=(9, 13)))
    alpha = AlphaMap(rng.uniform(size=(9, 13)))
    grid = partition(13, 9, 4)
    values = patch_foreground_values(alpha, frame, grid)
    assert values.shape == (grid.n_patches,)
    for pid in range(grid.n_patches):
        assert values[pid] == pytest.approx(patch_foreground_value(alpha, frame, grid, pid))
    with pytest.raises(IndexError):
        patch_foreground_value(alpha, frame, grid, grid.n_patches)


def test_selection_is_strictly_above_tau():
    selection = select_patches([1.0, 2.0, 3.0, 2.5], tau=2.0, frame_index=7)
    assert selection.selected == (2, 3)
    assert selection.frame_index == 7
    assert len(selection) == 2
    by_id = select_patches({4: 0.5, 1: 9.0}, tau=0.5)
    assert by_id.selected == (1,)
    assert list(by_id.values) == [1, 4]


def test_tracker_warmup_then_selects_new_object():
    grid = partition(16, 16, 4)
    tracker = ForegroundTracker(grid, warmup_frames=3)
    assert tracker.tau == pytest.approx(0.8)
    empty = np.zeros((16, 16))
    for index in range(3):
        selection, _ = tracker.step(Frame(empty, index=index))
        assert selection.selected == ()
    square = empty.copy()
    square[4:8, 4:8] = 1.0
    selection, alpha = tracker.step(Frame(square, index=3))
    assert selection.selected == (grid.patch_id(1, 1),)
    assert selection.values[5] == pytest.approx(16.0)
    assert alpha.a[5, 5] == 1.0
    np.testing.assert_allclose(tracker.model.background[4:8, 4:8], 0.05)


def test_tracker_rejects_bad_sensitivity():
    with pytest.raises(ValueError):
        ForegroundTracker(partition(8, 8, 4), sensitivity=0.0)


unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(background=unit, near=unit, far=unit, sensitivity=st.floats(min_value=0.01, max_value=1.0))
def test_alpha_is_monotone_in_deviation(background: float, near: float, far: float, sensitivity: float):
    if abs(near - background) > abs(far - background):
        near, far = far, near
    model = BackgroundModel(np.array([[background, background]]))
    alpha = estimate_alpha(model, Frame(np.array([[near, far]])), sensitivity).a
    assert 0.0 <= alpha[0, 0] <= alpha[0, 1] <= 1.0


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.floats(min_value=0.0, max_value=50.0, allow_nan=False), min_size=1, max_size=30),
    low=st.floats(min_value=-1.0, max_value=50.0),
    high=st.floats(min_value=-1.0, max_value=50.0),
)
def test_raising_tau_never_enlarges_selection(values: list[float], low: float, high: float):
    low, high = min(low, high), max(low, high)
    loose = set(select_patches(values, tau=low).selected)
    strict = set(select_patches(values, tau=high).selected)
    assert strict <= loose


def test_static_scene_selects_nothing():
    rng = np.random.default_rng(8)
    pixels = np.round(rng.uniform(0.1, 0.9, size=(16, 20)) * 255.0) / 255.0
    tracker = ForegroundTracker(partition(20, 16, 4), warmup_frames=3)
    for index in range(12):
        selection, alpha = tracker.step(Frame(pixels, index=index))
        assert selection.selected == ()
        assert alpha.a.max() < 1e-9

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmof_vad.core.frames import Frame, FrameSequence, partition
from hmof_vad.util.errors import DataError, DimensionMismatchError


def test_frame_validates_intensities():
    with pytest.raises(DataError):
        Frame(np.full((4, 4), 1.5))
    with pytest.raises(DataError):
        Frame(np.array([[0.1, np.nan]]))
    with pytest.raises(DataError):
        Frame(np.zeros(5))
    with pytest.raises(DataError):
        Frame(np.zeros((0, 3)))


def test_frame_is_an_immutable_copy():
    raw = np.zeros((3, 4))
    frame = Frame(raw, index=2)
    raw[0, 0] = 1.0
    assert frame.intensity[0, 0] == 0.0
    assert frame.shape == (3, 4)
    assert (frame.width, frame.height) == (4, 3)
    with pytest.raises(ValueError):
        frame.intensity[0, 0] = 0.5


def test_sequence_indices_and_sizes():
    seq = FrameSequence.from_arrays([np.zeros((2, 3)), np.ones((2, 3))], fps=25.0)
    assert len(seq) == 2
    assert seq.fps == 25.0
    assert [pair[1].index for pair in seq.pairs()] == [1]
    with pytest.raises(DataError):
        FrameSequence((Frame(np.zeros((2, 3)), index=1),))
    with pytest.raises(DimensionMismatchError):
        FrameSequence.from_arrays([np.zeros((2, 3)), np.zeros((3, 2))])


def test_partition_floors_and_ids_are_row_major():
    grid = partition(50, 45, 10)
    assert (grid.rows, grid.cols, grid.n_patches) == (4, 5, 20)
    assert grid.coords(7) == (1, 2)
    assert grid.patch_id(1, 2) == 7
    assert grid.origin(7) == (20, 10)
    assert grid.origin(19) == (40, 30)
    with pytest.raises(IndexError):
        grid.coords(20)


@pytest.mark.parametrize("args", [(10, 10, 0), (10, 10, 11), (0, 10, 1), (12, 8, 9)])
def test_partition_rejects_bad_patch_size(args):
    with pytest.raises(ValueError):
        partition(*args)


def test_blocks_match_slices():
    grid = partition(14, 9, 4)
    image = np.arange(9 * 14, dtype=np.float64).reshape(9, 14)
    blocks = grid.blocks(image)
    assert blocks.shape == (grid.n_patches, 16)
    for pid in range(grid.n_patches):
        rows, cols = grid.slices(pid)
        np.testing.assert_array_equal(blocks[pid], image[rows, cols].ravel())
    with pytest.raises(DimensionMismatchError):
        grid.blocks(np.zeros((8, 14)))


def test_mask_of_selected_patches():
    grid = partition(12, 8, 4)
    mask = grid.mask([0, 5])
    expected = np.zeros((8, 12), dtype=bool)
    expected[0:4, 0:4] = True
    expected[4:8, 8:12] = True
    np.testing.assert_array_equal(mask, expected)
    assert not grid.mask([]).any()
    with pytest.raises(IndexError):
        grid.mask([6])


@settings(max_examples=50, deadline=None)
@given(
    width=st.integers(min_value=1, max_value=40),
    height=st.integers(min_value=1, max_value=40),
    patch_size=st.integers(min_value=1, max_value=12),
)
def test_patches_tile_without_overlap(width: int, height: int, patch_size: int):
    if patch_size > min(width, height):
        with pytest.raises(ValueError):
            partition(width, height, patch_size)
        return
    grid = partition(width, height, patch_size)
    counts = np.zeros((height, width), dtype=int)
    for pid in range(grid.n_patches):
        counts += grid.mask([pid])
    assert counts.max() == 1
    assert counts.sum() == grid.rows * grid.cols * patch_size**2
    assert grid.rows == height // patch_size
    assert grid.cols == width // patch_size

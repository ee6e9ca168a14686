import numpy as np
import pytest
from pydantic import ValidationError
from scipy import ndimage

from hmof_vad.core.frames import Frame
from hmof_vad.util.errors import DataError, DimensionMismatchError
from hmof_vad.vision.flow import FlowField, FlowSettings, _NeighbourAverage, estimate_flow, magnitude

SLOPE = 0.02
INTERIOR = (slice(12, 28), slice(12, 28))


def _ramp(shift: float = 0.0, size: int = 40, vertical: bool = False) -> Frame:
    """Linear intensity ramp moved ``shift`` pixels right (or down)."""
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    coord = y if vertical else x
    return Frame(0.1 + SLOPE * (coord - shift))


def test_identical_frames_have_zero_flow():
    frame = _ramp()
    flow = estimate_flow(frame, frame)
    assert flow.u.dtype == np.float64
    assert not flow.u.any()
    assert not flow.v.any()


def test_static_textured_frames_have_negligible_flow():
    rng = np.random.default_rng(5)
    frame = Frame(rng.uniform(0.2, 0.8, size=(24, 32)))
    flow = estimate_flow(frame, Frame(frame.intensity.copy()))
    assert np.abs(flow.u).max() < 1e-3
    assert np.abs(flow.v).max() < 1e-3


def test_one_pixel_shift_right_recovers_unit_flow():
    flow = estimate_flow(_ramp(), _ramp(1.0), FlowSettings(iterations=200))
    assert float(flow.u[INTERIOR].mean()) == pytest.approx(1.0, abs=0.3)
    assert float(np.abs(flow.v[INTERIOR]).mean()) < 0.2


def test_one_pixel_shift_down_recovers_unit_flow():
    flow = estimate_flow(_ramp(vertical=True), _ramp(1.0, vertical=True), FlowSettings(iterations=200))
    assert float(flow.v[INTERIOR].mean()) == pytest.approx(1.0, abs=0.3)
    assert float(np.abs(flow.u[INTERIOR]).mean()) < 0.2


def test_doubling_the_shift_doubles_the_magnitude():
    settings = FlowSettings(iterations=200)
    one = magnitude(estimate_flow(_ramp(), _ramp(1.0), settings)).m[INTERIOR].mean()
    two = magnitude(estimate_flow(_ramp(), _ramp(2.0), settings)).m[INTERIOR].mean()
    assert two / one == pytest.approx(2.0, rel=0.3)


def test_neighbour_average_matches_kernel_correlation():
    kernel = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])
    rng = np.random.default_rng(9)
    field = rng.normal(size=(2, 7, 11))
    average = _NeighbourAverage(7, 11)
    average.field[...] = field
    out = average()
    for c in range(2):
        expected = ndimage.correlate(field[c].astype(np.float32).astype(np.float64), kernel, mode="nearest")
        np.testing.assert_allclose(out[c], expected, atol=1e-5)


def test_estimates_are_deterministic():
    first = estimate_flow(_ramp(), _ramp(1.0), FlowSettings(iterations=30))
    second = estimate_flow(_ramp(), _ramp(1.0), FlowSettings(iterations=30))
    np.testing.assert_array_equal(first.u, second.u)
    np.testing.assert_array_equal(first.v, second.v)


def test_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        estimate_flow(Frame(np.zeros((4, 4))), Frame(np.zeros((4, 5))))


def test_flow_field_checks():
    with pytest.raises(DimensionMismatchError):
        FlowField(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(DataError):
        FlowField(np.array([[np.inf]]), np.zeros((1, 1)))
    zero = FlowField.zeros(3, 5)
    assert (zero.height, zero.width) == (3, 5)


def test_magnitude_is_euclidean_norm():
    flow = FlowField(np.array([[3.0, 0.0]]), np.array([[4.0, -2.0]]))
    np.testing.assert_allclose(magnitude(flow).m, [[5.0, 2.0]])


@pytest.mark.parametrize("theta", [0.3, np.pi / 2, 2.0, np.pi, 5.5])
def test_magnitude_is_rotation_invariant(theta: float):
    rng = np.random.default_rng(4)
    u = rng.normal(size=(6, 8))
    v = rng.normal(size=(6, 8))
    c, s = np.cos(theta), np.sin(theta)
    rotated = FlowField(c * u - s * v, s * u + c * v)
    np.testing.assert_allclose(magnitude(rotated).m, magnitude(FlowField(u, v)).m, rtol=0, atol=1e-9)


def test_settings_validation():
    with pytest.raises(ValidationError):
        FlowSettings(iterations=0)
    with pytest.raises(ValidationError):
        FlowSettings(smoothness=-1.0)

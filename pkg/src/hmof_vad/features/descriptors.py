"""Patch motion descriptors: HMOF and the HOF / MHOF baselines.

HMOF bins flow magnitudes only. With n bins and calibration threshold
delta, bin i (1-based) covers [(i-1)/n * delta, i/n * delta) and the last
bin is open-ended. Every pixel lands in exactly one bin, so an HMOF vector
always sums to 1.

HOF bins flow direction into equal sectors of [0, 2*pi), weighting each
pixel by its magnitude. MHOF repeats the sector histogram for a low and a
high magnitude band. Both return the zero vector for a motionless patch.

Single-patch functions return a ``FeatureVector``; the ``*_batch``
variants take (n_patches, n_pixels) arrays and return (n_patches, d).
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from hmof_vad.util.errors import DataError

TWO_PI = 2.0 * np.pi


class DescriptorKind(str, Enum):
    """Descriptor family."""

    HMOF = "hmof"
    HOF = "hof"
    MHOF = "mhof"


@dataclass(frozen=True)
class HmofConfig:
    """HMOF binning.

    Attributes:
        n: Number of magnitude bins.
        delta: Magnitude threshold in pixels per frame.
        discard_fraction: Share of the largest training magnitudes ignored
            when calibrating delta.
    """

    n: int = 8
    delta: float = 1.0
    discard_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not 0.0 <= self.discard_fraction < 1.0:
            raise ValueError(f"discard_fraction must be in [0, 1), got {self.discard_fraction}")

    def edges(self) -> np.ndarray:
        """Inner bin edges i/n * delta for i = 1..n-1."""
        return np.array([i / self.n * self.delta for i in range(1, self.n)])


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Normalised histogram of one patch."""

    values: np.ndarray
    kind: DescriptorKind

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


def _discard_count(fraction: float, n: int) -> int:
    # Rounded first so that e.g. 0.05 * 60 does not ceil to 4.
    return math.ceil(round(fraction * n, 9))


def calibrate_delta(magnitudes: Sequence[float] | np.ndarray, discard_fraction: float = 0.05) -> float:
    """Calibrate the HMOF magnitude threshold from training magnitudes.

    Sorts ascending, drops the top ceil(fraction * N) values and returns
    the maximum of the rest.

    Raises:
        ValueError: If discard_fraction is outside [0, 1).
        DataError: If there are no magnitudes or the remainder is empty or
            all zero.
    """
    if not 0.0 <= discard_fraction < 1.0:
        raise ValueError(f"discard_fraction must be in [0, 1), got {discard_fraction}")
    values = np.sort(np.asarray(magnitudes, dtype=np.float64).ravel())
    if values.size == 0:
        raise DataError("cannot calibrate delta from an empty magnitude set")
    keep = values.size - _discard_count(discard_fraction, values.size)
    if keep <= 0:
        raise DataError(f"discarding {discard_fraction:.0%} of {values.size} magnitudes leaves none")
    delta = float(values[keep - 1])
    if delta <= 0.0:
        raise DataError("degenerate training set: remaining flow magnitudes are all zero")
    return delta


def flow_angles(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Flow direction in [0, 2*pi)."""
    theta = np.mod(np.arctan2(v, u), TWO_PI)
    return np.where(theta >= TWO_PI, 0.0, theta)


def sector_edges(n_dir: int) -> np.ndarray:
    """Inner sector edges j * 2*pi / n_dir for j = 1..n_dir-1."""
    return np.array([j * TWO_PI / n_dir for j in range(1, n_dir)])


def _check_pixels(n_pixels: int) -> None:
    if n_pixels == 0:
        raise DataError("cannot describe an empty patch")


def _normalise_rows(hist: np.ndarray) -> np.ndarray:
    totals = hist.sum(axis=1, keepdims=True)
    out = np.zeros_like(hist)
    np.divide(hist, totals, out=out, where=totals > 0)
    return out


def _weighted_hist(bins: np.ndarray, weights: np.ndarray, n_bins: int) -> np.ndarray:
    n_patches = bins.shape[0]
    flat = (bins + np.arange(n_patches)[:, None] * n_bins).ravel()
    counts = np.bincount(flat, weights=weights.ravel(), minlength=n_patches * n_bins)
    return counts.reshape(n_patches, n_bins)


def hmof_batch(magnitudes: np.ndarray, cfg: HmofConfig) -> np.ndarray:
    """HMOF for each row of a (n_patches, n_pixels) magnitude array."""
    mags = np.atleast_2d(np.asarray(magnitudes, dtype=np.float64))
    _check_pixels(mags.shape[1])
    bins = np.searchsorted(cfg.edges(), mags, side="right")
    counts = _weighted_hist(bins, np.ones_like(mags), cfg.n)
    return counts / mags.shape[1]


def hof_batch(u: np.ndarray, v: np.ndarray, n_dir: int) -> np.ndarray:
    """HOF for each row of (n_patches, n_pixels) flow component arrays."""
    if n_dir < 1:
        raise ValueError(f"n_dir must be >= 1, got {n_dir}")
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    _check_pixels(u.shape[1])
    sectors = np.searchsorted(sector_edges(n_dir), flow_angles(u, v), side="right")
    return _normalise_rows(_weighted_hist(sectors, np.hypot(u, v), n_dir))


def mhof_batch(u: np.ndarray, v: np.ndarray, n_dir: int, m_thresh: float) -> np.ndarray:
    """MHOF for each row of (n_patches, n_pixels) flow component arrays.

    Bins 0..n_dir-1 hold motion below ``m_thresh``; bins n_dir..2n_dir-1
    hold motion at or above it.
    """
    if n_dir < 1:
        raise ValueError(f"n_dir must be >= 1, got {n_dir}")
    if not m_thresh > 0:
        raise ValueError(f"m_thresh must be > 0, got {m_thresh}")
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    _check_pixels(u.shape[1])
    mags = np.hypot(u, v)
    sectors = np.searchsorted(sector_edges(n_dir), flow_angles(u, v), side="right")
    bins = sectors + n_dir * (mags >= m_thresh)
    return _normalise_rows(_weighted_hist(bins, mags, 2 * n_dir))


def _split_flow(patch_flow: Sequence[tuple[float, float]] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.asarray(patch_flow, dtype=np.float64).reshape(-1, 2)
    return pairs[:, 0][None, :], pairs[:, 1][None, :]


def hmof(patch_magnitudes: Sequence[float] | np.ndarray, cfg: HmofConfig) -> FeatureVector:
    """HMOF of one patch.

    Raises:
        DataError: If the patch has no pixels.
    """
    mags = np.asarray(patch_magnitudes, dtype=np.float64).ravel()
    return FeatureVector(hmof_batch(mags[None, :], cfg)[0], DescriptorKind.HMOF)


def hof(patch_flow: Sequence[tuple[float, float]] | np.ndarray, n_dir: int = 8) -> FeatureVector:
    """Magnitude-weighted orientation histogram of one patch's (u, v) vectors."""
    u, v = _split_flow(patch_flow)
    return FeatureVector(hof_batch(u, v, n_dir)[0], DescriptorKind.HOF)


def mhof(
    patch_flow: Sequence[tuple[float, float]] | np.ndarray,
    n_dir: int = 8,
    m_thresh: float = 1.0,
) -> FeatureVector:
    """Two-band orientation histogram of one patch's (u, v) vectors."""
    u, v = _split_flow(patch_flow)
    return FeatureVector(mhof_batch(u, v, n_dir, m_thresh)[0], DescriptorKind.MHOF)


@dataclass(frozen=True)
class DescriptorSpec:
    """Everything needed to turn patch flow into feature rows.

    Attributes:
        kind: Descriptor family.
        bins: HMOF bin count, or sector count for HOF/MHOF.
        delta: Calibrated magnitude threshold.
        mhof_thresh: MHOF band split; None means delta / 2.
    """

    kind: DescriptorKind
    bins: int
    delta: float
    mhof_thresh: float | None = None

    @property
    def dimension(self) -> int:
        return 2 * self.bins if self.kind is DescriptorKind.MHOF else self.bins

    @property
    def band_threshold(self) -> float:
        return self.delta / 2.0 if self.mhof_thresh is None else self.mhof_thresh

    def describe(self, u_blocks: np.ndarray, v_blocks: np.ndarray) -> np.ndarray:
        """Feature rows for (n_patches, n_pixels) flow blocks."""
        if u_blocks.shape[0] == 0:
            return np.zeros((0, self.dimension))
        if self.kind is DescriptorKind.HMOF:
            cfg = HmofConfig(n=self.bins, delta=self.delta)
            return hmof_batch(np.hypot(u_blocks, v_blocks), cfg)
        if self.kind is DescriptorKind.HOF:
            return hof_batch(u_blocks, v_blocks, self.bins)
        return mhof_batch(u_blocks, v_blocks, self.bins, self.band_threshold)

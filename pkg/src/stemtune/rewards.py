"""Image-quality rewards: RMS contrast and masked FFT spectral power."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

EPSILON = 1e-8
DC_RADIUS_AT_64 = 3.0


@dataclass(frozen=True)
class RewardVector:
    contrast: float
    fft: float

    def __post_init__(self):
        for name in ("contrast", "fft"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise InvalidArgument(f"{name} reward must be finite and nonnegative, got {value!r}")

    def as_array(self):
        return np.array([self.contrast, self.fft])


@dataclass(frozen=True)
class FftMaskConfig:
    """DC mask radius in frequency bins; ``None`` scales 3 bins per 64 pixels."""

    dc_radius: float | None = None

    def radius_for(self, grid_size):
        radius = self.dc_radius
        if radius is None:
            radius = max(1.0, DC_RADIUS_AT_64 * grid_size / 64.0)
        if not 1 <= radius < grid_size / 4:
            raise InvalidArgument(
                f"dc_radius {radius} outside [1, {grid_size / 4}) for grid size {grid_size}"
            )
        return float(radius)


def _data(image):
    data = np.asarray(getattr(image, "data", image), dtype=float)
    if data.size == 0:
        raise InvalidArgument("image is empty")
    return data


def contrast_reward(image, epsilon=EPSILON):
    data = _data(image)
    if np.ptp(data) == 0:  # exact zero despite rounding in the mean
        return 0.0
    return float(data.std() / (data.mean() + epsilon))


def highpass_mask(shape, dc_radius):
    """1 everywhere except a disk of ``dc_radius`` bins around zero frequency."""
    fy = np.fft.fftfreq(shape[0]) * shape[0]
    fx = np.fft.fftfreq(shape[1]) * shape[1]
    dist = np.hypot(fy[:, None], fx[None, :])
    return (dist > dc_radius).astype(float)


def fft_reward(image, mask=None):
    data = _data(image)
    radius = (mask or FftMaskConfig()).radius_for(min(data.shape))
    if np.ptp(data) == 0:  # all energy in the masked DC bin
        return 0.0
    spectrum = np.abs(np.fft.fft2(data))
    return float(np.mean(np.log1p(spectrum) * highpass_mask(data.shape, radius)))


def evaluate(image, mask=None, epsilon=EPSILON):
    return RewardVector(contrast_reward(image, epsilon), fft_reward(image, mask))

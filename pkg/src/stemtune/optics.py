"""Electron optics: wavelength, aberration phase and probe point-spread function.

Aberration coefficients are in nanometres, angles in radians. The phase
convention is the polar expansion

    chi(a, p) = 2*pi/lambda * [ a^2/2 * (C10 + C12a cos2p + C12b sin2p)
                              + a^3/3 * (C21a cos p + C21b sin p
                                         + C23a cos3p + C23b sin3p) ]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import constants

from .errors import InvalidArgument
from .image import Image

COEFFICIENTS = ("c10", "c12a", "c12b", "c21a", "c21b", "c23a", "c23b")

# Search-space presets keyed by the corrector shorthand (C1/A1/B2/A2).
PRESETS = {
    "c1-a1": ("c10", "c12a", "c12b"),
    "b2-a2": ("c21a", "c21b", "c23a", "c23b"),
    "c1-a1-b2-a2": COEFFICIENTS,
}


def wavelength(voltage):
    """Relativistic electron wavelength in picometres for ``voltage`` in kV."""
    voltage = float(voltage)
    if not voltage > 0 or not math.isfinite(voltage):
        raise InvalidArgument(f"voltage must be positive, got {voltage!r}")
    ev = constants.e * voltage * 1e3
    m0 = constants.m_e
    momentum = math.sqrt(2.0 * m0 * ev * (1.0 + ev / (2.0 * m0 * constants.c**2)))
    return constants.h / momentum * 1e12


@dataclass(frozen=True)
class OpticalConfig:
    """Probe-forming optics and the sampling grid shared by probe and image.

    voltage in kV, convergence_angle in mrad, pixel_size in nm.
    """

    voltage: float = 60.0
    convergence_angle: float = 30.0
    grid_size: int = 128
    pixel_size: float = 0.02

    def __post_init__(self):
        if not self.convergence_angle > 0:
            raise InvalidArgument("convergence_angle must be positive")
        if not self.pixel_size > 0:
            raise InvalidArgument("pixel_size must be positive")
        n = int(self.grid_size)
        if n != self.grid_size or n < 2 or n & (n - 1):
            raise InvalidArgument(f"grid_size must be a power of two, got {self.grid_size!r}")
        lam = wavelength(self.voltage)
        if not (math.isfinite(lam) and lam > 0):
            raise InvalidArgument("derived wavelength is not finite and positive")
        if not self.aperture_cutoff < self.nyquist:
            raise InvalidArgument(
                f"aperture cutoff {self.aperture_cutoff:.3f} 1/nm is not inside the "
                f"Nyquist limit {self.nyquist:.3f} 1/nm; reduce pixel_size"
            )

    @property
    def wavelength_nm(self):
        return wavelength(self.voltage) * 1e-3

    @property
    def alpha_max(self):
        """Aperture semi-angle in radians."""
        return self.convergence_angle * 1e-3

    @property
    def aperture_cutoff(self):
        """Aperture radius in reciprocal space (1/nm)."""
        return self.alpha_max / self.wavelength_nm

    @property
    def nyquist(self):
        return 1.0 / (2.0 * self.pixel_size)

    @property
    def field_of_view(self):
        return self.grid_size * self.pixel_size


@dataclass(frozen=True)
class AberrationState:
    """Aberration coefficients in nm plus the subset the optimizer may move.

    Inactive coefficients still enter the phase with their stored values;
    ``active`` only controls which ones appear in :meth:`vector`.
    """

    c10: float = 0.0
    c12a: float = 0.0
    c12b: float = 0.0
    c21a: float = 0.0
    c21b: float = 0.0
    c23a: float = 0.0
    c23b: float = 0.0
    active: tuple = field(default=COEFFICIENTS)

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(self.active))
        for name in self.active:
            if name not in COEFFICIENTS:
                raise InvalidArgument(f"unknown aberration coefficient {name!r}")
        if len(set(self.active)) != len(self.active):
            raise InvalidArgument("duplicate active coefficient")
        for name in COEFFICIENTS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidArgument(f"{name} must be finite, got {value!r}")

    @classmethod
    def from_vector(cls, vector, active):
        vector = np.asarray(vector, dtype=float).ravel()
        active = tuple(active)
        if vector.size != len(active):
            raise InvalidArgument(
                f"expected {len(active)} values for {active}, got {vector.size}"
            )
        values = {name: float(v) for name, v in zip(active, vector)}
        return cls(active=active, **values)

    def vector(self):
        return np.array([getattr(self, name) for name in self.active], dtype=float)

    def with_vector(self, vector):
        vector = np.asarray(vector, dtype=float).ravel()
        return replace(self, **{n: float(v) for n, v in zip(self.active, vector)})

    def coefficients(self):
        """All seven coefficients as an ordered dict (nm)."""
        return {name: getattr(self, name) for name in COEFFICIENTS}

    def is_zero(self):
        return all(getattr(self, f.name) == 0.0 for f in fields(self) if f.name != "active")


def chi(alpha, phi, state, config):
    """Aberration phase in radians at polar angle ``alpha`` and azimuth ``phi``."""
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    second = 0.5 * alpha**2 * (
        state.c10 + state.c12a * np.cos(2 * phi) + state.c12b * np.sin(2 * phi)
    )
    third = alpha**3 / 3.0 * (
        state.c21a * np.cos(phi)
        + state.c21b * np.sin(phi)
        + state.c23a * np.cos(3 * phi)
        + state.c23b * np.sin(3 * phi)
    )
    return 2.0 * np.pi / config.wavelength_nm * (second + third)


def angular_grid(config):
    """Scattering angle and azimuth on the unshifted FFT frequency grid."""
    k = np.fft.fftfreq(config.grid_size, d=config.pixel_size)
    ky, kx = np.meshgrid(k, k, indexing="ij")
    alpha = config.wavelength_nm * np.hypot(kx, ky)
    phi = np.arctan2(ky, kx)
    return alpha, phi


def aperture(config):
    alpha, _ = angular_grid(config)
    return (alpha <= config.alpha_max).astype(float)


def probe_wavefunction(state, config):
    """Real-space probe wavefunction, origin at index (0, 0), unnormalized."""
    alpha, phi = angular_grid(config)
    pupil = (alpha <= config.alpha_max) * np.exp(-1j * chi(alpha, phi, state, config))
    return np.fft.ifft2(pupil)


def probe_intensity(state, config):
    """Unnormalized |psi|^2 with the origin at index (0, 0)."""
    psi = probe_wavefunction(state, config)
    return psi.real**2 + psi.imag**2


def probe_psf(state, config):
    """Probe PSF normalized to unit sum, centred at pixel (N/2, N/2)."""
    intensity = probe_intensity(state, config)
    total = intensity.sum()
    psf = np.fft.fftshift(intensity / total)
    return Image(
        psf,
        config.pixel_size,
        {"kind": "psf", "state": state.coefficients()},
    )

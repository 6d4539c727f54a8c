"""Simulated aberration-corrected STEM used as the optimizer's black box.

The specimen is a sum of 2D Gaussians on a hexagonal two-sublattice
(WS2-like) lattice. Images are the circular convolution of the specimen with
the probe PSF, scaled to the expected detector counts, and optionally
corrupted by low-pass correlated Gaussian noise followed by Poisson shot
noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import optics
from .errors import InvalidArgument, OutOfBoundsError
from .image import Image
from .seeding import derive_seed

# (fractional position in the 60-degree primitive cell, amplitude, width nm)
WS2_BASIS = (
    ((0.0, 0.0), 1.0, 0.04),
    ((1.0 / 3.0, 1.0 / 3.0), 0.4, 0.04),
)

MIN_CELLS = 4

# Default corrector bounds in nm.
DEFAULT_BOUNDS = {
    "c10": (-10.0, 10.0),
    "c12a": (-10.0, 10.0),
    "c12b": (-10.0, 10.0),
    "c21a": (-300.0, 300.0),
    "c21b": (-300.0, 300.0),
    "c23a": (-300.0, 300.0),
    "c23b": (-300.0, 300.0),
}


@dataclass(frozen=True)
class SpecimenParams:
    lattice_constant: float = 0.315
    basis: tuple = WS2_BASIS
    field_of_view: float = 2.56
    grid_size: int = 128


@dataclass(frozen=True)
class Specimen:
    """Sampled specimen potential on a periodic square field of view.

    The hexagonal lattice is fitted to the square box with ``cells`` =
    (nx, ny) rectangular (a x a*sqrt(3)) cells; the box stays exactly periodic
    at the cost of a small anisotropic strain.
    """

    lattice_constant: float
    basis: tuple
    field_of_view: float
    grid_size: int
    cells: tuple
    positions: np.ndarray = field(repr=False, compare=False)
    potential: np.ndarray = field(repr=False, compare=False)

    @property
    def pixel_size(self):
        return self.field_of_view / self.grid_size

    @property
    def n_primitive_cells(self):
        return 2 * self.cells[0] * self.cells[1]


def build_specimen(params):
    a = float(params.lattice_constant)
    fov = float(params.field_of_view)
    n = int(params.grid_size)
    if not a > 0:
        raise InvalidArgument("lattice_constant must be positive")
    if n < 2:
        raise InvalidArgument("grid_size must be at least 2")
    if fov < MIN_CELLS * a:
        raise InvalidArgument(
            f"field of view {fov} nm spans fewer than {MIN_CELLS} unit cells of {a} nm"
        )
    if not params.basis:
        raise InvalidArgument("basis must not be empty")

    nx = max(1, round(fov / a))
    ny = max(1, round(fov / (a * math.sqrt(3.0))))
    cell_x = fov / nx
    cell_y = fov / ny

    # Rectangular cell holds the primitive lattice points (0,0) and (1/2,1/2).
    sites = []
    for (u, v), amp, width in params.basis:
        fx = u + 0.5 * v
        fy = 0.5 * v
        for ox, oy in ((0.0, 0.0), (0.5, 0.5)):
            sites.append(((fx + ox) % 1.0, (fy + oy) % 1.0, float(amp), float(width)))

    positions = []
    for i in range(nx):
        for j in range(ny):
            for fx, fy, amp, width in sites:
                positions.append(((fx + i) * cell_x, (fy + j) * cell_y, amp, width))
    positions = np.array(positions)

    coords = np.arange(n) * (fov / n)
    potential = np.zeros((n, n))
    for x0, y0, amp, width in positions:
        dx = (coords - x0 + fov / 2) % fov - fov / 2
        dy = (coords - y0 + fov / 2) % fov - fov / 2
        gx = np.exp(-dx**2 / (2 * width**2))
        gy = np.exp(-dy**2 / (2 * width**2))
        potential += amp * np.outer(gy, gx)

    return Specimen(a, tuple(params.basis), fov, n, (nx, ny), positions, potential)


def _grid(obj):
    if isinstance(obj, Specimen):
        return obj.potential
    if isinstance(obj, Image):
        return obj.data
    return np.asarray(obj, dtype=float)


def render_clean(specimen, psf):
    """Circular convolution of the specimen potential with a centred PSF."""
    potential = _grid(specimen)
    kernel = _grid(psf)
    if potential.shape != kernel.shape:
        raise InvalidArgument(
            f"specimen grid {potential.shape} and PSF grid {kernel.shape} differ"
        )
    kernel = np.fft.ifftshift(kernel)
    out = np.fft.irfft2(np.fft.rfft2(potential) * np.fft.rfft2(kernel), s=potential.shape)
    out = np.maximum(out, 0.0)
    pixel_size = getattr(psf, "pixel_size", getattr(specimen, "pixel_size", 1.0))
    return Image(out, pixel_size)


@dataclass(frozen=True)
class NoiseConfig:
    dose: float = 1e7
    correlated_amplitude: float = 0.05
    correlation_length: float = 8.0
    enabled: bool = True

    def __post_init__(self):
        if not self.dose > 0:
            raise InvalidArgument("dose must be positive")
        if not self.correlated_amplitude >= 0:
            raise InvalidArgument("correlated_amplitude must be nonnegative")
        if not self.correlation_length >= 1:
            raise InvalidArgument("correlation_length must be at least 1 pixel")


def correlated_field(shape, correlation_length, rng):
    """Zero-mean white Gaussian noise passed through a Gaussian low-pass."""
    white = rng.standard_normal(shape)
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.rfftfreq(shape[1])[None, :]
    width = 1.0 / correlation_length
    lowpass = np.exp(-(fx**2 + fy**2) / (2.0 * width**2))
    return np.fft.irfft2(np.fft.rfft2(white) * lowpass, s=shape)


def corrupt(image, noise, seed):
    """Add correlated noise, renormalize to ``dose`` counts, draw Poisson counts."""
    if not noise.enabled:
        return image
    rng = np.random.default_rng(seed)
    data = image.data
    std = data.std()
    if noise.correlated_amplitude > 0 and std > 0:
        fluct = correlated_field(data.shape, noise.correlation_length, rng)
        fluct_std = fluct.std()
        if fluct_std > 0:
            data = data + fluct * (noise.correlated_amplitude * std / fluct_std)
    data = np.maximum(data, 0.0)
    total = data.sum()
    expected = data * (noise.dose / total) if total > 0 else data
    counts = rng.poisson(expected).astype(float)
    meta = dict(image.metadata, seed=int(seed), dose=float(noise.dose))
    return Image(counts, image.pixel_size, meta)


@dataclass(frozen=True)
class LatencyModel:
    hw_seconds_per_acquire: float = 0.0
    realtime: bool = False

    def __post_init__(self):
        if not self.hw_seconds_per_acquire >= 0:
            raise InvalidArgument("hw_seconds_per_acquire must be nonnegative")


class VirtualScope:
    """The instrument as the optimizer sees it: ``acquire(state) -> image``.

    ``acquire`` advances a call counter and is not thread-safe; everything
    else is pure.
    """

    def __init__(
        self,
        optical=None,
        specimen=None,
        noise=None,
        latency=None,
        bounds=None,
        master_seed=0,
    ):
        self.optical = optical or optics.OpticalConfig()
        if specimen is None:
            specimen = SpecimenParams(
                field_of_view=self.optical.field_of_view,
                grid_size=self.optical.grid_size,
            )
        if isinstance(specimen, SpecimenParams):
            specimen = build_specimen(specimen)
        if specimen.grid_size != self.optical.grid_size:
            raise InvalidArgument("specimen and probe grids must have the same size")
        self.specimen = specimen
        self.noise = noise or NoiseConfig()
        self.latency = latency or LatencyModel()
        self.bounds = dict(DEFAULT_BOUNDS if bounds is None else bounds)
        self.master_seed = int(master_seed)
        self.calls = 0
        self.last_seed = None

    def check_bounds(self, state):
        for name, value in state.coefficients().items():
            if name in self.bounds:
                lo, hi = self.bounds[name]
                if not lo <= value <= hi:
                    raise OutOfBoundsError(name, value, lo, hi)

    def render(self, state):
        """Noise-free image in expected detector counts (sums to the dose)."""
        psf = optics.probe_psf(state, self.optical)
        clean = render_clean(self.specimen, psf)
        total = clean.data.sum()
        data = clean.data * (self.noise.dose / total)
        meta = {"state": state.coefficients(), "dose": float(self.noise.dose)}
        return Image(data, self.optical.pixel_size, meta)

    def acquire(self, state):
        """Returns ``(image, hw_seconds)``; hw_seconds = latency + compute."""
        self.check_bounds(state)
        start = time.perf_counter()
        seed = derive_seed(self.master_seed, self.calls, "acquire")
        self.calls += 1
        self.last_seed = seed
        image = self.render(state)
        image = corrupt(image, self.noise, seed)
        image.metadata = {
            "state": state.coefficients(),
            "seed": seed,
            "dose": float(self.noise.dose),
            "noise": bool(self.noise.enabled),
        }
        if self.latency.realtime and self.latency.hw_seconds_per_acquire > 0:
            time.sleep(self.latency.hw_seconds_per_acquire)
            return image, time.perf_counter() - start
        return image, self.latency.hw_seconds_per_acquire + (time.perf_counter() - start)

    @property
    def unslept_latency(self):
        """Latency charged to the ledger but not actually waited."""
        return 0.0 if self.latency.realtime else self.latency.hw_seconds_per_acquire

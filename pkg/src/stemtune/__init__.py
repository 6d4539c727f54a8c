"""Virtual aberration-corrected STEM and multi-objective Bayesian tuning of its corrector."""

from .errors import InvalidArgument, NumericalError, OutOfBoundsError, SchemaError, StemtuneError
from .optics import AberrationState, OpticalConfig, probe_psf, wavelength
from .pareto import ParetoArchive, hypervolume, pareto_front
from .rewards import RewardVector, contrast_reward, fft_reward
from .virtual_scope import NoiseConfig, VirtualScope

__version__ = "0.1.0"

__all__ = [
    "AberrationState",
    "InvalidArgument",
    "NoiseConfig",
    "NumericalError",
    "OpticalConfig",
    "OutOfBoundsError",
    "ParetoArchive",
    "RewardVector",
    "SchemaError",
    "StemtuneError",
    "VirtualScope",
    "contrast_reward",
    "fft_reward",
    "hypervolume",
    "pareto_front",
    "probe_psf",
    "wavelength",
]

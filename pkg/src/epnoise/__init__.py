"""Noisy exceptional-point sensors: spectra, Liouvillians, stationary states and stochastic ensembles."""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    MicrocavityParams,
    NoiseChannel,
    PTDimerParams,
    SensorModel,
    Tip,
    build_microcavity,
    build_pt_dimer,
)

__all__ = ["MicrocavityParams", "NoiseChannel", "PTDimerParams", "SensorModel", "Tip",
           "build_microcavity", "build_pt_dimer", "__version__"]

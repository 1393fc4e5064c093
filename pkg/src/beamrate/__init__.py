"""Downlink beamforming evaluation for Massive MIMO-OFDM.

Compares reciprocity-based (TDD) sum-capacity against feedback-based
grid-of-beams and subspace beamforming schemes on multiuser channel
tensors.
"""

from beamrate.channels import ChannelTensor, ScenarioSpec, generate, load, normalize, save
from beamrate.codebook import BeamSelection, Codebook, build_codebook, extract_beams

__version__ = "0.1.0"

__all__ = [
    "ChannelTensor",
    "ScenarioSpec",
    "generate",
    "normalize",
    "save",
    "load",
    "Codebook",
    "BeamSelection",
    "build_codebook",
    "extract_beams",
]

"""Slice-thickness normalisation of MRI volumes with a learned intermediate slice
generator, plus the radiomics, slice selection and classical ML tooling that
consumes the normalised volumes.
"""
from .errors import VolnormError
from .volume import MODALITIES, Mask3D, Orientation, Volume3D, reorient, uniform_select

__version__ = "0.1.0"

__all__ = ["VolnormError", "MODALITIES", "Mask3D", "Orientation", "Volume3D", "reorient",
           "uniform_select", "__version__"]

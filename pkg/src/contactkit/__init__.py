"""Toolkit for contact systems on chart atlases: Jacobi brackets, line-bundle
sections with their projective momentum map, stratification of the phase
space, flow integration with invariance monitors, and frequency/action
extraction on invariant tori."""

from .bundle import (Atlas, MomentumValue, Overlap, Section, Stratum, classify,
                     momentum, momentum_rank, rescale, section_bracket,
                     section_field, validate_atlas)
from .dynamics import (Trajectory, coordinate_circle, drift, flow, frequencies,
                       loop_integral)
from .errors import ContactKitError
from .expr import Expression, parse
from .geometry import Chart, Point, contact_check, dalpha_at, reeb_at, sharp
from .jacobi import bracket, ham_field, independence, iso_residual, make_symmetry
from .models import Model, canonical, from_config, primer, primer2, validate_model

__version__ = "0.1.0"

__all__ = [
    "Atlas", "Chart", "ContactKitError", "Expression", "Model", "MomentumValue",
    "Overlap", "Point", "Section", "Stratum", "Trajectory", "bracket",
    "canonical", "classify", "contact_check", "coordinate_circle", "dalpha_at",
    "drift", "flow", "frequencies", "from_config", "ham_field", "independence",
    "iso_residual", "loop_integral", "make_symmetry", "momentum",
    "momentum_rank", "parse", "primer", "primer2", "reeb_at", "rescale",
    "section_bracket", "section_field", "sharp", "validate_atlas",
    "validate_model", "__version__",
]

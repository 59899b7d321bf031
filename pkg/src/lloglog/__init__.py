"""Dyadic content, stopping-time decompositions and curve-measure maximal operators on grids."""

from ._kernels import JIT_ENABLED
from .config import FORMAT_VERSION, ConfigError, RunConfig
from .content import ContentParams, critical_thickness, length, thickness
from .czd import cz_split, maximal_hl, whitney, whitney_properties
from .decompose import iterate_split, stopping_time_split, thickness_split
from .dilation import DilationGroup, build_mollifier
from .dyadic import DyadicCube, GridFunction, InvariantViolation
from .operators import hilbert_parabola, maximal_fn, parabola_average, radon_transform, split_maximal_terms
from .surface import SurfaceMeasure

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED", "FORMAT_VERSION", "ConfigError", "RunConfig",
    "ContentParams", "critical_thickness", "length", "thickness",
    "cz_split", "maximal_hl", "whitney", "whitney_properties",
    "thickness_split", "iterate_split", "stopping_time_split",
    "DilationGroup", "build_mollifier",
    "DyadicCube", "GridFunction", "InvariantViolation",
    "hilbert_parabola", "maximal_fn", "parabola_average", "radon_transform", "split_maximal_terms",
    "SurfaceMeasure",
]

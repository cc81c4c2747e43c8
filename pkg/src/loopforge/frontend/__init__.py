"""Source-subset frontend: parsing, lowering, transform-script reading."""

from .fortran import SourceUnit, parse_source
from .lower import lower_to_kernels
from .script import parse_transform_script

__all__ = [
    "SourceUnit",
    "parse_source",
    "lower_to_kernels",
    "parse_transform_script",
]

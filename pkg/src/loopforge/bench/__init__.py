"""Volume-term benchmark corpus: inputs, oracle, recipes, driver."""

from .inputs import (
    BenchmarkConfig,
    FieldState,
    PhysicalConstants,
    bind_state,
    differentiation_matrix,
    make_inputs,
)
from .recipes import level_boundaries, transform_recipe
from .reference import reference_volume_term

__all__ = [
    "BenchmarkConfig", "FieldState", "PhysicalConstants",
    "bind_state", "differentiation_matrix", "make_inputs",
    "transform_recipe", "level_boundaries", "reference_volume_term",
]

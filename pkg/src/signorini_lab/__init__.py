"""Numerical laboratory for variable-coefficient thin obstacle problems."""

from .fields import GridSpec, ScalarField, sample_function, symmetrize, check_even_symmetry
from .coefficients import MatrixField, make_preset, validate_hypotheses

__version__ = "0.1.0"

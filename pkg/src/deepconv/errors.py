"""Exception types shared across the package.

The CLI maps these to exit codes: ValidationError -> 2, NumericalError -> 3.
"""


class ValidationError(ValueError):
    """Bad inputs or broken structural preconditions, detected before numerics."""


class NumericalError(RuntimeError):
    """A numeric procedure failed: non-convergence, divergence, degeneracy."""

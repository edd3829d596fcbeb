"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3, and non-convergence with 4.
"""


class SovlabError(Exception):
    """Base class for package-specific errors."""


class ConfigError(SovlabError):
    """Invalid run configuration (unknown key, bad value, missing file)."""


class NumericalError(SovlabError):
    """A numerical guarantee was violated (hermiticity, positivity, blow-up)."""


class ConvergenceError(SovlabError):
    """An iterative or limiting procedure failed to converge."""

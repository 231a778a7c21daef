"""Exception hierarchy; the CLI maps these onto exit codes."""


class ArtifactError(Exception):
    code = "error"


class ValidationError(ArtifactError):
    """Bad input: config, preconditions, domain violations (exit 1)."""


class NumericalError(ArtifactError):
    """Numerical failure: divergence, blow-up, non-convergence (exit 2)."""

"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class InvariantError(ValueError):
    """A structural invariant of an object does not hold.

    The ``invariant`` attribute carries a short machine-readable name so that
    validation reports can enumerate which check failed.
    """

    def __init__(self, invariant, message):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class UnsupportedOracleError(NotImplementedError):
    """The requested oracle is not available for this latent family or size."""


class ConfigError(ValueError):
    """Experiment or training configuration is malformed."""


class DivergenceError(FloatingPointError):
    """A simulation or optimisation produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step

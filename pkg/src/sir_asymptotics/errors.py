"""Exception hierarchy shared by the library and the command-line front end."""


class ConfigError(ValueError):
    """Invalid user input: a power profile, a system configuration or a JSON field."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a trustworthy value."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConvergenceError(NumericalError):
    """An iteration hit its cap before meeting its tolerance."""


class SupportError(NumericalError):
    """A real argument fell inside the support of the limiting spectral law."""


class ContourError(NumericalError):
    """Contour or branch bookkeeping for a complex integral is ambiguous."""


class DegenerateSirError(NumericalError):
    """p_k q_k reached 1 to working precision, so beta_k cannot be formed."""

    def __init__(self, message, user, **diagnostics):
        super().__init__(message, user=user, **diagnostics)
        self.user = user

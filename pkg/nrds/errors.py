"""
Exception types raised by the numerical modules and the experiment runner.
"""


class NrdsError(Exception):
    """Base class of every error raised by nrds."""


class InvalidIntervalError(NrdsError, ValueError):
    pass


class GridTooLargeError(NrdsError, ValueError):
    pass


class OffGridError(NrdsError, ValueError):
    pass


class WindowExhaustedError(NrdsError, ValueError):
    """A time outside the sampled driver window was requested."""


class GridMismatchError(NrdsError, ValueError):
    pass


class EmptyCloudError(NrdsError, ValueError):
    pass


class DivergenceError(NrdsError, ArithmeticError):
    """State norm exceeded the blow-up bound during integration."""


class NoGapError(NrdsError, ArithmeticError):
    """Spectrum too close to the imaginary axis to split."""


class FitFailureError(NrdsError, ArithmeticError):
    pass


class NoContractionError(NrdsError, ArithmeticError):
    pass


class WindowTooShortError(NrdsError, ArithmeticError):
    pass


class SmallnessViolatedError(NrdsError, ArithmeticError):
    pass


class NotAbsorbingError(NrdsError, ArithmeticError):
    pass


class ConfigError(NrdsError, ValueError):
    """
    Invalid experiment configuration.

    Args:
        diagnostics: one message per offending key, prefixed with its line
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))

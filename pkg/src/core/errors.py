class CapbandError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(CapbandError, ValueError):
    """Invalid configuration or command-line values (CLI exit code 1)."""


class NumericalError(CapbandError):
    """A numerical stage could not produce a certified result (CLI exit code 2)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "message": str(self),
            "diagnostics": self.diagnostics,
        }


class StepFailure(NumericalError):
    pass


class DomainExit(NumericalError):
    """The orbit left the disk y^2 + z^2 <= 1."""


class NearPole(NumericalError):
    """x = sqrt(1 - y^2 - z^2) is too close to zero to form x'."""


class NoRoot(NumericalError):
    pass


class NoCrossing(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class CoverageError(NumericalError):
    pass


class DirichletDegeneracy(NumericalError):
    pass


class FrameDegeneracy(NumericalError):
    pass


class Inadmissible(NumericalError):
    pass


class VerificationFailure(NumericalError):
    def __init__(self, message, offending=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.offending = list(offending or [])

    def to_dict(self):
        payload = super().to_dict()
        payload["offending"] = self.offending
        return payload

"""Exception hierarchy shared by all wavemode modules."""


class WavemodeError(Exception):
    """Base class for numerical failures raised by the library."""


class NoPropagatingModes(WavemodeError):
    pass


class RootNotBracketed(WavemodeError):
    pass


class IndexOutOfRange(WavemodeError, IndexError):
    pass


class InvalidSpectralParameter(WavemodeError, ValueError):
    pass


class QuadratureNotConverged(WavemodeError):
    pass


class InvalidKernel(WavemodeError, ValueError):
    pass


class NonSquareCoefficients(WavemodeError, ValueError):
    pass


class NegativeLambda(WavemodeError, ValueError):
    pass


class ReducibleTransportMatrix(WavemodeError):
    pass


class InsufficientHorizon(WavemodeError):
    pass


class InvalidHorizon(WavemodeError, ValueError):
    pass


class DomainError(WavemodeError, ValueError):
    pass


class InstabilityDetected(WavemodeError):
    pass


class KernelNotBandLimited(WavemodeError):
    pass


class ConfigError(Exception):
    """Invalid scenario configuration; carries an optional line number."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)

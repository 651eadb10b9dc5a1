"""Exception types raised across the package."""


class CPDormancyError(Exception):
    """Base class for all errors raised by cpdormancy."""


class InvalidLaw(CPDormancyError, ValueError):
    pass


class InvalidAlpha(CPDormancyError, ValueError):
    pass


class NeedsExtension(CPDormancyError):
    """The generated part of a trace does not reach past the query time."""


class EmptyReplicas(CPDormancyError, ValueError):
    pass


class TraceTooShort(CPDormancyError):
    pass


class NotConnected(CPDormancyError, ValueError):
    pass


class EmptyGraph(CPDormancyError, ValueError):
    pass


class DegenerateGraph(CPDormancyError, ValueError):
    pass


class UnknownVertex(CPDormancyError, KeyError):
    pass


class InvalidStep(CPDormancyError, ValueError):
    pass


class WindowExhausted(CPDormancyError):
    """A cluster reached the edge of the sampled percolation window."""


class WindowCapExceeded(CPDormancyError):
    pass


class InvalidParams(CPDormancyError, ValueError):
    pass


class PreconditionLambdaDD(CPDormancyError, ValueError):
    pass


class InvalidEpsilon(CPDormancyError, ValueError):
    pass


class InvalidRates(CPDormancyError, ValueError):
    pass


class ConfigInvalid(CPDormancyError, ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class IoFailure(CPDormancyError, OSError):
    pass

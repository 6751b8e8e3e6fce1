"""Exception hierarchy shared by every backend and protocol layer."""


class EncGraphError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(EncGraphError, ValueError):
    pass


class PlaintextRangeError(EncGraphError, ValueError):
    pass


class WrongKeyError(EncGraphError):
    pass


class MalformedCiphertextError(EncGraphError, ValueError):
    pass


class EncodingError(EncGraphError, ValueError):
    """A value cannot be represented in the target plaintext space."""


class OverflowDetectedError(EncGraphError, ArithmeticError):
    """A decoded raw value lies outside the signed half-range."""


class PlanError(EncGraphError):
    pass


class BudgetError(PlanError):
    """A planned homomorphic operation would overflow the plaintext modulus."""


class LevelError(EncGraphError):
    """Ciphertext-ciphertext multiplication attempted past the single level."""


class NoiseOverflowError(EncGraphError):
    """Tracked noise exceeds what decryption can tolerate."""


class DimensionError(EncGraphError, ValueError):
    pass


class HistogramError(EncGraphError, ValueError):
    pass


class SchemeMismatchError(EncGraphError):
    pass


class UnregisteredGraphError(EncGraphError, KeyError):
    pass


class FrameError(EncGraphError, ValueError):
    """Raised when a wire frame cannot be parsed; ``offset`` is the byte position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ProtocolError(EncGraphError):
    """The remote side answered with ERROR or an unexpected message kind."""


class ScenarioError(EncGraphError):
    """An agent failed mid-scenario; ``transcript`` holds everything recorded so far."""

    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class FitError(EncGraphError, ValueError):
    pass

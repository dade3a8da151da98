"""
Error hierarchy shared by every dapsi module.

Protocol-level "no match" outcomes are not errors: they are reported as
``None``. The classes here cover malformed inputs, arithmetic that is not
defined, and transport failures.
"""


class DapsiError(Exception):
    """Base class for all dapsi errors."""


# field
class DuplicateRoot(DapsiError, ValueError):
    """A root appears more than once in poly_from_roots."""


class UndefinedOperation(DapsiError, ArithmeticError):
    """GCD of two zero polynomials or division by the zero polynomial."""


# interp
class DuplicateAbscissa(DapsiError, ValueError):
    pass


class Inconsistent(DapsiError):
    """No rational function within the degree budget fits the points."""


class AbscissaMismatch(DapsiError, ValueError):
    pass


class SingularAbscissa(DapsiError, ValueError):
    """A candidate polynomial vanishes at one of the evaluation points."""


# crypto
class DecryptOutOfRange(DapsiError):
    """Decrypted group element is not in the plaintext table."""


class LengthMismatch(DapsiError, ValueError):
    pass


class ChunkOverflow(DapsiError, ValueError):
    pass


# setrecon
class ForeignElement(DapsiError, ValueError):
    """A difference element does not belong to Alice's mapped set."""


class ComputeCapExceeded(DapsiError):
    pass


class EnumerationTooLarge(DapsiError):
    pass


# hamming
class VerifyFailed(DapsiError):
    """Bob refused to release his vector in the Recover step."""


# intpsi
class InvalidThreshold(DapsiError, ValueError):
    pass


# transport
class ChannelClosed(DapsiError, ConnectionError):
    pass


class FrameTooLarge(DapsiError):
    pass


class TagUnknown(DapsiError):
    pass


class ProtocolViolation(DapsiError):
    """Peer sent a well-formed frame that is not valid at this point."""


# cli
class ConfigError(DapsiError, ValueError):
    pass


class InputFormatError(DapsiError, ValueError):
    """An input file line could not be parsed."""

    def __init__(self, message: str, line_number: int = 0):
        super().__init__(message)
        self.line_number = line_number

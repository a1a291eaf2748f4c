"""Exception hierarchy shared by every layer of the package."""


class HeflError(Exception):
    """Base class for all package errors."""


class DomainError(HeflError):
    """Polynomial is in the wrong (coefficient / evaluation) domain."""


class BasisError(HeflError):
    """Operands live over different RNS bases or levels."""


class ParameterError(HeflError, ValueError):
    """Invalid or insecure parameter set, or a violated rule precondition."""


class CapacityError(HeflError, ValueError):
    """Too many values for the slot count, or a message outside the encodable range."""


class AlignmentError(HeflError):
    """Ciphertext levels or scales do not match."""


class DepthError(HeflError):
    """The multiplicative depth budget is exhausted."""


class KeyMissingError(HeflError, KeyError):
    """A required evaluation or rotation key is missing or of the wrong kind."""


class ShapeError(HeflError, ValueError):
    """Packed weight vectors have incompatible shapes."""


class ValidationError(HeflError, ValueError):
    """Input data failed validation (non-finite weights, bad widths, ...)."""


class InfeasibleError(HeflError, ValueError):
    """The hoisting plan has no feasible unfold factor."""


class DataError(HeflError, ValueError):
    """A client has no training data."""


class PrivacyViolation(HeflError):
    """A plaintext value reached an entity that must only see ciphertexts."""

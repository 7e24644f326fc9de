"""Exception types shared across the package."""


class FeedbackLabError(Exception):
    """Base class for all package errors."""


class DomainError(FeedbackLabError, ValueError):
    """An argument lies outside the domain of a mathematical function."""


class ParameterError(FeedbackLabError, ValueError):
    """Code or experiment parameters are invalid or not representable."""


class BlocklengthError(ParameterError):
    """The blocklength is too small for the requested construction."""


class InfeasibleError(FeedbackLabError, ArithmeticError):
    """A required root or operating point does not exist."""


class DegenerateInputError(FeedbackLabError, ValueError):
    """The input carries no information (e.g. an all-zero polynomial)."""


class ArityError(FeedbackLabError, ValueError):
    """Wrong number of users or empty statistics."""


class ShapeError(FeedbackLabError, ValueError):
    """Array lengths or blocklengths do not match."""


class MessageRangeError(FeedbackLabError, ValueError):
    """A message index lies outside the message set."""

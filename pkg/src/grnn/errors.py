class GRNNError(Exception):
    """Base class for package errors."""


class ValidationError(GRNNError, ValueError):
    """Input records violate a structural invariant."""


class ParameterError(GRNNError, ValueError):
    """A hyperparameter or dimension is out of range."""


class ContractError(GRNNError, ValueError):
    """Array shapes or sequence lengths do not line up."""


class NumericError(GRNNError, ArithmeticError):
    """Non-finite values or divergence detected."""

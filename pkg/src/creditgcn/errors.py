class CreditGCNError(Exception):
    """Base class for all package errors."""


class ValidationError(CreditGCNError, ValueError):
    pass


class ShapeError(CreditGCNError, ValueError):
    pass


class NumericError(CreditGCNError, ArithmeticError):
    pass


class SchemaError(CreditGCNError, ValueError):
    pass


class DataError(CreditGCNError, ValueError):
    """Malformed input file; the message names the offending line."""


class TrainingError(CreditGCNError, RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ConsistencyError(CreditGCNError, RuntimeError):
    pass

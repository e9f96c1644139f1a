# Exception types shared by the regvec modules
from typing import Optional


class ContractViolation(ValueError):
    """A caller broke an operation's precondition (bad index, shape or framework)."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite parameter or loss."""

    def __init__(self, epoch: int, detail: str = "non-finite values"):
        self.epoch = epoch
        super().__init__(f"Training diverged at epoch {epoch}: {detail}")


class SingularityError(ArithmeticError):
    """A closed-form solve hit a zero norm or a zero sign."""


class InsufficientDataError(ValueError):
    """Not enough usable values to compute a statistic."""


class DatasetFormatError(ValueError):
    """A ratings table could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

"""Exception hierarchy shared by all modules."""


class ConflinkError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ConflinkError, ValueError):
    """An argument lies outside its documented range."""


class ContractViolation(ConflinkError):
    """Inputs are individually valid but inconsistent with each other."""


class InsufficientDataError(ConflinkError):
    """Not enough observed pairs to run the procedure."""


class OptimizationError(ConflinkError):
    """Gradient descent produced a non-finite loss."""

    def __init__(self, message, iteration=None, loss=None):
        super().__init__(message)
        self.iteration = iteration
        self.loss = loss


class ExperimentError(ConflinkError):
    """A replicated experiment could not produce an aggregate."""


class FormatError(ConflinkError):
    """A text file does not follow the documented layout."""

    def __init__(self, message, path=None, row=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if row is not None:
            where += f", row {row}" if where else f"row {row}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.row = row

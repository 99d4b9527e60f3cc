"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalFailureError(ArithmeticError):
    """Raised when a recursion hits a non-invertible or non-positive quantity."""

    def __init__(self, message, stage=None, iteration=None):
        self.stage = stage
        self.iteration = iteration
        prefix = []
        if iteration is not None:
            prefix.append(f"iteration {iteration}")
        if stage is not None:
            prefix.append(f"stage {stage}")
        if prefix:
            message = f"[{', '.join(prefix)}] {message}"
        super().__init__(message)

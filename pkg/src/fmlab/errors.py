"""Exception types shared across fmlab modules."""


class ShapeError(ValueError):
    """Operands disagree in shape or dimensionality."""


class DomainError(ValueError):
    """A scalar argument lies outside its admissible range."""


class DivergenceError(RuntimeError):
    """Numerical state blew up; carries the step at which it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class TrainingError(RuntimeError):
    """Training produced non-finite quantities; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class NumericError(RuntimeError):
    """A numerical routine left its validity envelope (e.g. non-PSD matrix)."""

"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class DegenerateInputError(InvalidInputError):
    """A matrix argument is rank-deficient or otherwise numerically degenerate."""


class DegenerateTaskError(DegenerateInputError):
    """A per-task subproblem is singular; carries the offending task index."""

    def __init__(self, task: int, message: str):
        super().__init__(message)
        self.task = task


class DivergenceError(RuntimeError):
    """An iterative solver produced non-finite values; carries the iteration index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(message)
        self.iteration = iteration


class InsufficientDataError(RuntimeError):
    """A sample stream ran out before the requested number of draws."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""

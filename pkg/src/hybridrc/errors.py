"""Exception types shared across the package."""


class DivergenceError(FloatingPointError):
    """An integration or closed-loop run produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """Invalid experiment configuration."""

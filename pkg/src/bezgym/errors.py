"""Exception types raised across the package."""


class BezGymError(Exception):
    pass


class NumericalDivergence(BezGymError, FloatingPointError):
    """A simulated state or a training loss became non-finite."""


class ShapeMismatch(BezGymError, ValueError):
    pass


class StaleCache(BezGymError, ValueError):
    """Backward pass was given a cache that does not belong to these parameters."""


class LengthMismatch(BezGymError, ValueError):
    pass


class ParseError(BezGymError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(BezGymError, ValueError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


class VersionMismatch(BezGymError):
    pass


class CorruptFile(BezGymError):
    pass

"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``TrainingError`` -> 4.
"""


class ShiftConfError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ShiftConfError, ValueError):
    pass


class DataError(ShiftConfError, ValueError):
    """Malformed or inconsistent input data."""


class SchemaError(DataError):
    pass


class ShapeError(DataError):
    pass


class LabelError(DataError):
    pass


class ScenarioError(DataError):
    pass


class HorizonError(ShiftConfError, ValueError):
    """A temporal window reaches past the end of the trajectory."""


class FormulaSyntaxError(ShiftConfError, ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class IntervalError(ShiftConfError, ValueError):
    pass


class SizeError(ShiftConfError, ValueError):
    """Too few reference points for the requested neighbour rank."""


class DegenerateWeightError(ShiftConfError, ValueError):
    pass


class TrainingError(ShiftConfError, RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step

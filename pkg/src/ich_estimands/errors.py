"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit 2); estimation
domain problems derive from :class:`EstimationError` (CLI exit 1).
"""


class EstimandError(Exception):
    """Base class for all package errors."""


class InputError(EstimandError):
    pass


class MalformedRow(InputError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class MissingColumn(InputError):
    pass


class EmptyArm(InputError):
    pass


class MixedForm(InputError):
    pass


class EstimationError(EstimandError):
    pass


class WrongForm(EstimationError):
    pass


class ZeroRisk(EstimationError):
    pass


class RiskSetEmptyAtEvent(EstimationError):
    pass


class DegenerateStratum(EstimationError):
    pass


class NoEvents(EstimationError):
    pass


class UnsupportedStrategy(EstimationError):
    pass

"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ModelMismatchError`` -> 2,
``NumericalError`` -> 3, anything else derived from ``ValueError`` -> 1.
"""


class CsiFeedbackError(Exception):
    pass


class DegenerateChannelError(CsiFeedbackError, ValueError):
    pass


class ModelMismatchError(CsiFeedbackError, ValueError):
    """A feedback frame or artifact does not belong to the loaded model."""


class NumericalError(CsiFeedbackError, ArithmeticError):
    """Rank collapse, rank-deficient precoding or similar numerical failure."""


class RankCollapseError(NumericalError):
    pass

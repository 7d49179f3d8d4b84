"""Errors raised by the estimators and selection routines."""


class DomainError(ValueError):
    """Covariate values fall outside the closed unit interval."""


class RankDeficiencyError(ValueError):
    """A least squares system has linearly dependent columns.

    The ``deficiency`` attribute, when set, is the number of dimensions by
    which the system falls short of full rank.
    """

    def __init__(self, message, deficiency=None):
        super().__init__(message)
        self.deficiency = deficiency


class PositivityError(ValueError):
    """Multiplicative correction needs a strictly positive parametric fit."""


class DegenerateFitError(ValueError):
    """A fit is too degenerate to score (zero residual variance)."""


class BandwidthError(RuntimeError):
    """The local design stays degenerate after the allowed widenings."""


class SelectionError(RuntimeError):
    """No admissible candidate survived a selection search."""

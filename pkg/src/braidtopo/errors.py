"""Exception types shared across the package."""


class BraidTopoError(Exception):
    """Base class for all package errors."""


class GapClosed(BraidTopoError):
    """An adjacent eigenvalue gap fell below the degeneracy threshold."""


class GaugeAmbiguous(BraidTopoError):
    """Consecutive eigenframes overlap too weakly to fix the gauge."""


class NotQuantized(BraidTopoError):
    """A holonomy or lift did not snap onto the discrete target set."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AngleTooLarge(BraidTopoError):
    """A rotation increment is too close to pi for a unique lift."""


class NotInCatalog(BraidTopoError):
    """A half-path holonomy has no catalogued braid word."""


class VerificationFailed(BraidTopoError):
    """An analytic shortcut disagreed with its numerical check."""


class NonConvergence(BraidTopoError):
    """An iterative fit hit its iteration cap."""


class DegenerateSpectrum(BraidTopoError):
    """Too few resolvable peaks to initialise a fit."""


class ConfigError(BraidTopoError):
    """Malformed model or run configuration."""

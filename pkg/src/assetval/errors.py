"""Exception hierarchy shared by every module."""


class AssetValError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# input validation
# ---------------------------------------------------------------------------

class ValidationError(AssetValError):
    """Malformed asset or sales input."""


class SchemaError(ValidationError):
    pass


class MissingAsset(ValidationError):
    pass


class DuplicateAsset(ValidationError):
    pass


class MissingSales(ValidationError):
    pass


class GapInSeries(ValidationError):
    pass


class NegativeRevenue(ValidationError):
    pass


class DuplicateYear(ValidationError):
    pass


class ConfigError(AssetValError):
    """Malformed run configuration."""


class UnknownKey(ConfigError):
    pass


class OutOfRange(ConfigError):
    pass


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

class FitError(AssetValError):
    pass


class NotEnoughPoints(FitError):
    pass


class DegenerateSeries(FitError):
    pass


class NoConvergence(FitError):
    """Raised only when the caller asks for strict convergence.

    ``best`` carries the best iterate so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularSystem(FitError):
    pass


# ---------------------------------------------------------------------------
# scenarios, valuation, analysis
# ---------------------------------------------------------------------------

class ScenarioError(AssetValError):
    pass


class InvalidBound(ScenarioError):
    pass


class AlreadySaturated(ScenarioError):
    pass


class NoFutureWindow(ScenarioError):
    pass


class EmptyPortfolio(AssetValError):
    pass


class AnalysisError(AssetValError):
    pass


class NotSaturated(AnalysisError):
    pass


class FractionNeverReached(AnalysisError):
    pass


class SingularDesign(AnalysisError):
    pass


class InsufficientData(AnalysisError):
    pass

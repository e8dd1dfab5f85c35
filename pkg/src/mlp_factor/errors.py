"""Exception hierarchy shared by every stage of the pipeline."""


class FactorPipelineError(Exception):
    """Base class for all errors raised by this package."""


# -- panel ingestion ---------------------------------------------------------

class PanelError(FactorPipelineError):
    pass


class ParseError(PanelError):
    def __init__(self, message, path=None, row=None, column=None):
        self.detail = message
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path is not None:
            where.append(f"file {path}")
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class SchemaError(ParseError):
    pass


class CalendarError(ParseError):
    pass


class EmptyUniverseError(PanelError):
    pass


class EmptyFactorSetError(PanelError):
    pass


class DegenerateColumnError(PanelError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} is constant (or unobserved) over the fit range")


# -- split plan --------------------------------------------------------------

class PlanError(FactorPipelineError):
    pass


# -- network -----------------------------------------------------------------

class ArchitectureError(FactorPipelineError):
    pass


class ShapeError(FactorPipelineError, ValueError):
    pass


class NumericError(FactorPipelineError, FloatingPointError):
    """Non-finite activation, loss or gradient (exploding gradients)."""


# -- linear models / metrics -------------------------------------------------

class DegenerateInputError(FactorPipelineError):
    pass


class UndefinedMetricError(FactorPipelineError, ZeroDivisionError):
    pass


class DegenerateDMError(UndefinedMetricError):
    def __init__(self, message, mean_diff=0.0):
        self.mean_diff = mean_diff
        super().__init__(message)


class DegenerateError(UndefinedMetricError):
    def __init__(self, message, alpha=0.0):
        self.alpha = alpha
        super().__init__(message)


class OracleError(FactorPipelineError):
    pass


# -- backtest ----------------------------------------------------------------

class AlignmentError(FactorPipelineError):
    pass


class DataError(FactorPipelineError):
    pass


class WipeoutError(FactorPipelineError):
    """A monthly return of -100% or worse makes compounding meaningless."""


# -- orchestration -----------------------------------------------------------

class ConfigError(FactorPipelineError):
    pass


class StaleArtifactError(FactorPipelineError):
    pass


class StageError(FactorPipelineError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")

"""Exception hierarchy.

Every error carries a module-qualified ``code`` (``"network.schema"``,
``"choice.collinear"``...) so the command line can map failures to exit
statuses and so callers can branch without string matching.
"""

from __future__ import annotations


class TransitIncidentError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class SchemaError(TransitIncidentError, ValueError):
    code = "io.schema"


class IntegrityError(TransitIncidentError, ValueError):
    """A record refers to an id that does not exist."""

    code = "network.reference"


class InputMissingError(TransitIncidentError, FileNotFoundError):
    code = "io.missing-input"


class NoAffectedODError(TransitIncidentError):
    code = "redundancy.no-affected-od"


class UndefinedODError(TransitIncidentError, ValueError):
    code = "redundancy.undefined-od"


class DuplicateEventError(TransitIncidentError, ValueError):
    code = "headway.duplicate-event"


class NoNormalDaysError(TransitIncidentError):
    code = "flows.no-normal-days"


class ConvergenceError(TransitIncidentError):
    code = "choice.no-convergence"


class CollinearityError(TransitIncidentError):
    code = "choice.collinear"

    def __init__(self, message: str, features: list[str]):
        super().__init__(message)
        self.features = features


class InfeasibleConfigError(TransitIncidentError, ValueError):
    code = "synth.infeasible"

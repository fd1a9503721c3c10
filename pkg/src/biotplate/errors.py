"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can map
failures to exit codes and reports can name them without parsing messages.
"""
from __future__ import annotations


class BiotPlateError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str = "", code: str | None = None):
        if code is not None:
            self.code = code
        super().__init__(message or self.code)


class GeometryError(BiotPlateError):
    code = "invalid-geometry"


class MeshingError(BiotPlateError):
    code = "meshing-failed"


class AssemblyError(BiotPlateError):
    code = "incompatible-space-form"


class SolverError(BiotPlateError):
    code = "solver-failure"


class NotConverged(SolverError):
    code = "not-converged"


class IndefiniteDetected(SolverError):
    code = "indefinite-detected"


class SingularSystem(SolverError):
    code = "singular-system"


class CheckFailure(BiotPlateError):
    """An invariant or certificate check did not hold."""

    code = "check-failed"


class InputError(BiotPlateError):
    """Bad configuration, missing file or inconsistent data."""

    code = "input-error"


class SchemaViolation(InputError):
    code = "schema-violation"


def exit_code(exc: BaseException) -> int:
    """CLI exit code: 2 check failure, 3 input error, 4 solver failure."""
    if isinstance(exc, CheckFailure):
        return 2
    if isinstance(exc, (InputError, GeometryError, FileNotFoundError)):
        return 3
    return 4

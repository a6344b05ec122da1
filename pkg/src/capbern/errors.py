"""Error types. Every error carries a stable machine-readable ``code``."""

from __future__ import annotations


class CapbernError(Exception):
    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


class Degenerate(CapbernError):
    code = "DEGENERATE"


class EmptySet(CapbernError):
    code = "EMPTY_SET"


class NegativeField(CapbernError):
    code = "NEGATIVE_FIELD"


class BallOutOfDomain(CapbernError):
    code = "BALL_OUT_OF_DOMAIN"


class NonpositiveRadius(CapbernError):
    code = "NONPOSITIVE_RADIUS"


class HypothesisUnmet(CapbernError):
    code = "HYPOTHESIS_UNMET"


class NotInvertible(CapbernError):
    code = "NOT_INVERTIBLE"


class ZeroFunction(CapbernError):
    code = "ZERO_FUNCTION"


class SolverFailure(CapbernError):
    code = "SOLVER_FAILURE"


class NonSurface(CapbernError):
    code = "NON_SURFACE"


class BadLambda(CapbernError):
    code = "BAD_LAMBDA"


class MissingData(CapbernError):
    code = "MISSING_DATA"


class ConfigInvalid(CapbernError):
    code = "CONFIG_INVALID"

    def __init__(self, key: str, message: str = ""):
        self.key = key
        super().__init__(f"invalid or missing config key {key!r}" + (f": {message}" if message else ""))

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "key": self.key}


class BadFieldFile(CapbernError):
    code = "BAD_FIELD_FILE"


class BadMeshFile(CapbernError):
    code = "BAD_MESH_FILE"


# exit code 2 in the CLI; everything else maps to 1
SOFT_FAILURES = (Degenerate, HypothesisUnmet)

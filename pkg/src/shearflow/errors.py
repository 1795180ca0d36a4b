"""Exception hierarchy.

Every error carries the name of the module that raised it and an optional
``witness`` (a value that demonstrates the failure) so the CLI can emit a
structured error record.
"""
from __future__ import annotations


class ShearflowError(Exception):
    module = "shearflow"

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.message = message
        self.witness = witness

    def to_record(self) -> dict:
        return {
            "code": type(self).__name__,
            "module": self.module,
            "message": self.message,
            "witness": self.witness,
        }


# geometry
class GeometryError(ShearflowError):
    module = "geometry"


class NonPositiveHeight(GeometryError):
    pass


class BadPeriod(GeometryError):
    pass


class SingularGram(GeometryError):
    pass


# potential
class PotentialError(ShearflowError):
    module = "potential"


class QuadratureBudgetExceeded(PotentialError):
    pass


class DissipativityViolated(PotentialError):
    pass


# operators
class OperatorError(ShearflowError):
    module = "operators"


class GeometryMismatch(OperatorError):
    pass


# simulate
class SimulationError(ShearflowError):
    module = "simulate"


class InvalidCertificate(SimulationError):
    pass


class SolverFailure(SimulationError):
    pass


class NonFiniteState(SimulationError):
    def __init__(self, message: str, step: int | None = None, witness=None):
        super().__init__(message, witness=witness if witness is not None else step)
        self.step = step


# attractor
class AttractorError(ShearflowError):
    module = "attractor"


class ShiftBeyondHorizon(AttractorError):
    pass


class WindowBeyondHorizon(AttractorError):
    pass


class HorizonTooShort(AttractorError):
    pass


# cli / config
class ConfigError(ShearflowError):
    module = "cli"


class UnknownKey(ConfigError):
    def __init__(self, key: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown configuration key {key!r}{where}", witness=key)
        self.key = key
        self.line = line


class MissingBlock(ConfigError):
    def __init__(self, block: str):
        super().__init__(f"missing configuration block or key {block!r}", witness=block)
        self.block = block


class ConfigTypeError(ConfigError, TypeError):
    def __init__(self, path: str, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{path}: {message}{where}", witness=path)
        self.path = path
        self.line = line

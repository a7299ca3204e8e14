"""Errors raised across qlax.

Every module raises a subclass of :class:`QlaxError`, so callers that run many
independent checks can record a failure and move on.
"""


class QlaxError(Exception):
    pass


# coeffring
class CoeffRingError(QlaxError):
    pass


class UnknownVariable(CoeffRingError):
    pass


class UnassignedVariable(CoeffRingError):
    pass


class ZeroBase(CoeffRingError):
    pass


class NonMonomialReplacement(CoeffRingError):
    pass


# fockspace / chain layout
class SpecError(QlaxError):
    pass


class InvalidSpec(SpecError):
    pass


class SiteOutOfRange(SpecError):
    pass


class DimensionMismatch(SpecError):
    pass


class BadRange(SpecError):
    pass


class SectorTooLarge(SpecError):
    pass


# laxkit
class LaxError(QlaxError):
    pass


class NonInvertibleLeading(LaxError):
    pass


# freealg
class AlgebraError(QlaxError):
    pass


class UnsupportedSpecies(AlgebraError):
    pass


class RewriteLimitExceeded(AlgebraError):
    pass


# bethe
class BetheError(QlaxError):
    pass


class NoConvergence(BetheError):
    pass


class CollidingRoots(BetheError):
    pass


class NearPole(BetheError):
    pass


class NoEigenvalueWithin(BetheError):
    pass


# qstates
class QStatesError(QlaxError):
    pass


class DegenerateQ(QStatesError):
    pass


class OutsideRadius(QStatesError):
    pass


# harness
class HarnessError(QlaxError):
    pass


class ParseError(HarnessError):
    pass


class ValidationError(HarnessError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")

"""Exception hierarchy.

Every error raised by the package derives from :class:`GnssError` so that the
command line can map failures onto its exit-code contract.
"""


class GnssError(Exception):
    """Base class for all package errors."""


class InputError(GnssError):
    """Input data could not be read or is structurally invalid."""


class ProcessingError(GnssError):
    """A numerical step failed on otherwise valid input."""


# frames
class NearSingular(ProcessingError):
    pass


# ephemeris
class UnsupportedVersion(InputError):
    pass


class HeaderMissing(InputError):
    pass


class NotAvailable(GnssError):
    pass


class NetworkError(GnssError):
    pass


class NoConvergence(ProcessingError):
    pass


class StaleEphemeris(ProcessingError):
    pass


class NoEphemeris(ProcessingError):
    pass


# measurements
class MalformedRecord(InputError):
    pass


# solver
class Underdetermined(ProcessingError):
    pass


class SingularGeometry(ProcessingError):
    pass


class TimeReversal(ProcessingError):
    pass


# validation
class NoQualifiedCells(ProcessingError):
    pass


class SpecMismatch(InputError):
    pass


class MissingDop(InputError):
    pass


class BehindCamera(ProcessingError):
    pass


class RankDeficient(ProcessingError):
    pass


# refinement
class InsufficientObservations(ProcessingError):
    pass


class Underconstrained(ProcessingError):
    pass

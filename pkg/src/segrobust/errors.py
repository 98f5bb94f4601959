"""Exception types raised across the package."""


class SegRobustError(Exception):
    """Base class for every error this package raises deliberately."""


# --- volume I/O ---

class BadMagic(SegRobustError):
    """File is not a single-file NIfTI-1 image."""


class UnsupportedDatatype(SegRobustError):
    """On-disk datatype code outside the supported set {2, 4, 16}."""


class Not3D(SegRobustError):
    """Image has more than three non-degenerate dimensions."""


class TruncatedData(SegRobustError):
    """Payload is shorter than the header's dimensions imply."""


class LabelOverflow(SegRobustError):
    """Integer label volume contains a value that does not fit in uint8."""


class IoFailure(SegRobustError):
    """Underlying file operation failed."""


class GridMismatch(SegRobustError):
    """Two grids that must coincide differ; carries the offending field."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        super().__init__(f"grid mismatch in {field}" + (f": {detail}" if detail else ""))


class MissingChannel(SegRobustError):
    """A required MRI channel is absent from the study."""


# --- label algebra ---

class UnknownLabel(SegRobustError):
    """Label volume contains a code absent from the scheme."""


class UnknownComparator(SegRobustError):
    """No correspondence table exists for the requested comparator."""


# --- metrics ---

class EmptyMask(SegRobustError):
    """Operation requires at least one foreground voxel."""


# --- statistics ---

class AllMissing(SegRobustError):
    """Cohort summary requested over values that are all missing."""


class TooFewPairs(SegRobustError):
    """Paired analysis requires at least two pairs."""


class LengthMismatch(SegRobustError):
    """Paired value lists have different lengths."""


class NoCommonPatients(SegRobustError):
    """Two record sets share no patients."""


class TargetMismatch(SegRobustError):
    """Requested target pairing is not covered by the record sets."""


# --- manifest ---

class ParseError(SegRobustError):
    """Manifest row is malformed; carries the 1-based line number."""

    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"manifest line {line}: {detail}")


class DuplicatePatient(SegRobustError):
    """Manifest lists the same patient_id twice."""


class MissingColumn(SegRobustError):
    """Manifest header lacks a required column."""

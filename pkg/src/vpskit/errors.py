"""Exception hierarchy shared by all vpskit modules."""


class VpsError(Exception):
    """Base class for all vpskit errors."""


class DimensionMismatch(VpsError):
    """Grids, maps or flow fields that must share dimensions do not."""


class UnknownClass(VpsError):
    """A pixel or box references a class id absent from the taxonomy."""


class InvalidTaxonomy(VpsError):
    """Taxonomy entries violate a structural invariant."""


class SequenceLengthMismatch(VpsError):
    """Per-frame input sequences have inconsistent lengths."""


class IncompleteAssignment(VpsError):
    """An id assignment does not cover every instance of the current frame."""


class InvalidConfig(VpsError):
    """A synthetic scene configuration violates its invariants."""


class FormatError(VpsError):
    """Base class for serialization errors; readers raise these, never crash."""


class BadMagic(FormatError):
    """A file does not start with the expected magic bytes."""


class Truncated(FormatError):
    """A file ends before (or after) the payload its header promises."""


class Overflow(FormatError):
    """A value does not fit the fixed-width on-disk representation."""


class NonFinite(FormatError):
    """A flow component is NaN or infinite."""


class ParseError(FormatError):
    """A structured text input (JSON lines, manifest) failed to parse."""

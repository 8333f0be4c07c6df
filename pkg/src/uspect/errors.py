"""Exception types shared across the toolkit."""


class UspectError(Exception):
    """Base class for all toolkit errors."""


# -- measurement graph --------------------------------------------------


class MissingIdentityKey(UspectError):
    """Node attributes lack (or hold an empty/invalid) identity-key field."""


class AttributeConflict(UspectError):
    """Same node id carries contradictory scalar attribute values.

    Signals a collector bug or racing system state, never silently merged.
    """


class InvalidAttribute(UspectError):
    """Attribute value is not a supported scalar (or homogeneous list)."""


class DanglingEndpoint(UspectError):
    """Edge references a node id absent from the graph."""


class SchemaViolation(UspectError):
    """Edge label not permitted between the endpoint kinds."""


class MetaMismatch(UspectError):
    """Two partial graphs do not describe the same snapshot."""


class IntegrityViolation(UspectError):
    """Graph-level invariant broken (dangling edge, duplicate, bad id)."""


class UnknownKind(UspectError):
    """Node kind not in this version's vocabulary."""


class GraphSealed(UspectError):
    """Mutation attempted on a sealed graph."""


class ParseError(UspectError):
    """Bundle text is not a well-formed document."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


# -- elf inspector -------------------------------------------------------


class ElfError(UspectError):
    """Base class for ELF parsing failures."""


class NotElf(ElfError):
    """File does not start with an ELF identification."""


class ElfTruncated(ElfError):
    """File ends before a referenced table or segment."""


class UnsupportedClass(ElfError):
    """Not a 64-bit little-endian object (the only class handled)."""


# -- collectors ----------------------------------------------------------


class ProcUnavailable(UspectError):
    """/proc is missing or unreadable; collection cannot proceed."""


class CollectError(UspectError):
    """A sub-collector failed outright (not a per-target degradation)."""


# -- appraiser -----------------------------------------------------------


class PolicyParseError(UspectError):
    """Policy document malformed or missing required fields."""

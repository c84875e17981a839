"""Exception hierarchy shared across the package."""


class GraphSPNError(Exception):
    """Base class for all package errors."""


class StructureError(GraphSPNError):
    """Invalid circuit structure or construction request."""


class DimensionError(GraphSPNError):
    """Assignment/mask length does not match the circuit scope."""


class CapacityError(GraphSPNError):
    """Graph does not fit the configured slot budget."""


class IntegrityError(GraphSPNError):
    """Graph tensor violates its invariants (symmetry, virtual isolation)."""


class FeasibilityError(GraphSPNError):
    """Requested computation is combinatorially infeasible."""


class ImpossibleEvidenceError(GraphSPNError):
    """Conditioning evidence has zero probability mass."""


class UnsupportedQueryError(GraphSPNError):
    """Query not answerable by this model variant."""


class ModelFormatError(GraphSPNError):
    """Malformed or truncated model file."""


class ModelVersionError(ModelFormatError):
    """Model file written with an unsupported format version."""

    def __init__(self, found, expected):
        super().__init__(f"unsupported model format version {found} (expected {expected})")
        self.found = found
        self.expected = expected


class TrainingError(GraphSPNError):
    """Training aborted (bad data, non-finite loss)."""


class DataError(GraphSPNError):
    """Corpus loading or splitting failed."""


class SmilesError(GraphSPNError):
    """SMILES parse failure, with a 0-based position into the input text."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position

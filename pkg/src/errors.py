"""
Exception hierarchy for the CDR veracity toolkit

Per-line data problems are never raised: they are collected as rejects
(see ingest.records.RejectLog). Exceptions are reserved for fatal conditions.
"""


class VeracityError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(VeracityError, ValueError):
    """Invalid configuration file, flag or value"""


class InputFileError(VeracityError, FileNotFoundError):
    """Missing or unreadable input file"""

    def __init__(self, path, reason: str = "not found"):
        self.path = str(path)
        super().__init__(f"Input file {reason}: {self.path}")


class IngestError(VeracityError):
    """Fatal ingest problem (missing header, non-contiguous user stream, ...)"""


class DuplicateTowerError(IngestError):
    def __init__(self, cell_id: str):
        self.cell_id = cell_id
        super().__init__(f"Duplicate cell_id in tower registry: {cell_id}")


class GeometryError(VeracityError):
    """Invalid geometry; the message names the offending unit"""

    def __init__(self, unit_id: str, reason: str):
        self.unit_id = unit_id
        super().__init__(f"Invalid geometry for unit {unit_id}: {reason}")


class DegenerateFieldError(VeracityError, ValueError):
    code = "degenerate_field"

    def __init__(self, message: str = "all values are equal"):
        super().__init__(f"{self.code}: {message}")


class InsufficientDataError(VeracityError, ValueError):
    """Too few observations for a statistic"""


class CalibrationError(VeracityError):
    """Entropy baseline cannot be calibrated or applied"""


class InvariantViolation(VeracityError, RuntimeError):
    """An internal invariant failed at a stage boundary"""


class SynthesisError(VeracityError, ValueError):
    """The synthetic world cannot be generated from its configuration"""

"""Exception hierarchy.

Every error carries a ``category`` used by the command line to pick an exit
status and to label machine-readable failure summaries.
"""

from __future__ import annotations


class LoadLensError(Exception):
    category = "error"
    exit_code = 1


# ingest ---------------------------------------------------------------------


class IngestError(LoadLensError):
    """Parse failure; ``location`` names the offending line or byte offset."""

    category = "ingest"
    exit_code = 4

    def __init__(self, message: str, path=None, line: int | None = None, offset: int | None = None):
        self.path = path
        self.line = line
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class MissingFileError(IngestError):
    pass


class MalformedHeaderError(IngestError):
    pass


class DuplicateSubjectError(IngestError):
    pass


class MalformedRowError(IngestError):
    pass


class NegativeOnsetError(IngestError):
    pass


class NonMonotonicTimestampsError(IngestError):
    pass


class EmptyStreamError(IngestError):
    pass


class SizeMismatchError(IngestError):
    pass


class UnknownChannelError(IngestError):
    pass


class UnsupportedFormatError(IngestError):
    pass


# epoching / cleaning ----------------------------------------------------------


class OnsetOutOfRangeError(LoadLensError):
    category = "epoching"
    exit_code = 4


class UnknownSubjectError(LoadLensError):
    category = "cleaning"
    exit_code = 4


# features -----------------------------------------------------------------------


class FeatureError(LoadLensError):
    category = "features"
    exit_code = 4


class TooFewSamplesError(FeatureError):
    pass


class DegenerateSeriesError(FeatureError):
    pass


class KeyMismatchError(FeatureError):
    pass


# learning -------------------------------------------------------------------------


class LearningError(LoadLensError):
    category = "learning"
    exit_code = 4


class ClassTooSmallError(LearningError):
    pass


class EmptyInputError(LearningError):
    pass


class SingleClassError(LearningError):
    pass


class DimensionMismatchError(LearningError):
    pass


class MissingCoversError(LearningError):
    pass


class EmptyAttributionError(LearningError):
    pass


class UnknownTaskError(LearningError):
    pass


class LengthMismatchError(LearningError):
    pass


# orchestration ----------------------------------------------------------------------


class MissingArtifactError(LoadLensError):
    category = "missing-artifact"
    exit_code = 2


class ConfigInvalidError(LoadLensError):
    category = "config-invalid"
    exit_code = 3

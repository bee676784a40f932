"""Exception hierarchy shared by all evdetect modules."""


class EVDetectError(Exception):
    """Base class for every error raised by this package."""


class DataError(EVDetectError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class BehindCameraError(EVDetectError):
    pass


class InvalidRegionError(EVDetectError):
    pass


class InvalidConfigError(DataError):
    pass


class ModelNotTrainedError(EVDetectError):
    pass


class DegenerateDatasetError(DataError):
    pass


class DegenerateLabelsError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class SamplingFailureError(EVDetectError):
    pass


class UnreachableRecallError(EVDetectError):
    pass


class MissingGroundTruthError(DataError):
    pass


class SchemaVersionError(DataError):
    pass


class ProvenanceError(DataError):
    """Mining logs overlap the data a model was trained on."""

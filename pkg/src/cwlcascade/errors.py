"""Exception hierarchy shared by every pipeline stage.

Each exception carries a short ``code`` used by the command-line front end
when it prints ``ERROR <code>: <message>``.
"""


class CwlError(Exception):
    code = "CwlError"


class MissingFileError(CwlError, FileNotFoundError):
    code = "MissingFile"


class MalformedCsvError(CwlError, ValueError):
    code = "MalformedCsv"


class InconsistentRateError(CwlError, ValueError):
    code = "InconsistentRate"


class InvalidCutoffError(CwlError, ValueError):
    code = "InvalidCutoff"


class UnimputedInputError(CwlError, ValueError):
    code = "UnimputedInput"


class EmptyInputError(CwlError, ValueError):
    code = "EmptyInput"


class DegenerateDataError(CwlError, ValueError):
    code = "DegenerateData"


class EmptyRowError(CwlError, ValueError):
    code = "EmptyRow"


class ShapeMismatchError(CwlError, ValueError):
    code = "ShapeMismatch"


class TooManyMissingError(CwlError, ValueError):
    code = "TooManyMissing"


class GapTooLongError(CwlError, ValueError):
    code = "GapTooLong"


class RegionTooShortError(CwlError, ValueError):
    code = "RegionTooShort"


class ClassEmptyError(CwlError, ValueError):
    code = "ClassEmpty"


class InputTooShortError(CwlError, ValueError):
    code = "InputTooShort"


class EmptyDatasetError(CwlError, ValueError):
    code = "EmptyDataset"


class KTooLargeError(CwlError, ValueError):
    code = "KTooLarge"


class ModelNotTrainedError(CwlError, RuntimeError):
    code = "ModelNotTrained"


class SingularSystemError(CwlError, ArithmeticError):
    code = "SingularSystem"


class KOutOfRangeError(CwlError, ValueError):
    code = "KOutOfRange"


class DuplicatePairError(CwlError, ValueError):
    code = "DuplicatePair"


class MissingPairError(CwlError, ValueError):
    code = "MissingPair"


class RatingOutOfRangeError(CwlError, ValueError):
    code = "RatingOutOfRange"


class NoEpochsError(CwlError, ValueError):
    code = "NoEpochs"


class InvalidConfigError(CwlError, ValueError):
    code = "InvalidConfig"


class CheckpointError(CwlError, ValueError):
    code = "BadCheckpoint"


class TrainingFailedError(CwlError, RuntimeError):
    code = "TrainingFailed"


class UsageError(CwlError, ValueError):
    code = "Usage"

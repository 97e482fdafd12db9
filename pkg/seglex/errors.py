class SeglexError(Exception):
    #: Process exit code used by the command line interface.
    exit_code = 1


# configuration and command line arguments

class ConfigError(SeglexError):
    exit_code = 2


class ArgumentError(ConfigError):
    pass


class MissingArguments(ArgumentError):
    pass


class WrongType(ArgumentError):
    pass


# input data

class DataError(SeglexError):
    exit_code = 3


class CorpusError(DataError):
    pass


class CacheError(DataError):
    pass


class GroundTruthError(DataError):
    pass


# numerics

class NumericalError(SeglexError):
    exit_code = 4


class EigenSolverError(NumericalError):
    pass


class SegmentationError(NumericalError):
    pass


class AcousticModelError(NumericalError):
    pass

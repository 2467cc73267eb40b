"""Exception types raised across the package."""


class FFAError(Exception):
    """Base class for every error raised by ffa_punct."""


class ShapeError(FFAError, ValueError):
    pass


class DegenerateRowError(FFAError, ValueError):
    """A softmax row has every entry masked out."""


class EmptyBatchError(FFAError, ValueError):
    """Every target position is ignored, so the mean loss is undefined."""


class DeterminismError(FFAError, RuntimeError):
    pass


class ConfigError(FFAError, ValueError):
    pass


class AlignmentError(FFAError, ValueError):
    pass


class OptimizerError(FFAError, RuntimeError):
    pass


class CorpusParseError(FFAError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class CheckpointError(FFAError, ValueError):
    pass


class SequenceLengthError(ShapeError):
    pass


class EmptyCorpusError(FFAError, ValueError):
    pass

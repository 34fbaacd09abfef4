"""Exception hierarchy shared by every stage of the pipeline."""


class DivKeyError(Exception):
    """Base class for all package errors."""


class EmptyDocument(DivKeyError, ValueError):
    pass


class EmptyPhrase(DivKeyError, ValueError):
    pass


class EmptyDataset(DivKeyError, ValueError):
    pass


class ShapeMismatch(DivKeyError, ValueError):
    pass


class AllMasked(DivKeyError, ValueError):
    pass


class IndexOutOfRange(DivKeyError, IndexError):
    pass


class PhraseNotInDocument(DivKeyError, ValueError):
    pass


class DimensionMismatch(DivKeyError, ValueError):
    pass


class IoError(DivKeyError, OSError):
    pass


class ParseError(DivKeyError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CorruptCheckpoint(DivKeyError, ValueError):
    def __init__(self, name: str, message: str = ""):
        super().__init__(f"corrupt checkpoint at {name!r}" + (f": {message}" if message else ""))
        self.name = name

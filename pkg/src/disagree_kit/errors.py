"""Exception types shared across the toolkit."""


class DisagreeKitError(Exception):
    """Base class for every error raised by this package."""


# --- label arithmetic ---

class EmptyJudgments(DisagreeKitError):
    pass


class InsufficientJudgments(DisagreeKitError):
    pass


class CodeParseError(DisagreeKitError):
    """Malformed annotator code; `position` is the 0-based offending index."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


# --- corpus and prediction files ---

class CorpusFormatError(DisagreeKitError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class MissingColumns(CorpusFormatError):
    pass


class DuplicateId(CorpusFormatError):
    pass


# --- embedding store ---

class MissingVector(DisagreeKitError):
    def __init__(self, message, key=None, instance_id=None):
        super().__init__(message)
        self.key = key
        self.instance_id = instance_id


class DuplicateKey(DisagreeKitError):
    pass


class CorruptStore(DisagreeKitError):
    pass


class DimensionMismatch(DisagreeKitError):
    pass


# --- geometry ---

class DegenerateSpectrum(DisagreeKitError):
    pass


class ZeroVector(DisagreeKitError):
    def __init__(self, message, instance_id=None):
        super().__init__(message)
        self.instance_id = instance_id


# --- metrics ---

class UndefinedAlpha(DisagreeKitError):
    pass


class UndefinedCorrelation(DisagreeKitError):
    pass


# --- optimization ---

class InvalidStart(DisagreeKitError):
    pass


# --- ensembling ---

class InfeasibleStrategy(DisagreeKitError):
    pass


class InsufficientAnnotators(DisagreeKitError):
    pass


class MissingStore(DisagreeKitError):
    pass


# --- MLP training ---

class DivergenceError(DisagreeKitError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch

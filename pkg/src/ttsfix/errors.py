"""Exception types raised across the package."""


class TtsfixError(Exception):
    """Base class for all package errors."""


# data / metric errors
class EmptyInput(TtsfixError, ValueError):
    pass


class EmptyReference(TtsfixError, ValueError):
    pass


class UndefinedIou(TtsfixError, ValueError):
    pass


class DegenerateInput(TtsfixError, ValueError):
    pass


# loss errors
class LengthMismatch(TtsfixError, ValueError):
    pass


class InvalidDistribution(TtsfixError, ValueError):
    pass


class IndexOutOfRange(TtsfixError, IndexError):
    pass


class NegativeLoss(TtsfixError, ValueError):
    pass


class NonPositiveBeta(TtsfixError, ValueError):
    pass


class EmptyMask(TtsfixError, ValueError):
    pass


class NonFiniteValue(TtsfixError, ValueError):
    pass


# alignment / correction errors
class UnalignedWord(TtsfixError, LookupError):
    def __init__(self, word_index: int):
        super().__init__(f"reference word {word_index} has no word segment in the track")
        self.word_index = word_index


class EditorFailure(TtsfixError, RuntimeError):
    pass


class AdapterError(TtsfixError, RuntimeError):
    pass


class TargetTooShort(TtsfixError, ValueError):
    pass


# dataset errors
class ParseError(TtsfixError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(TtsfixError, ValueError):
    def __init__(self, sample_id: str, message: str):
        super().__init__(f"sample {sample_id!r}: {message}")
        self.sample_id = sample_id


class DuplicateId(TtsfixError, ValueError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class TooFewSamples(TtsfixError, ValueError):
    pass


class EmptyManifest(TtsfixError, ValueError):
    pass


# preference errors
class GroupTooSmall(TtsfixError, ValueError):
    pass


class ProviderMismatch(TtsfixError, ValueError):
    pass


class UnmatchedId(TtsfixError, KeyError):
    pass

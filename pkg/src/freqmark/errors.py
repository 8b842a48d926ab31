"""Exception hierarchy shared across freqmark."""


class FreqmarkError(Exception):
    """Base class for all domain errors raised by freqmark."""


class BackendUnavailable(FreqmarkError):
    """The language-model backend could not be reached or refused the request."""


class ContextTooLong(FreqmarkError):
    """The context exceeds the backend's window."""


class InvalidSignal(FreqmarkError, ValueError):
    pass


class InsufficientCandidates(FreqmarkError):
    def __init__(self, position: int, needed: int, got: int):
        super().__init__(
            f"backend returned {got} candidates at generated position {position}, "
            f"rank {needed} required"
        )
        self.position = position
        self.needed = needed
        self.got = got


class InputsTooShort(FreqmarkError, ValueError):
    pass


class TransformerFailed(FreqmarkError):
    pass


class HookUnavailable(FreqmarkError):
    pass


class EmptyClass(FreqmarkError, ValueError):
    pass


class DegenerateGroundTruth(FreqmarkError, ValueError):
    pass


class CorpusTooSmall(FreqmarkError, ValueError):
    pass

"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when a waveform or feature input violates a precondition."""


class InvalidSpec(ValueError):
    """Raised when a synthetic-corpus spec is internally inconsistent."""


class ManifestError(Exception):
    """Raised on manifest IO / schema problems, carrying the offending utterance id."""

    def __init__(self, message, utt_id=None):
        super().__init__(message if utt_id is None else f"{message} (utt_id={utt_id})")
        self.utt_id = utt_id


class EmptyText(ValueError):
    pass


class UnknownSymbol(KeyError):
    def __init__(self, symbol, position):
        super().__init__(f"unknown symbol {symbol!r} at position {position}")
        self.symbol = symbol
        self.position = position


class EmptyOutput(ValueError):
    """Raised when upsampling would produce a zero-length sequence."""


class ReferenceTooShort(ValueError):
    def __init__(self, t, t_min):
        super().__init__(f"reference has {t} frames, need at least {t_min}")
        self.t_min = t_min


class MissingDurations(ValueError):
    """Raised when a training stage needs ground-truth durations the corpus lacks."""


class DimMismatch(ValueError):
    """Raised when checkpoint dimensions disagree with the requested config."""


class CorruptCheckpoint(Exception):
    pass


class StageMismatch(Exception):
    def __init__(self, expected, found):
        super().__init__(f"expected a {expected!r} checkpoint, found {found!r}")
        self.expected = expected
        self.found = found


class ConfigError(ValueError):
    """Raised on unknown config keys or malformed values."""


class MetricUndefined(ValueError):
    """Raised when a metric has too few contributing items to be defined."""

    def __init__(self, metric):
        super().__init__(f"metric {metric!r} undefined for this input")
        self.metric = metric

"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage and configuration problems exit
with 1, data-integrity problems with 2.
"""


class ScaleNormError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(ScaleNormError):
    """A config value or level id does not resolve against the configuration."""


class DatasetError(ScaleNormError):
    """An input file is structurally unusable."""


class ParseError(DatasetError):
    """Malformed JSON; carries the character offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class IntegrityError(DatasetError):
    """Cross-references inside a dataset do not resolve."""


class AlignmentError(ScaleNormError):
    """Per-model detection lists cannot be averaged index-by-index."""

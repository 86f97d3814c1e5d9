"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so new error types should
subclass the category they belong to rather than the root.
"""


class VoteSynthError(Exception):
    """Base class for all package errors."""


class ConfigError(VoteSynthError):
    """Invalid configuration, parameters, or data-model invariant violation."""


class TemplateError(ConfigError):
    """Prompt template missing a required slot or malformed at load time."""


class DatasetFormatError(VoteSynthError):
    """Malformed dataset file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class BackendError(VoteSynthError):
    """Generator or embedder backend failure after exhausting retries."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class UnsupportedOperationError(VoteSynthError):
    """Operation not available under the active binding."""


class PrivacyDisciplineError(VoteSynthError):
    """Budget-discipline violation: double noising, excess releases, etc."""


class VotingError(VoteSynthError):
    """Voting precondition failure: empty label pool, shape mismatch."""


class DegenerateHistogramError(VoteSynthError):
    """All-zero nearest histogram; caller should fall back to uniform weights."""


class EvaluationError(VoteSynthError):
    """Evaluation precondition failure or non-convergent statistic."""

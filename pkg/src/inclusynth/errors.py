"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class; ``category`` doubles as the CLI failure category."""

    category = "pipeline"
    exit_code = 1


class EmptyInputError(PipelineError, ValueError):
    category = "empty-input"
    exit_code = 3


class InvalidParameterError(PipelineError, ValueError):
    category = "invalid-parameter"
    exit_code = 2


class MissingVocabularyError(PipelineError, KeyError):
    category = "missing-vocabulary"
    exit_code = 3

    def __init__(self, category: str):
        self.missing_category = category
        super().__init__(f"no vocabulary entries for category {category!r}")

    def __str__(self) -> str:
        return self.args[0]


class LeakageError(PipelineError):
    category = "leakage"
    exit_code = 4


class PromptLookupError(PipelineError, KeyError):
    category = "lookup"
    exit_code = 2

    def __str__(self) -> str:
        return self.args[0] if self.args else "unknown prompt"


class ConflictError(PipelineError):
    category = "conflict"
    exit_code = 4


class MissingArtifactError(PipelineError, FileNotFoundError):
    category = "missing-artifact"
    exit_code = 5


class ConfigError(PipelineError):
    category = "config"
    exit_code = 2


class AuthError(PipelineError):
    category = "auth"
    exit_code = 6


class BackendError(PipelineError):
    """A retryable failure talking to a model backend."""

    category = "backend"
    exit_code = 7

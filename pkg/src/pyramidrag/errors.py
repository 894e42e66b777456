"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`PyramidRagError`
so callers (CLI, HTTP service) can map them to structured error payloads by
class name.
"""

from __future__ import annotations


class PyramidRagError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# model
class ZeroVector(PyramidRagError, ValueError):
    pass


class NonFinite(PyramidRagError, ValueError):
    pass


class DimensionMismatch(PyramidRagError, ValueError):
    pass


# clients
class ServiceError(PyramidRagError):
    pass


class ParseError(PyramidRagError, ValueError):
    pass


class FixtureMissing(PyramidRagError):
    pass


class EmptyText(PyramidRagError, ValueError):
    pass


class NoPages(PyramidRagError, ValueError):
    pass


# corpus
class EmptyCorpus(PyramidRagError):
    pass


class UnreadablePage(PyramidRagError):
    pass


class SchemaError(PyramidRagError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DanglingGoldPage(PyramidRagError, ValueError):
    pass


# pyramid
class UnknownIndexKind(PyramidRagError, KeyError):
    pass


class IndexIoError(PyramidRagError, OSError):
    pass


class FormatVersionMismatch(PyramidRagError):
    pass


class ChecksumMismatch(PyramidRagError):
    pass


# queryx / fusion
class EmptyQuery(PyramidRagError, ValueError):
    pass


class EmptyInput(PyramidRagError, ValueError):
    pass


class InvalidConfig(PyramidRagError, ValueError):
    pass


# lateint
class InvalidFactor(PyramidRagError, ValueError):
    pass


# evalkit
class EmptyGold(PyramidRagError, ValueError):
    pass

"""Exception types shared across the engine."""

from __future__ import annotations


class WeaveError(Exception):
    """Base class for all engine errors."""


class StoreError(WeaveError):
    """Schema or data violation in the relational store."""


class SqlSyntaxError(WeaveError):
    """Lex/parse failure, reported as ``file:line:col: message``."""

    def __init__(self, message: str, line: int, col: int, filename: str = "<sql>"):
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename
        super().__init__(f"{filename}:{line}:{col}: {message}")


class ClassifyError(WeaveError):
    """View classification or semantic analysis failure."""


class CompileError(WeaveError):
    """Model synthesis failure (unsupported construct, missing domain source)."""


class BindError(WeaveError):
    """Grounding failure: store drift, overflow, bad scope."""


class SolveError(WeaveError):
    """Solver misuse (e.g. asking for a core of a satisfiable model)."""

"""Exception types shared across the pipeline."""

from __future__ import annotations


class PhenolabError(Exception):
    """Base class for all phenolab errors."""


class MissingStream(PhenolabError):
    """A required input file or stream directory is absent."""


class SchemaError(PhenolabError):
    """A file does not match its declared schema."""

    def __init__(self, path: str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class RangeError(PhenolabError):
    """A parsed value violates its documented bounds."""

    def __init__(self, path: str, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class RegistryMismatch(PhenolabError):
    """An extractor emitted a different arity than the registry declares."""


class ShapeError(PhenolabError):
    """A tensor does not have the shape an operation requires."""


class DivergenceError(PhenolabError):
    """Training produced a non-finite loss."""


class DegenerateSplit(PhenolabError):
    """A requested split leaves the train or test side empty."""

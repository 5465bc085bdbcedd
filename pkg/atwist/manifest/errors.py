"""Structured manifest errors. Every one carries a location and the offending token."""
from __future__ import annotations


class ManifestError(Exception):
    def __init__(self, message: str, line: int = 0, column: int = 0, token: str = ""):
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        super().__init__(self.render())

    def render(self) -> str:
        where = f"line {self.line}, column {self.column}: " if self.line else ""
        near = f" (near {self.token!r})" if self.token else ""
        return f"{where}{self.message}{near}"


class ManifestSyntaxError(ManifestError):
    pass


class UnknownIdentifier(ManifestError):
    pass


class DuplicateComponent(ManifestError):
    """A component key repeats, or is not strictly ascending."""


class IndexOutOfRange(ManifestError):
    pass


class CyclicScalarDefinition(ManifestError):
    pass


class MissingBlock(ManifestError):
    def __init__(self, block: str, needed_by: str = ""):
        self.block = block
        suffix = f" (needed by {needed_by})" if needed_by else ""
        super().__init__(f"manifest has no [{block}] block{suffix}", token=block)

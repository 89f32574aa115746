"""Exception hierarchy shared by the loaders and metrics."""

from __future__ import annotations

from typing import Optional


class ConceptEvalError(Exception):
    """Base class for every error raised by this package."""


class FormatError(ConceptEvalError, ValueError):
    """An input file does not follow its declared format."""

    def __init__(self, message: str, *, path: object = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.reason = message


class UnknownIdentifierError(ConceptEvalError, LookupError):
    """An identifier was requested that the store does not contain."""

    def __init__(self, identifier: str, kind: str = "identifier"):
        self.identifier = identifier
        self.kind = kind
        super().__init__(f"unknown {kind}: {identifier!r}")

    def __str__(self) -> str:  # LookupError would repr() the args
        return self.args[0]


class ZeroNormError(ConceptEvalError, ValueError):
    """Cosine similarity is undefined for a zero vector."""

    def __init__(self, identifier: Optional[str] = None):
        self.identifier = identifier
        what = f"vector for {identifier!r}" if identifier is not None else "vector"
        super().__init__(f"zero-norm {what}: cosine similarity is undefined")


class CycleError(ConceptEvalError, ValueError):
    """The subclass graph contains a cycle."""

    def __init__(self, members: list[str]):
        self.members = members
        super().__init__("cyclic subclass graph: " + " -> ".join(members))


class DisconnectedError(ConceptEvalError, ValueError):
    """Two concepts share no path (or no common ancestor) in the hierarchy."""


class NoEntitiesError(ConceptEvalError, ValueError):
    """None of the entities of a concept could be resolved to a vector."""


class SchemaError(ConceptEvalError, ValueError):
    """A property lacks the domain/range assertions a metric needs."""


class InsufficientDataError(ConceptEvalError, ValueError):
    """Too few usable observations for a statistic."""

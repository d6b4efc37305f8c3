"""Domain errors carrying stable machine-readable codes.

Every rule violation in the engine raises :class:`FairflowError` with a
``code`` string that callers (and the HTTP layer) can match on without
parsing prose. The human-readable message is advisory only.
"""

from __future__ import annotations


class FairflowError(Exception):
    """An operation was rejected; ``code`` identifies the rule that fired."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code
        self.message = message or code

    def __repr__(self) -> str:  # pragma: no cover
        return f"FairflowError({self.code!r}, {self.message!r})"

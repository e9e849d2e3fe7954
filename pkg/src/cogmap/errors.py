"""Error type shared across the runtime.

Every rejected operation raises :class:`CogmapError` with a stable ``code``
string (e.g. ``"unknown-target"``, ``"approval-required"``); the service layer
maps codes onto HTTP statuses. Invariant *violations* discovered by
validation are data (see ``graph.ValidationReport``), not exceptions.
"""

from __future__ import annotations


class CogmapError(Exception):
    """Operation rejected by the runtime; ``code`` is machine-readable."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


def reject(code: str, message: str = "") -> CogmapError:
    return CogmapError(code, message)

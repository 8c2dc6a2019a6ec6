"""Exception hierarchy shared across the package.

Two families matter for callers (and for CLI exit codes): problems with the
input data itself (``DataError``) and problems arising during numerical
linear algebra (``NumericalError``).
"""

from __future__ import annotations


class PanelCalError(Exception):
    """Base class for all package errors."""


class DataError(PanelCalError, ValueError):
    """Invalid, inconsistent, or insufficient input data."""


class DisconnectedGraphError(DataError):
    """The assessor-object graph has more than one connected component.

    Carries the offending partition so callers can report which groups of
    assessors/objects never overlap.
    """

    def __init__(self, components):
        self.components = components
        parts = []
        for comp in components:
            assessors = ",".join(comp.assessors[:4])
            objects = ",".join(comp.objects[:4])
            more_a = "..." if len(comp.assessors) > 4 else ""
            more_o = "..." if len(comp.objects) > 4 else ""
            parts.append(f"[assessors: {assessors}{more_a} | objects: {objects}{more_o}]")
        super().__init__(
            f"assessment graph is disconnected ({len(components)} components): "
            + " ".join(parts)
        )


class InsufficientDataError(DataError):
    """Too few assessments for the requested quantity to be defined."""


class NumericalError(PanelCalError, ArithmeticError):
    """A linear solve or factorization failed or is untrustworthy."""

"""Exception types shared across the package."""

from __future__ import annotations


class ParameterError(ValueError):
    """A construction parameter lies outside its admissible range."""


class DomainError(ValueError):
    """An input function or region violates a structural requirement."""


class SingularityError(ValueError):
    """Evaluation requested at a coordinate singularity such as the pole."""


class PreconditionError(ValueError):
    """A hypothesis required by an operation fails for the given inputs."""


class IntegrationError(RuntimeError):
    """The Jacobi integration could not be carried out."""


class QuadratureError(RuntimeError):
    """An integral failed to converge or diverges."""

"""Exception hierarchy shared by all flowbalance modules."""

from __future__ import annotations


class FlowBalanceError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FlowBalanceError, ValueError):
    """An argument lies outside the domain of the operation."""


class BeyondSupportError(DomainError):
    """Hazard requested where the survival function is zero."""


class ModelValidationError(FlowBalanceError, ValueError):
    """A model document failed parsing or semantic validation.

    ``errors`` holds every problem found, not just the first one.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ReducibleChainError(FlowBalanceError):
    """The chain is not a single communicating class."""

    def __init__(self, message, states=()):
        self.states = tuple(states)
        super().__init__(message)


class EigenError(FlowBalanceError):
    """The dominant eigenpair violates Perron-Frobenius assumptions."""


class DivergenceError(FlowBalanceError):
    """An improper integral does not converge (tail too heavy for the decay)."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class ConvergenceError(FlowBalanceError):
    """An iterative procedure stopped without meeting its tolerance."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class IntegrationError(FlowBalanceError):
    """Time stepping failed (step size underflow or stability violation)."""


class UnsupportedStructureError(FlowBalanceError):
    """The model structure is outside what a solver can handle."""


class UndefinedHazardError(FlowBalanceError):
    """No surviving sample paths are left to estimate a hazard."""

    def __init__(self, message, survivors=0):
        self.survivors = survivors
        super().__init__(message)

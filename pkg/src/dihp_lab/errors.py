"""Exception types shared by every module."""


class LabError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(LabError, ValueError):
    """An argument is outside the domain of an operation."""


class CapExceeded(LabError):
    """An enumeration or transform would exceed a configured cap."""

    def __init__(self, what, size, cap):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(f"{what}: size {size} exceeds cap {cap}")


class StructuralError(LabError):
    """Internal inconsistency, e.g. an infeasible model that should be feasible."""


class ContractError(LabError):
    """A user-supplied callable broke its declared contract."""


class PreconditionError(LabError):
    """A check was asked to run outside the hypotheses it needs."""

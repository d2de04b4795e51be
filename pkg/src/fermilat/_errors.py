"""Exception types shared across the package."""


class FermilatError(Exception):
    """Base class for all package errors."""


class BoxSizeError(FermilatError):
    """Requested lattice box exceeds the configured site maximum."""


class DomainError(FermilatError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(FermilatError, ValueError):
    """Operands live on different boxes or have incompatible shapes."""


class GridError(FermilatError, ValueError):
    """A time or frequency grid does not meet the operation's requirements."""


class SingularKernelError(FermilatError):
    """A kernel that must be inverted is numerically singular."""


class OutsideDomainError(FermilatError):
    """A current functional has a component outside the range of the heat form."""


class StageDependencyError(FermilatError, ValueError):
    """A pipeline stage was requested without the stages it depends on."""


class ConfigError(FermilatError, ValueError):
    """A run configuration violates a constraint; message names the field."""

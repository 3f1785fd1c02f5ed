"""Exception types shared across the package."""


class ContractError(ValueError):
    """An input violates a documented precondition (off-manifold point,
    non-tangent vector, mode mismatch, ...)."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """A configuration value or flag is invalid."""


class NumericalError(RuntimeError):
    """A computation produced NaN/Inf and cannot continue."""

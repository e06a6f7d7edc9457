class SpecificationError(ValueError):
    """A model, recipe or scenario description is malformed or inconsistent."""


class DimensionCapError(SpecificationError):
    """The composite Hilbert space is too large for dense diagonalization."""


class ReductionError(ValueError):
    """The rate system cannot be closed on the reduced density matrix."""

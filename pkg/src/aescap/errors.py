"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: usage errors -> 1, data/checkpoint
errors -> 2, invariant or gradient failures -> 3.
"""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class DomainError(ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class DataError(ValueError):
    """A corpus file or record is malformed."""


class CheckpointError(ValueError):
    """A checkpoint archive is missing, corrupt, or version-incompatible."""

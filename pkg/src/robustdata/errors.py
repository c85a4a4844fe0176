"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its documented domain (bad epsilon, fraction, ...)."""


class ContractError(ValueError):
    """A structural precondition was violated (shape mismatch, non-scalar objective, ...)."""


class DataError(ValueError):
    """A dataset violates its invariants (bad labels, empty dataset, ...)."""


class NonFiniteError(FloatingPointError):
    """A public operation produced NaN or Inf."""


class FormatError(ValueError):
    """A serialized file is malformed. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset

"""Exception hierarchy.

``EEQTError`` subclasses fall in two families that the CLI maps to exit
codes: input problems (``InputError``) and numerical failures
(``NumericalError``).
"""


class EEQTError(Exception):
    pass


class InputError(EEQTError, ValueError):
    pass


class NumericalError(EEQTError, ArithmeticError):
    pass


class DimensionError(InputError):
    pass


class NonHermitianInput(InputError):
    pass


class ModelValidationError(InputError):
    """Raised by ``validate``; ``violations`` lists every problem found."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [self]


class NonHermitian(ModelValidationError):
    def __init__(self, sector):
        self.sector = sector
        super().__init__(f"Hamiltonian of sector {sector} is not Hermitian")


class DiagonalCouplingPresent(ModelValidationError):
    def __init__(self, sector):
        self.sector = sector
        super().__init__(f"nonzero diagonal coupling g[{sector},{sector}]")


class ShapeMismatch(ModelValidationError):
    def __init__(self, to_sector, from_sector, detail=""):
        self.to_sector = to_sector
        self.from_sector = from_sector
        msg = f"shape mismatch for block ({to_sector},{from_sector})"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class InvalidState(InputError):
    pass


class ZeroIntensity(NumericalError):
    """A jump was requested from a state with no open channel."""


class DarkState(NumericalError):
    """A jump operator annihilates the state it was applied to."""


class StepCollapse(NumericalError):
    """An SDE step produced the zero vector."""


class NonOrthogonal(InputError):
    pass

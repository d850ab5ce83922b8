"""Exception types. Each maps to a stable CLI exit code."""


class FGenError(Exception):
    exit_code = 3


class ValidationError(FGenError, ValueError):
    """Malformed input: distributions, tensors, flags."""

    exit_code = 2


class DomainError(FGenError, ValueError):
    """An argument lies outside the domain a formula is stated on."""

    exit_code = 2


class NumericalError(FGenError, ArithmeticError):
    exit_code = 3


class EmptyStratumError(NumericalError):
    def __init__(self, cells):
        self.cells = list(cells)
        draw, row = self.cells[0]
        where = f"row {row}" if draw is None else f"disintegrated cell (draw={draw}, row={row})"
        super().__init__(f"empty mask stratum in {where}; {len(self.cells)} cell(s) affected")


class BoundPreconditionError(FGenError):
    """A bound's stated assumptions do not hold for the given data."""

    exit_code = 3


class TrainingDivergedError(NumericalError):
    def __init__(self, step, draw=None, mask=None):
        self.step, self.draw, self.mask = step, draw, mask
        where = "" if draw is None else f" (draw={draw}, mask={mask})"
        super().__init__(f"non-finite gradient at step {step}{where}")

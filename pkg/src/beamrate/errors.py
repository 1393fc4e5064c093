"""Exception types raised by beamrate."""


class BeamrateError(Exception):
    """Base class for all package errors."""


class ValidationError(BeamrateError, ValueError):
    """An input violates a documented precondition."""


class DegenerateInputError(BeamrateError, ValueError):
    pass


class FormatError(BeamrateError, ValueError):
    """A channel file is malformed. ``field`` names the offending part."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SingularityError(BeamrateError, ArithmeticError):
    pass


class NumericError(BeamrateError, ArithmeticError):
    pass


class BudgetExceededError(BeamrateError):
    """Exhaustive search would visit more subsets than allowed."""

    def __init__(self, count, cap):
        super().__init__(f"exhaustive search needs {count} subsets, cap is {cap}")
        self.count = count
        self.cap = cap


class UnreachableRateError(BeamrateError):
    """Target sum-rate lies above what a scheme reaches at the top SNR."""

    def __init__(self, target, plateau):
        super().__init__(
            f"target {target:.6g} bits/s/Hz unreachable (rate at max SNR is {plateau:.6g})")
        self.target = target
        self.plateau = plateau

"""Exception types raised by the solvers and the simulator."""


class SupermarketError(Exception):
    """Base class for errors raised by this package."""


class NumericalError(SupermarketError, ArithmeticError):
    """A computation failed a numerical self-check or did not converge."""


class StepSizeError(NumericalError):
    """An ODE step broke monotonicity of the tail beyond tolerance."""


class EquilibriumError(NumericalError):
    """A computed equilibrium failed its post-hoc best-response check."""


class CouplingViolation(SupermarketError, AssertionError):
    """The coupled simulation broke the pathwise ordering of the two systems.

    This cannot happen for a correct implementation, so it is always fatal.
    """

    def __init__(self, time, x, lhs, rhs):
        self.time = time
        self.x = x
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(
            f"coupling order violated at t={time:.6g}, x={x}: "
            f"system 2 excess {lhs} > system 1 excess {rhs}"
        )

"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid user input (mesh sizes, penalties, node data, ...)."""


class InfeasibleCoercivity(ValueError):
    """No weight nu makes nu*M0 + M1 - gamma*I positive semidefinite."""

    def __init__(self, block, message):
        super().__init__(message)
        self.block = block


class NumericError(RuntimeError):
    """A numerical construction (quadrature, factorization) failed."""


class SolverError(NumericError):
    """A slab solve failed; carries the slab index and a condition estimate."""

    def __init__(self, slab, condition, message):
        super().__init__(f"slab {slab}: {message} (condition estimate {condition:.3e})")
        self.slab = slab
        self.condition = condition

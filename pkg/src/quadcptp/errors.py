"""Exception hierarchy shared across the package."""


class QuadCPTPError(Exception):
    """Base class for every error raised by quadcptp."""


class SpecError(QuadCPTPError, ValueError):
    """A system description violates its invariants (shape, symmetry, sign)."""


class ConstraintViolation(QuadCPTPError):
    """Raw generator coefficients break trace preservation or Hermiticity.

    ``kind`` is ``"trace"`` or ``"hermiticity"``.
    """

    def __init__(self, kind, residual):
        self.kind = kind
        self.residual = float(residual)
        super().__init__(f"{kind} constraint violated (residual {self.residual:.3e})")


class NoRealShift(QuadCPTPError):
    """The linear coefficients admit no real displacement vector."""

    def __init__(self, residual):
        self.residual = float(residual)
        super().__init__(f"no real shift solves the linear terms (residual {self.residual:.3e})")


class PropagatorOverflow(QuadCPTPError, OverflowError):
    pass


class Unsupported(QuadCPTPError):
    """No closed form exists for the requested Hamiltonian shape."""


class Degenerate(QuadCPTPError):
    pass


class NotUnitary(QuadCPTPError):
    pass


class NotGCommuting(QuadCPTPError):
    pass


class NotHurwitz(QuadCPTPError):
    """The drift matrix has an eigenvalue with nonnegative real part."""


class NotPositiveDefinite(QuadCPTPError):
    pass


class StepUnderflow(QuadCPTPError):
    pass


class BudgetExceeded(QuadCPTPError, MemoryError):
    pass


class TruncationBreach(QuadCPTPError):
    """Population leaked into the top Fock levels beyond the allowed threshold."""

    def __init__(self, leak, time):
        self.leak = float(leak)
        self.time = float(time)
        super().__init__(f"top-level occupation {self.leak:.3e} at t={self.time:g}")


class NonUniformTemperature(QuadCPTPError):
    pass

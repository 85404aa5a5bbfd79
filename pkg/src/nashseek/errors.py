"""Exception hierarchy.

Every error carries a ``category`` string that the CLI maps onto an exit code.
"""

from __future__ import annotations


class NashSeekError(Exception):
    category = "error"


class ValidationError(NashSeekError, ValueError):
    """Input data or configuration does not satisfy a precondition."""

    category = "validation"


class AssumptionViolation(ValidationError):
    """A graph or game fails one of the standing assumptions.

    ``assumption`` is the assumption number (1 to 5) so callers can report
    exactly which hypothesis failed.
    """

    STATEMENTS = {
        1: "each cost is strictly convex in the player's own decision",
        2: "the pseudogradient is strongly monotone and Lipschitz",
        3: "the extended pseudogradient is Lipschitz",
        4: "the digraph is strongly connected",
        5: "the digraph is weight-balanced",
    }

    def __init__(self, assumption: int, detail: str = ""):
        self.assumption = assumption
        msg = f"Assumption {assumption} violated ({self.STATEMENTS[assumption]})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NumericalError(NashSeekError, ArithmeticError):
    category = "numerical"


class DegenerateEstimate(NumericalError):
    """An agent's own eigenvector estimate dropped below the positivity floor.

    The continuous-time estimator keeps these entries positive; hitting the
    floor means the step size is too large for the graph weights.
    """


class NonFiniteState(NumericalError):
    pass


class CertificateViolated(NumericalError):
    def __init__(self, time: float, value: float, bound: float):
        self.time = time
        self.value = value
        self.bound = bound
        super().__init__(
            f"Lyapunov envelope violated at t={time:.6g}: V={value:.6e} > {bound:.6e}"
        )


class InsufficientData(NumericalError):
    pass

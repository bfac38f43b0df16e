"""Exception hierarchy shared by all modules.

Exit-code mapping in the CLI: BudgetExceeded -> 2, PropertyViolation -> 3,
OSError -> 4.  ContractViolation signals a caller bug (bad shapes, broken
preconditions) and is never caught internally.
"""


class ContractViolation(ValueError):
    """A call broke an interface contract (dimension mismatch, bad residue, ...)."""


class BudgetExceeded(RuntimeError):
    """An exact enumeration would exceed its configured budget.

    Carries the budget that was in force and the budget that would have been
    needed, so a refusal can tell the caller exactly what to raise it to.
    """

    def __init__(self, what: str, required: int, budget: int):
        self.what = what
        self.required = required
        self.budget = budget
        super().__init__(
            f"{what}: needs budget {required}, configured budget is {budget}"
        )


class PropertyViolation(RuntimeError):
    """A verified invariant or measured property failed."""


class PiecingRefused(PropertyViolation):
    """Piecing was refused because the measured test pass probability is below
    the requested threshold."""

    def __init__(self, pass_probability, threshold):
        self.pass_probability = pass_probability
        self.threshold = threshold
        super().__init__(
            f"measured pass probability {pass_probability} below threshold {threshold}"
        )

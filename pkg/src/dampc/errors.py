"""Exception types shared across the package.

Process exit codes (see cli.py): infeasible/falsified conditions map to 2,
numerical failures to 3, configuration problems to 4.
"""


class DampcError(Exception):
    """Base class for all package errors."""


class ConfigError(DampcError):
    """Configuration file invalid or inconsistent (exit code 4)."""


class EmptySetError(DampcError):
    """A polytope required to be nonempty is empty."""


class UnboundedSetError(DampcError):
    """A polytope required to be bounded is unbounded in some direction."""


class FalsifiedError(DampcError):
    """Observed data is inconsistent with the model class: the parameter set
    intersected with the non-falsified set is empty.  Carries ``trace`` when
    raised from a closed-loop run."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class InfeasibleStartError(DampcError):
    """The MPC problem is infeasible at the initial state (exit code 2)."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class InfeasibleRunError(DampcError):
    """The MPC problem became infeasible after a feasible start.  Recursive
    feasibility rules this out in exact arithmetic, so this signals either a
    numerical problem or a violated assumption."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class NumericalFailureError(DampcError):
    """An iterative routine exhausted its budget or broke down (exit code 3)."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class NoTerminalSetError(DampcError):
    """No terminal scaling factor satisfies the invariance conditions."""


class GainVerificationError(DampcError):
    """The prestabilizing gain fails the spectral-radius check.  Carries the
    ``report`` with the worst case found."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report

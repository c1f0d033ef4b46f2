"""Exception types raised by the cabledyn library."""


class CabledynError(Exception):
    """Base class for all library-specific failures."""


class SingularInertiaError(CabledynError):
    """Mass matrix factorization failed; the parameter set is degenerate."""


class StepFailureError(CabledynError):
    """The adaptive integrator could not take a step (stiffness or singularity)."""


class IkConvergenceError(CabledynError):
    """Inverse kinematics exhausted its iteration budget.

    Carries the best iterate found and its residual so callers can decide
    whether the partial answer is still usable.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class EquilibriumConvergenceError(CabledynError):
    """Newton iteration for a steady-state shape did not converge."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class BranchLossError(CabledynError):
    """Equilibrium continuation lost its branch at some base angle."""

    def __init__(self, message, last_good_phi=None):
        super().__init__(message)
        self.last_good_phi = last_good_phi


class RankDeficiencyError(CabledynError):
    """Identification regressor lacks column rank (insufficient excitation)."""


class NonPhysicalParameterError(CabledynError):
    """Identification produced a parameter with an impossible sign."""


class DegenerateDataError(CabledynError):
    """Input data carries no information for the requested identification."""


class UnreachablePoseError(CabledynError):
    """Requested end-effector pose lies outside the arm's workspace."""


class EmptyFeasibleSetError(CabledynError):
    """Planning feasible set contains no admissible base pose."""

"""Exception hierarchy for mcflow.

Every failure raised by the library derives from McflowError so callers
(the CLI, the MCP server) can map them to exit codes and responses.
"""


class McflowError(Exception):
    """Base exception for mcflow errors."""

    pass


# Geometry


class PointTooDeep(McflowError):
    """Point lies at distance >= R/2 from the boundary; projection may not be unique."""

    pass


class OutsideDomain(McflowError):
    """Point lies outside the closed domain."""

    pass


# Grid functions and fields


class NonFiniteInput(McflowError):
    """NaN or infinite value where a finite one is required."""

    pass


class GridMismatch(McflowError):
    """Two grid functions live on different grids."""

    pass


# Kernels


class TimeOrderViolation(McflowError):
    """Kernel evaluated at t >= s."""

    pass


# Solver


class CflViolation(McflowError):
    """Explicit time step exceeds the parabolic stability limit."""

    pass


class PicardDivergence(McflowError):
    """Picard iteration did not contract within the iteration budget."""

    pass


class LinearSolveFailure(McflowError):
    """Implicit linear system could not be solved to tolerance."""

    pass


class BlowupDetected(McflowError):
    """Gradient exceeded the configured ceiling.

    run() records this as a terminal state on the trajectory; it is raised
    only when the caller asks for strict behaviour.
    """

    def __init__(self, time: float, sup_gradient: float):
        self.time = time
        self.sup_gradient = sup_gradient
        super().__init__(f"sup|du| = {sup_gradient:.6g} exceeded ceiling at t = {time:.6g}")


# Diagnostics


class EmptyInterval(McflowError):
    """Time interval contains fewer than two snapshots."""

    pass


class PoleNotCovered(McflowError):
    """Trajectory has no snapshot before the kernel's terminal time."""

    pass


class InsufficientSnapshots(McflowError):
    """Fewer snapshots than a temporal difference needs."""

    pass


class DegenerateSample(McflowError):
    """Coincident space-time pair in a Hölder quotient."""

    pass


# Self-similar family


class TimeAtSingularity(McflowError):
    """Self-similar fields requested at t >= 1."""

    pass


# Configuration


class ConfigInvalid(McflowError):
    """Run configuration failed validation."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)

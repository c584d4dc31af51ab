"""Exception types shared across the planner."""


class NeedleSteerError(Exception):
    """Base class for all needlesteer errors."""


class OutOfWorkspaceError(NeedleSteerError):
    """A queried point lies outside the voxel grid."""


class EnvironmentFormatError(NeedleSteerError):
    """Malformed environment manifest or blob."""


class UnsatisfiableSpecError(NeedleSteerError):
    """Scenario generation exhausted its retry budget."""


class InstanceTooLargeError(NeedleSteerError):
    """Brute-force enumeration would exceed the node guard."""


class InvalidStartError(NeedleSteerError):
    """Start pose is in collision or outside the workspace."""

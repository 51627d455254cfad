"""Exception types shared across the package.

Argument errors raise plain ValueError; state errors raise RuntimeError.
The two classes here exist so the CLI can map failures to exit codes
(data/format -> 3, infeasible target -> 4) without string matching.
"""


class DataFormatError(ValueError):
    """A file or serialized artifact is malformed (truncated, inconsistent,
    wrong magic/version)."""


class InfeasibleTargetError(RuntimeError):
    """A requested recall target cannot be attained by any evaluated
    configuration (empty feasible set)."""

"""Exception hierarchy for the tensecell package.

Every error raised by the library derives from TensecellError so callers
(CLI, service) can map failures to exit codes / structured responses.
"""


class TensecellError(Exception):
    """Base class for all tensecell errors."""

    code = "error"


class UsageError(TensecellError):
    """Caller violated an interface contract (bad arguments, bad script)."""

    code = "usage"


class DegenerateGeometryError(TensecellError):
    """Nodes violate the general-position requirement."""

    code = "degenerate-geometry"

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class DegenerateMemberError(TensecellError):
    """A member has coincident endpoints."""

    code = "degenerate-member"


class MechanismRiskError(TensecellError):
    """Cell attachment would leave the structure with finite mechanisms."""

    code = "mechanism-risk"


class CannotFuseError(TensecellError):
    """A member slated for removal carries no cancellable self-stress."""

    code = "cannot-fuse"


class NumericDegeneracyError(TensecellError):
    """Basis update produced a rank-deficient result."""

    code = "numeric-degeneracy"


class IncompleteBasisError(TensecellError):
    """Virtual-cell search exhausted its budget before completing the basis."""

    code = "incomplete-basis"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AmbiguousTypologyError(TensecellError):
    """A stress combination has near-zero entries so roles are undecidable."""

    code = "ambiguous-typology"

    def __init__(self, message, members=()):
        super().__init__(message)
        self.members = tuple(members)


class NoSolutionFoundError(TensecellError):
    """Constraint solver did not converge within its iteration budget."""

    code = "no-solution-found"

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = tuple(residuals)


class ScriptError(TensecellError):
    """Script parsing or execution failed."""

    code = "script"

    def __init__(self, message, line=None, step_index=None, partial=None):
        super().__init__(message)
        self.line = line
        self.step_index = step_index
        self.partial = partial


class InvariantViolation(TensecellError):
    """A structure failed its invariant audit."""

    code = "invariant-violation"

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)

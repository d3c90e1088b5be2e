"""Exception hierarchy shared across the package."""


class RefugiaError(Exception):
    """Base class for all errors raised by refugia."""


class DegenerateGrid(RefugiaError):
    """Grid has too few cells or nonpositive extent."""


class RefugeTouchesBoundary(RefugiaError):
    """Refuge closure is not strictly inside the habitat (margin <= 2h)."""


class NonPositiveAttackRate(RefugiaError):
    """Attack rate b must be strictly positive."""


class RegionMismatch(RefugiaError):
    """A field's region or length disagrees with the geometry."""


class NegativePrey(RefugiaError):
    """Prey density fell below the negativity tolerance (-1e-12)."""


class LinearSolveFailure(RefugiaError):
    """An inner linear solve did not reach its tolerance."""


class StepRejected(RefugiaError):
    """A time step produced values below -1e-8; the step size is too large."""


class SingularJacobian(RefugiaError):
    """Newton's linear solve failed; expected exactly at the bifurcation point."""


class NoConvergence(RefugiaError):
    """Newton iteration exhausted its budget without meeting the tolerance."""


class EigenNoConvergence(RefugiaError):
    """No eigenpair reached the residual contract within the iteration cap."""


class NoCrossing(RefugiaError):
    """The leading eigenvalue does not change sign over the scanned range."""


class FellBackToSemitrivial(RefugiaError):
    """Branch-switch corrector collapsed onto the semitrivial solution."""


class ContinuationStalled(RefugiaError):
    """Corrector kept failing after the step size was reduced to its floor."""


class EmptyBranchList(RefugiaError):
    """Plot emission refused: nothing to draw."""


class OutputDirLocked(RefugiaError):
    """Another run owns the output directory (lock file present)."""


class ConfigError(RefugiaError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """Config text could not be parsed; carries (line, message) pairs."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"line {ln}: {msg}" for ln, msg in self.issues))


class ValidationError(ConfigError):
    """Config parsed but violates the schema; carries (line, message) pairs."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"line {ln}: {msg}" for ln, msg in self.issues))

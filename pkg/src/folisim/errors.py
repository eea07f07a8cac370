"""Exception types shared across the package."""


class FolisimError(Exception):
    """Base class for all package errors."""


class ChartMismatch(FolisimError):
    """Point presented in a chart the operation does not accept."""


class ChartExit(FolisimError):
    """Trajectory left the valid domain of its chart."""


class StepUnderflow(FolisimError):
    """Step control shrank below the minimum step near the singular set."""

    def __init__(self, msg, time=None):
        super().__init__(msg)
        self.time = time


class NoConvergence(FolisimError):
    """Iterative solver exhausted its iteration cap."""


class SingularJacobian(FolisimError):
    """Jacobian (numerically) singular where invertibility is required."""


class DegenerateLine(FolisimError):
    """Tangency root count unstable across resampled lines."""


class NonPositiveInput(FolisimError):
    """Argument must be strictly positive."""


class AtSingularity(FolisimError):
    """Operation requires a regular point."""


class NotTangent(FolisimError):
    """Vector is not tangent to the leaf within tolerance."""


class OutOfRange(FolisimError):
    """Time or index outside the sampled range."""


class InsufficientPaths(FolisimError):
    """Ensemble too small for the requested statistic."""


class BinningMismatch(FolisimError):
    """Histograms built over different binnings."""


class DomainExit(FolisimError):
    """Reference sampler left its model domain."""


class SectionExit(FolisimError):
    """Transported point left the transverse section bound."""


class SmallnessViolated(FolisimError):
    """Projection smallness condition failed."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class HypothesisViolation(FolisimError):
    """Input sequence violates the hypotheses of a cocycle lemma."""


class Divergence(FolisimError):
    """Series truncation criterion never met."""


class StencilExit(FolisimError):
    """Finite-difference stencil left the flow-box chart."""


class DegenerateFrame(FolisimError):
    """Frame field too small to normalize."""


class OutOfRadius(FolisimError):
    """Solver output left the certified radius."""


class SchemaError(FolisimError):
    """Run configuration failed schema validation."""

"""Exception hierarchy shared by all invariant routes."""


class ChernError(Exception):
    """Base class for domain errors raised by tbchern."""


class SizeError(ChernError, ValueError):
    pass


class ConsistencyError(ChernError):
    """An internal numerical consistency check failed (hermiticity, residues)."""


class DiagonalizationError(ChernError):
    pass


class DegeneracyError(ChernError):
    """The targeted subspace is ill-defined (eigenvalue sits on the selection boundary)."""


class GapClosedError(ChernError):
    def __init__(self, theta, gap):
        self.theta = tuple(float(t) for t in theta)
        self.gap = float(gap)
        super().__init__(f"spectral gap {gap:.3e} closed at twist {self.theta}")


class ResolutionError(ChernError):
    """Twist grid too coarse for the link-variable discretization."""


class QuasiUnitarityError(ChernError):
    """Projected position unitaries are too far from unitary (gap or localization problem)."""


class BranchError(ChernError):
    """Matrix-log eigenphase too close to the branch cut at pi."""


class ConfigError(ChernError, ValueError):
    pass

"""Exception types shared across the package."""


class GapsError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GapsError):
    """An argument's shape is inconsistent with the system dimensions."""


class NonConvergence(GapsError):
    """An iterative solver hit its iteration cap before converging."""


class SingularMatrix(GapsError):
    """A matrix that must be inverted is singular (pivot below threshold)."""


class StateBlowup(GapsError):
    """A rollout state norm exceeded the instability cap."""

    def __init__(self, t: int, norm: float, cap: float):
        super().__init__(f"state norm {norm:.3e} exceeded cap {cap:.3e} at step {t}")
        self.t = t
        self.norm = norm
        self.cap = cap


class NonFiniteGradient(GapsError):
    """A gradient contained NaN or Inf, signalling upstream blow-up."""


class ZeroProbabilitySampled(GapsError):
    """An arm with zero probability was reported as sampled (defensive)."""


class Divergence(GapsError):
    """A perturbation rollout grew instead of contracting."""


class EmptyGrid(GapsError):
    """A regret computation was given an empty parameter grid."""


class NonPositiveRegret(GapsError):
    """Slope fitting requires strictly positive regret values."""


class ConfigError(GapsError):
    """An experiment configuration is malformed or has unknown keys."""

"""Exception hierarchy shared across the package."""


class RmcflabError(Exception):
    """Base class for all package errors."""


class GridError(RmcflabError):
    """Parameter grid is too small, odd, or mismatched."""


class GeometryError(RmcflabError):
    """Degenerate or inconsistent discrete surface."""


class GraphError(RmcflabError):
    """Normal graph leaves the tubular neighbourhood of its base."""


class GapError(RmcflabError):
    """Requested spectral splitting lacks the needed eigenvalue gap."""


class IllPosedError(RmcflabError):
    """Backward-in-time semigroup applied outside a finite unstable block."""


class StiffnessError(RmcflabError):
    """Step-size control underflow during time integration."""


class ContractionError(RmcflabError):
    """Picard iteration for a Lyapunov-Perron operator failed to contract."""


class HorizonError(RmcflabError):
    """Trajectory horizon too short for the requested tail tolerance."""


class RefinementError(RmcflabError):
    """Newton refinement of a shrinker guess diverged or stalled."""


class ShootingError(RmcflabError):
    """No sign change found when bracketing the profile shooting parameter."""


class CompositionError(RmcflabError):
    """Normal projection failed while composing stacked graphs."""


class ConfigError(RmcflabError):
    """Malformed configuration file or command line."""

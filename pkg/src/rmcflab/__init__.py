"""rmcflab: numerics for rescaled mean curvature flow near closed shrinkers."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    GraphFunction,
    ShrinkerGeometry,
    build_circle,
    build_sphere_profile,
    f_functional,
    gaussian_inner,
    gaussian_norm,
    geometric_quantities,
    graph_quantities,
    graph_surface,
)

"""Obstacle-constrained distance functions: solvers, oracles, singularities and regularity probes."""

__version__ = "0.1.0"

from .eikonal import DistanceField, Grid, solve, solve_anisotropic_graph, solve_isotropic_fmm
from .errors import OdlabError
from .scene import MetricField, Scene, crescent_scene, disk_scene, free_scene, load_scene

__all__ = [
    "DistanceField",
    "Grid",
    "MetricField",
    "OdlabError",
    "Scene",
    "crescent_scene",
    "disk_scene",
    "free_scene",
    "load_scene",
    "solve",
    "solve_anisotropic_graph",
    "solve_isotropic_fmm",
]

"""Quasi-static draping and untangling of layered garment meshes on a rigged body."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    LayerDrapeError,
    MeshError,
    ObjParseError,
    RigError,
    SolverDivergence,
    ValidationError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "LayerDrapeError",
    "MeshError",
    "ObjParseError",
    "RigError",
    "SolverDivergence",
    "ValidationError",
    "TriangleMesh",
    "load_obj",
    "save_obj",
]

_MESH_EXPORTS = {"TriangleMesh", "load_obj", "save_obj"}


def __getattr__(name):
    # mesh pulls in numpy; deferred so the CLI can pin the BLAS thread env
    # vars before any numeric library initializes its pools
    if name in _MESH_EXPORTS:
        from . import mesh

        return getattr(mesh, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

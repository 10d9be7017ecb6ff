"""Exception types and the process exit codes they map to."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_VALIDATION = 5


class LayerDrapeError(Exception):
    """Base class for errors raised by this package."""


class MeshError(LayerDrapeError):
    """A mesh violates a structural invariant (bad index, degenerate or duplicate face)."""


class ObjParseError(MeshError):
    """A Wavefront OBJ record could not be parsed."""


class RigError(LayerDrapeError):
    """A rigged body or skinning weight set violates its invariants."""


class ConfigError(LayerDrapeError):
    """A pipeline configuration is malformed or self-inconsistent."""


class ValidationError(LayerDrapeError):
    """A runtime check failed (gradient tolerance, report consistency)."""


class SolverDivergence(LayerDrapeError):
    """The objective became non-finite during optimization.

    Carries a diagnostics dict (phase, stage, iteration, last finite term
    values) so the failure can be reported without re-running.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

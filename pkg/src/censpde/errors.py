"""Exception types shared across the package."""


class CenspdeError(Exception):
    """Base class for all censpde errors."""


class DegenerateInputError(CenspdeError):
    """Fewer than 3 distinct points, or all points collinear."""


class MeshError(CenspdeError):
    """Mesh construction or validation failed."""


class OutsideMeshError(CenspdeError):
    """One or more query locations fall outside the mesh."""

    def __init__(self, indices, message=None):
        self.indices = list(indices)
        if message is None:
            shown = ", ".join(str(i) for i in self.indices[:10])
            more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
            message = (
                f"{len(self.indices)} location(s) outside the mesh: indices [{shown}]{more}; "
                "rebuild the mesh with a larger boundary_extension"
            )
        super().__init__(message)


class AssemblyError(CenspdeError):
    """Finite-element assembly failed (e.g. zero-area triangle)."""


class NumericalError(CenspdeError):
    """A numerical operation failed (e.g. Cholesky of an indefinite matrix)."""


class DataError(CenspdeError):
    """Input data violates the dataset contract."""


class ConfigError(CenspdeError):
    """Invalid run configuration."""

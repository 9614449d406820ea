"""Helmholtz scattering from locally perturbed periodic surfaces.

The solver rewrites the scattering problem on a perturbed periodic
half-plane as a coupled family of quasiperiodic cell problems via the
Floquet-Bloch transform, discretizes each cell problem with piecewise
linear finite elements and a transparent boundary condition at an
artificial top line, and solves the resulting block linear system with
block-ILU preconditioned GMRES.
"""

__version__ = "0.1.0"

from .specfun import WaveParams, branch_sqrt, mode_wavenumber, hankel1_0, sinc_complex
from .geometry import SurfaceProfile, PerturbationProfile, Geometry, builtin_geometry
from .mesh import CellMesh, QuadratureRule, generate_cell_mesh, reference_quadrature
from .bloch import BlochGrid, IncidentSource, incident_field

__all__ = [
    "WaveParams",
    "branch_sqrt",
    "mode_wavenumber",
    "hankel1_0",
    "sinc_complex",
    "SurfaceProfile",
    "PerturbationProfile",
    "Geometry",
    "builtin_geometry",
    "CellMesh",
    "QuadratureRule",
    "generate_cell_mesh",
    "reference_quadrature",
    "BlochGrid",
    "IncidentSource",
    "incident_field",
]

"""Delaunay meshes, Voronoi control volumes and finite volume operators."""

from .delaunay import delaunay_violations, min_angles, triangulate
from .mesh import TriMesh, build_mesh, convex_hull, random_mesh, read_mesh, rectangle, write_mesh
from .operators import (
    CanonicalForm,
    FaceStencil,
    FvmConstants,
    FvmScheme,
    NormalVelocity,
    build_fvm_scheme,
    check_fvm_monotone,
    face_peclet,
    friedrichs_constant,
    fvm_constants,
    fvm_convection,
    fvm_diffusion,
    fvm_divergence,
    fvm_upwind_adjoint,
    fvm_upwind_convection,
    green_function,
    laplace_form,
    normal_velocity,
    solve_fvm,
    split_velocity,
)

__all__ = [name for name in dir() if not name.startswith("_")]

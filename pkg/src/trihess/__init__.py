"""Derivative recovery on 2D triangular meshes.

Gradient recovery by local least-squares polynomial fitting, second
derivatives by composing the gradient operator with itself, three
comparison recoveries, and a convergence-study harness with a CLI.
"""

from ._kernel import BACKEND as KERNEL_BACKEND
from .experiments import (SOLUTIONS, ExactSolution, StudyConfig, StudyError,
                          StudyReport, dof_order, emit_report, h_order,
                          parse_csv_report, run_fem_study,
                          run_interpolation_study, run_study)
from .fem import (QUADRATURE, Coefficients, FEMError, FESpace, Field,
                  assemble, field_to_csv, interpolate, l2_error_region,
                  max_error_nodes, ref_basis, solve_dirichlet)
from .mesh import (PATTERNS, InteriorRegion, MeshError, MeshFormatError,
                   Patch, Triangulation, boundary_distances, build_patch,
                   classify_dofs, delaunay_triangulate, dof_coordinates,
                   element_dof_table, generate_uniform, import_mesh,
                   interior_region, load_mesh, refine_uniform,
                   smoothed_refine)
from .polyfit import (PolyFit, RankDeficientError, design_matrix,
                      fit_polynomial, monomial_powers, poly_dim)
from .recovery import (COMPONENTS, METHODS, RecoveryError, Stencil,
                       extract_stencil, hessian_matrices, normalize_method,
                       ppr_gradient, ppr_hessian, recover_hessian,
                       verify_exactness_degree, zz_gradient)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "SOLUTIONS", "ExactSolution", "StudyConfig", "StudyError", "StudyReport",
    "dof_order", "emit_report", "h_order", "parse_csv_report",
    "run_fem_study", "run_interpolation_study", "run_study",
    "QUADRATURE", "Coefficients", "FEMError", "FESpace", "Field",
    "assemble", "field_to_csv", "interpolate", "l2_error_region",
    "max_error_nodes", "ref_basis", "solve_dirichlet",
    "PATTERNS", "InteriorRegion", "MeshError", "MeshFormatError", "Patch",
    "Triangulation", "boundary_distances", "build_patch", "classify_dofs",
    "delaunay_triangulate", "dof_coordinates", "element_dof_table",
    "generate_uniform", "import_mesh", "interior_region", "load_mesh",
    "refine_uniform", "smoothed_refine",
    "PolyFit", "RankDeficientError", "design_matrix", "fit_polynomial",
    "monomial_powers", "poly_dim",
    "COMPONENTS", "METHODS", "RecoveryError", "Stencil", "extract_stencil",
    "hessian_matrices", "normalize_method", "ppr_gradient", "ppr_hessian",
    "recover_hessian", "verify_exactness_degree", "zz_gradient",
    "__version__",
]

"""Lagrange P1/P2 elements on triangles: interpolation, assembly of
B(u,v) = int (D grad u + b u) . grad v + c u v, Dirichlet solves, and the
quadrature-based error norms used by the convergence studies.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import mesh as meshmod

RESIDUAL_TOL = 1e-10


class FEMError(ValueError):
    pass


def _quad_degree5():
    # 7-point symmetric rule, exact to degree 5; weights sum to 1
    a1 = (6.0 + np.sqrt(15.0)) / 21.0
    a2 = (6.0 - np.sqrt(15.0)) / 21.0
    w1 = (155.0 + np.sqrt(15.0)) / 1200.0
    w2 = (155.0 - np.sqrt(15.0)) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        c = 1.0 - 2.0 * a
        pts += [(c, a, a), (a, c, a), (a, a, c)]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


def _quad_degree6():
    # 12-point symmetric rule, exact to degree 6; weights sum to 1
    pts, wts = [], []
    for a, b, w in ((0.873821971016996, 0.063089014491502, 0.050844906370207),
                    (0.501426509658179, 0.249286745170910, 0.116786275726379)):
        pts += [(a, b, b), (b, a, b), (b, b, a)]
        wts += [w, w, w]
    a, b, c = 0.636502499121399, 0.310352451033785, 0.053145049844816
    w = 0.082851075618374
    pts += [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    wts += [w] * 6
    return np.array(pts), np.array(wts)


QUADRATURE = {5: _quad_degree5(), 6: _quad_degree6()}


def ref_basis(k, bary):
    """Shape functions and reference gradients at barycentric points.

    Local DOF order: vertices 0,1,2 then for k=2 the midpoints of sides
    (0,1), (1,2), (2,0).  Reference coordinates are (xi, eta) = (l1, l2).
    """
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if k == 1:
        N = np.stack([l0, l1, l2], axis=1)
        dN = np.broadcast_to(dl, (len(bary), 3, 2)).copy()
        return N, dN
    if k == 2:
        lam = np.stack([l0, l1, l2], axis=1)
        N = np.empty((len(bary), 6))
        dN = np.empty((len(bary), 6, 2))
        for i in range(3):
            N[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            dN[:, i, :] = (4.0 * lam[:, i, None] - 1.0) * dl[i]
        for e, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            N[:, 3 + e] = 4.0 * lam[:, i] * lam[:, j]
            dN[:, 3 + e, :] = 4.0 * (lam[:, i, None] * dl[j] + lam[:, j, None] * dl[i])
        return N, dN
    raise FEMError(f"element order {k} not supported")


class FESpace:
    """Lagrange space of order k in {1, 2} on a Triangulation.

    DOF layout: mesh vertices first, then one midpoint per mesh edge (k=2).
    """

    def __init__(self, mesh, k):
        if k not in (1, 2):
            raise FEMError("element order must be 1 or 2")
        self.mesh = mesh
        self.k = k
        self.dof_coords = meshmod.dof_coordinates(mesh, k)
        self.dof_count = len(self.dof_coords)
        self.elem_dofs = meshmod.element_dof_table(mesh, k)
        self.quad_degree = 5 if k == 1 else 6
        self._cache = {}

    @property
    def boundary_dof_mask(self):
        mask = self._cache.get("boundary_dof_mask")
        if mask is None:
            mesh = self.mesh
            mask = np.zeros(self.dof_count, dtype=bool)
            mask[:mesh.n_nodes] = mesh.boundary_node
            if self.k == 2:
                on_boundary = np.zeros(len(mesh.edges), dtype=bool)
                mesh.edges
                on_boundary[mesh._edge_counts == 1] = True
                mask[mesh.n_nodes:] = on_boundary
            self._cache["boundary_dof_mask"] = mask
        return mask

    def element_geometry(self):
        """(jac_invT, areas, p0): per-element inverse-transpose Jacobian."""
        geo = self._cache.get("geometry")
        if geo is None:
            tri = self.mesh.triangles
            p0 = self.mesh.nodes[tri[:, 0]]
            J = np.stack([self.mesh.nodes[tri[:, 1]] - p0,
                          self.mesh.nodes[tri[:, 2]] - p0], axis=2)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            inv = np.empty_like(J)
            inv[:, 0, 0] = J[:, 1, 1] / det
            inv[:, 0, 1] = -J[:, 0, 1] / det
            inv[:, 1, 0] = -J[:, 1, 0] / det
            inv[:, 1, 1] = J[:, 0, 0] / det
            geo = (np.ascontiguousarray(inv.transpose(0, 2, 1)), 0.5 * det, p0, J)
            self._cache["geometry"] = geo
        return geo


@dataclass
class Field:
    """Nodal values over an FESpace; one column per recovered component."""

    space: FESpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.values) != self.space.dof_count:
            raise FEMError("value length does not match space")
        if not np.all(np.isfinite(self.values)):
            raise FEMError("non-finite field values")

    @property
    def n_components(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]


@dataclass
class Coefficients:
    """Problem data for B(u,v) = int (D grad u + b u) . grad v + c u v - (f, v).

    Each entry is a constant (scalar, 2-vector, or 2x2 matrix) or a callable
    of coordinate arrays (x, y).  D may be a scalar d, meaning d * identity;
    positive semidefinite D is accepted so a pure mass matrix can be built.
    """

    D: object = 1.0
    b: object = None
    c: object = 0.0
    f: object = 0.0


def _eval_scalar(fn, x, y):
    if fn is None:
        return np.zeros_like(x)
    if callable(fn):
        v = np.asarray(fn(x, y), dtype=np.float64)
        return np.broadcast_to(v, x.shape)
    return np.full_like(x, float(fn))


def _eval_vector(fn, x, y):
    if fn is None:
        return None
    if callable(fn):
        v = np.asarray(fn(x, y), dtype=np.float64)
    else:
        v = np.asarray(fn, dtype=np.float64)
    if v.shape == (2,):
        return np.broadcast_to(v, (len(x), 2))
    if v.shape == (len(x), 2):
        return v
    if v.shape == (2, len(x)):
        return v.T
    raise FEMError(f"cannot interpret convection term of shape {v.shape}")


def _eval_matrix(fn, x, y):
    if fn is None:
        fn = 1.0
    if callable(fn):
        v = np.asarray(fn(x, y), dtype=np.float64)
    else:
        v = np.asarray(fn, dtype=np.float64)
    n = len(x)
    if v.ndim == 0:
        out = np.zeros((n, 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = float(v)
        return out
    if v.shape == (n,):
        out = np.zeros((n, 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = v
        return out
    if v.shape == (2, 2):
        return np.broadcast_to(v, (n, 2, 2))
    if v.shape == (n, 2, 2):
        return v
    raise FEMError(f"cannot interpret diffusion term of shape {v.shape}")


def evaluate_pointwise(fn, points):
    """Evaluate fn(x, y) at rows of points, tolerating non-vectorized fn."""
    x, y = points[:, 0], points[:, 1]
    if callable(fn):
        try:
            v = np.asarray(fn(x, y), dtype=np.float64)
            if v.ndim >= 1 and v.shape[0] == len(points):
                return v
            if v.ndim == 0:
                return np.full(len(points), float(v))
        except (TypeError, ValueError):
            pass
        return np.array([fn(px, py) for px, py in points], dtype=np.float64)
    return np.full(len(points), float(fn))


def interpolate(space, u):
    """Nodal interpolant: values[i] = u(dof_coords[i])."""
    vals = evaluate_pointwise(u, space.dof_coords)
    if not np.all(np.isfinite(vals)):
        raise FEMError("interpolated function is non-finite at a DOF node")
    return Field(space, vals)


def _check_spd(D, where):
    asym = np.abs(D[:, 0, 1] - D[:, 1, 0])
    scale = np.abs(D).max(axis=(1, 2)) + 1e-300
    if np.any(asym > 1e-12 * np.maximum(scale, 1.0)):
        raise FEMError(f"diffusion matrix not symmetric at quadrature point ({where})")
    det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
    tol = -1e-12 * np.maximum(scale, 1.0) ** 2
    if np.any(det < tol) or np.any(D[:, 0, 0] < -1e-12 * np.maximum(scale, 1.0)):
        raise FEMError(f"diffusion matrix not positive semidefinite ({where})")


def assemble(space, coeffs):
    """Galerkin matrix A[i, j] = B(phi_j, phi_i) and load vector F."""
    mesh = space.mesh
    bary, wts = QUADRATURE[space.quad_degree]
    N, dN = ref_basis(space.k, bary)
    invJT, areas, p0, J = space.element_geometry()
    nloc = space.elem_dofs.shape[1]
    nt = mesh.n_triangles

    Kloc = np.zeros((nt, nloc, nloc))
    Floc = np.zeros((nt, nloc))
    for q in range(len(wts)):
        xi, eta = bary[q, 1], bary[q, 2]
        xq = p0 + J[:, :, 0] * xi + J[:, :, 1] * eta
        x, y = xq[:, 0], xq[:, 1]
        grad = np.einsum("tde,ie->tid", invJT, dN[q])
        Dq = _eval_matrix(coeffs.D, x, y)
        _check_spd(Dq, f"quad point {q}")
        scale = (wts[q] * areas)[:, None, None]
        Kloc += scale * np.einsum("tde,tje,tid->tij", Dq, grad, grad)
        bq = _eval_vector(coeffs.b, x, y)
        if bq is not None:
            Kloc += scale * np.einsum("td,j,tid->tij", bq, N[q], grad)
        cq = _eval_scalar(coeffs.c, x, y) if coeffs.c is not None else None
        if cq is not None and (callable(coeffs.c) or float(np.max(np.abs(cq))) != 0.0):
            Kloc += scale * cq[:, None, None] * np.outer(N[q], N[q])
        fq = _eval_scalar(coeffs.f, x, y) if coeffs.f is not None else None
        if fq is not None and (callable(coeffs.f) or float(np.max(np.abs(fq))) != 0.0):
            Floc += (wts[q] * areas * fq)[:, None] * N[q]

    rows = np.repeat(space.elem_dofs, nloc, axis=1).ravel()
    cols = np.tile(space.elem_dofs, (1, nloc)).ravel()
    A = sp.coo_matrix((Kloc.ravel(), (rows, cols)),
                      shape=(space.dof_count, space.dof_count)).tocsr()
    F = np.zeros(space.dof_count)
    np.add.at(F, space.elem_dofs.ravel(), Floc.ravel())
    return A, F


def solve_dirichlet(space, coeffs, g):
    """Solve B(u_h, v) = (f, v) with u_h = g on the boundary DOFs.

    Constraints are eliminated symmetrically: boundary columns move to the
    right-hand side and boundary rows are replaced by identity.
    """
    A, F = assemble(space, coeffs)
    fixed = space.boundary_dof_mask
    free = ~fixed
    gvals = evaluate_pointwise(g, space.dof_coords[fixed])
    u = np.zeros(space.dof_count)
    u[fixed] = gvals

    Aff = A[free][:, free].tocsc()
    rhs = F[free] - A[free][:, fixed] @ gvals
    uf = spsolve(Aff, rhs)
    if not np.all(np.isfinite(uf)):
        raise FEMError("linear solver produced non-finite values")
    denom = max(np.linalg.norm(rhs), np.linalg.norm(F), 1e-300)
    residual = np.linalg.norm(Aff @ uf - rhs) / denom
    if residual > RESIDUAL_TOL:
        raise FEMError(f"constrained solve residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")
    u[free] = uf
    return Field(space, u)


def _as_components(values):
    return values[:, None] if values.ndim == 1 else values


def l2_error_region(recovered, exact, region):
    """L2 norm of (recovered - exact) over the interior elements, Frobenius
    across components; recovered is a Field, exact a callable of (x, y)."""
    if len(region.interior_elements) == 0:
        raise FEMError("interior region is empty")
    space = recovered.space
    bary, wts = QUADRATURE[space.quad_degree]
    N, _ = ref_basis(space.k, bary)
    _, areas, p0, J = space.element_geometry()
    sel = region.interior_elements
    vals = _as_components(recovered.values)
    dofs = space.elem_dofs[sel]

    total = 0.0
    for q in range(len(wts)):
        xi, eta = bary[q, 1], bary[q, 2]
        xq = p0[sel] + J[sel][:, :, 0] * xi + J[sel][:, :, 1] * eta
        num = np.einsum("i,tic->tc", N[q], vals[dofs])
        ex = np.asarray(exact(xq[:, 0], xq[:, 1]), dtype=np.float64)
        ex = _as_components(ex) if ex.ndim <= 2 else ex
        diff = num - ex
        total += np.sum(wts[q] * areas[sel] * np.sum(diff * diff, axis=1))
    return float(np.sqrt(total))


def max_error_nodes(recovered, exact, nodes):
    """Max over the given DOF nodes of the max-abs component difference."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise FEMError("empty node set")
    pts = recovered.space.dof_coords[nodes]
    num = _as_components(recovered.values)[nodes]
    ex = np.asarray(exact(pts[:, 0], pts[:, 1]), dtype=np.float64)
    ex = _as_components(ex)
    return float(np.max(np.abs(num - ex)))


def field_to_csv(field):
    """Solution export: one `dof_index,x,y,value` row per scalar DOF."""
    if field.values.ndim != 1:
        raise FEMError("CSV export covers scalar fields")
    lines = ["dof_index,x,y,value"]
    for i, ((x, y), v) in enumerate(zip(field.space.dof_coords, field.values)):
        lines.append(f"{i},{x:.17g},{y:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"

"""Gradient recovery by local polynomial fitting, the composed Hessian
recovery, and the weighted-average and quadratic-fit comparison methods.

All recoveries are linear in the nodal values, so each one is materialized
as a sparse operator matrix per (mesh, order); applying a recovery is a
matvec and extracting a finite-difference stencil is reading a matrix row.

Hessian fields carry 4 components ordered (xx, xy, yx, yy), where xy means
the y-derivative operator applied to the recovered x-derivative.  The two
mixed components are never symmetrized: on most uniform patterns they
coincide, on the chevron pattern they legitimately differ.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernel
from .fem import FESpace, Field
from .mesh import Triangulation
from .polyfit import (PolyFit, RankDeficientError, derivative_design,  # noqa: F401
                      fit_polynomial, poly_dim)

METHODS = ("ppr_ppr", "zz_zz", "zz_ppr", "qf")
COMPONENTS = ("gx", "gy", "hxx", "hxy", "hyx", "hyy")


class RecoveryError(ValueError):
    pass


def normalize_method(method):
    name = str(method).strip().lower().replace("-", "_")
    if name == "ppr":
        name = "ppr_ppr"
    if name not in METHODS:
        raise RecoveryError(f"unknown recovery method {method!r}; expected one of {METHODS}")
    return name


def _space_for(mesh_or_space, k=None):
    if isinstance(mesh_or_space, FESpace):
        return mesh_or_space
    if isinstance(mesh_or_space, Triangulation):
        cache = mesh_or_space.__dict__.setdefault("_space_cache", {})
        if k not in cache:
            cache[k] = FESpace(mesh_or_space, k)
        return cache[k]
    raise RecoveryError("expected a Triangulation or FESpace")


@dataclass
class _PatchData:
    """Output of the patch kernel for every mesh vertex."""

    members: np.ndarray
    m_indptr: np.ndarray
    pinv_flat: np.ndarray
    scales: np.ndarray
    layers: np.ndarray
    degree: int

    @property
    def dim(self):
        return poly_dim(self.degree)

    def members_of(self, v):
        return self.members[self.m_indptr[v]:self.m_indptr[v + 1]]

    def pinv_of(self, v):
        m = self.m_indptr[v + 1] - self.m_indptr[v]
        start = self.dim * self.m_indptr[v]
        return self.pinv_flat[start:start + self.dim * m].reshape(self.dim, m)


def patch_data(space):
    pd = space._cache.get("patch_data")
    if pd is None:
        mesh = space.mesh
        indptr, data = mesh.vertex_to_elements
        out = _kernel.batch_patch_pinv(mesh.nodes, mesh.triangles, indptr, data,
                                       space.dof_coords, space.elem_dofs, space.k + 1)
        pd = _PatchData(*out, degree=space.k + 1)
        space._cache["patch_data"] = pd
    return pd


def _coeff_row_indices(pd, row):
    """Flat indices of pseudo-inverse row `row` for every vertex at once."""
    sizes = np.diff(pd.m_indptr)
    starts = pd.dim * pd.m_indptr[:-1] + row * sizes
    within = np.arange(pd.m_indptr[-1]) - np.repeat(pd.m_indptr[:-1], sizes)
    return np.repeat(starts, sizes) + within


def _vertex_rows(space, pd, row, power):
    """COO triplets of pseudo-inverse row `row`, scaled by scale^-power."""
    sizes = np.diff(pd.m_indptr)
    rows = np.repeat(np.arange(len(sizes)), sizes)
    vals = pd.pinv_flat[_coeff_row_indices(pd, row)] / np.repeat(pd.scales**power, sizes)
    return rows, pd.members.copy(), vals


def ppr_operators(space):
    """Sparse (Gx, Gy): recovered-gradient components as nodal operators.

    Vertex rows read the linear coefficients of the vertex fit; edge-node
    rows (k = 2) blend the two parent-vertex fits evaluated at the node,
    each weighted by the relative distance to the opposite parent.
    """
    ops = space._cache.get("ppr_ops")
    if ops is not None:
        return ops
    pd = patch_data(space)
    mesh = space.mesh
    ndof = space.dof_count

    rows_x, cols_x, vals_x = _vertex_rows(space, pd, 1, 1)
    rows_y, cols_y, vals_y = _vertex_rows(space, pd, 2, 1)
    chunks_x = [(rows_x, cols_x, vals_x)]
    chunks_y = [(rows_y, cols_y, vals_y)]

    if space.k == 2:
        ve_indptr, ve_data = mesh.vertex_to_edges
        edges = mesh.edges
        for v in range(mesh.n_nodes):
            eids = ve_data[ve_indptr[v]:ve_indptr[v + 1]]
            if len(eids) == 0:
                continue
            other = np.where(edges[eids, 0] == v, edges[eids, 1], edges[eids, 0])
            q = space.dof_coords[mesh.n_nodes + eids]
            beta = (np.linalg.norm(q - mesh.nodes[other], axis=1)
                    / np.linalg.norm(mesh.nodes[v] - mesh.nodes[other], axis=1))
            s = pd.scales[v]
            local = (q - mesh.nodes[v]) / s
            P = pd.pinv_of(v)
            mem = pd.members_of(v)
            wx = beta[:, None] * (derivative_design(local, pd.degree, 1, 0) @ P) / s
            wy = beta[:, None] * (derivative_design(local, pd.degree, 0, 1) @ P) / s
            r = np.repeat(mesh.n_nodes + eids, len(mem))
            c = np.tile(mem, len(eids))
            chunks_x.append((r, c, wx.ravel()))
            chunks_y.append((r, c, wy.ravel()))

    def build(chunks):
        r = np.concatenate([c[0] for c in chunks])
        c = np.concatenate([c[1] for c in chunks])
        v = np.concatenate([c[2] for c in chunks])
        return sp.coo_matrix((v, (r, c)), shape=(ndof, ndof)).tocsr()

    ops = (build(chunks_x), build(chunks_y))
    space._cache["ppr_ops"] = ops
    return ops


def zz_operators(space):
    """Sparse (Zx, Zy): area-weighted average of element gradients per vertex."""
    ops = space._cache.get("zz_ops")
    if ops is not None:
        return ops
    if space.k != 1:
        raise RecoveryError("weighted-average recovery is defined for k = 1 only")
    mesh = space.mesh
    invJT, areas, _, _ = space.element_geometry()
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grad = np.einsum("tde,je->tjd", invJT, dl)
    tri = mesh.triangles

    star = np.zeros(mesh.n_nodes)
    np.add.at(star, tri.ravel(), np.repeat(areas, 3))
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    scale = sp.diags(1.0 / star)
    ops = []
    for d in range(2):
        vals = np.repeat((areas[:, None] * grad[:, :, d])[:, None, :], 3, axis=1).ravel()
        Z = sp.coo_matrix((vals, (rows, cols)), shape=(space.dof_count,) * 2).tocsr()
        ops.append((scale @ Z).tocsr())
    ops = tuple(ops)
    space._cache["zz_ops"] = ops
    return ops


def qf_operators(space):
    """Sparse (Qxx, Qxy, Qyy): second derivatives of the quadratic patch fit
    at each vertex, read off the degree-2 fit coefficients."""
    ops = space._cache.get("qf_ops")
    if ops is not None:
        return ops
    if space.k != 1:
        raise RecoveryError("quadratic-fit recovery is defined for k = 1 only")
    pd = patch_data(space)
    ndof = space.dof_count
    out = []
    for row, factor in ((3, 2.0), (4, 1.0), (5, 2.0)):
        r, c, v = _vertex_rows(space, pd, row, 2)
        out.append(sp.coo_matrix((factor * v, (r, c)), shape=(ndof, ndof)).tocsr())
    ops = tuple(out)
    space._cache["qf_ops"] = ops
    return ops


def _gradient_ops(space, method):
    if method in ("ppr_ppr", "zz_ppr"):
        return ppr_operators(space)
    if method == "zz_zz":
        return zz_operators(space)
    raise RecoveryError(f"method {method} has no gradient stage")


def _outer_ops(space, method):
    return ppr_operators(space) if method == "ppr_ppr" else zz_operators(space)


def _scalar_values(u):
    if u.values.ndim != 1:
        raise RecoveryError("recovery expects a scalar field")
    return u.values


def ppr_gradient(u):
    """Recovered gradient field, components (x, y)."""
    Gx, Gy = ppr_operators(u.space)
    v = _scalar_values(u)
    return Field(u.space, np.column_stack([Gx @ v, Gy @ v]))


def zz_gradient(u):
    """Area-weighted-average gradient field, components (x, y)."""
    Zx, Zy = zz_operators(u.space)
    v = _scalar_values(u)
    return Field(u.space, np.column_stack([Zx @ v, Zy @ v]))


def ppr_hessian(u):
    """Gradient recovery applied to each recovered-gradient component."""
    Gx, Gy = ppr_operators(u.space)
    v = _scalar_values(u)
    gx, gy = Gx @ v, Gy @ v
    return Field(u.space, np.column_stack([Gx @ gx, Gy @ gx, Gx @ gy, Gy @ gy]))


def recover_hessian(u, method="ppr_ppr"):
    """Recovered Hessian field by any of the four methods; components
    (xx, xy, yx, yy)."""
    method = normalize_method(method)
    if method == "ppr_ppr":
        return ppr_hessian(u)
    v = _scalar_values(u)
    if method == "qf":
        Qxx, Qxy, Qyy = qf_operators(u.space)
        hxy = Qxy @ v
        return Field(u.space, np.column_stack([Qxx @ v, hxy, hxy, Qyy @ v]))
    Ix, Iy = _gradient_ops(u.space, method)
    Ox, Oy = _outer_ops(u.space, method)
    gx, gy = Ix @ v, Iy @ v
    return Field(u.space, np.column_stack([Ox @ gx, Oy @ gx, Ox @ gy, Oy @ gy]))


def hessian_matrices(space, method="ppr_ppr"):
    """Explicit sparse matrices {hxx, hxy, hyx, hyy} for one method."""
    method = normalize_method(method)
    key = f"hmats_{method}"
    mats = space._cache.get(key)
    if mats is not None:
        return mats
    if method == "qf":
        Qxx, Qxy, Qyy = qf_operators(space)
        mats = {"hxx": Qxx, "hxy": Qxy, "hyx": Qxy, "hyy": Qyy}
    else:
        Ix, Iy = _gradient_ops(space, method)
        Ox, Oy = _outer_ops(space, method)
        mats = {"hxx": (Ox @ Ix).tocsr(), "hxy": (Oy @ Ix).tocsr(),
                "hyx": (Ox @ Iy).tocsr(), "hyy": (Oy @ Iy).tocsr()}
    space._cache[key] = mats
    return mats


@dataclass
class Stencil:
    """Finite-difference weights realized by a recovery operator at a node."""

    center: int
    component: str
    h_power: int
    h: float
    entries: list

    def apply(self, values):
        return float(sum(w * values[n] for n, w in self.entries))

    def weight_sum(self):
        return float(sum(w for _, w in self.entries))

    def to_json(self):
        items = ", ".join(
            f'{{"node": {n}, "weight": {w:.17g}}}' for n, w in self.entries)
        return (f'{{"center": {self.center}, "component": "{self.component}", '
                f'"h": {self.h:.17g}, "entries": [{items}]}}')

    @classmethod
    def from_json(cls, text, h_power=2):
        data = json.loads(text)
        entries = [(int(e["node"]), float(e["weight"])) for e in data["entries"]]
        return cls(center=int(data["center"]), component=str(data["component"]),
                   h_power=h_power, h=float(data["h"]), entries=entries)


def _component_matrix(space, method, component):
    if component not in COMPONENTS:
        raise RecoveryError(f"unknown component {component!r}; expected one of {COMPONENTS}")
    if component in ("gx", "gy"):
        Gx, Gy = _gradient_ops(space, method)
        return Gx if component == "gx" else Gy
    return hessian_matrices(space, method)[component]


def extract_stencil(mesh_or_space, k, method, node, component, drop_tol=1e-12):
    """Weights of the recovery operator at one DOF node, as a Stencil.

    Entries with |weight| <= drop_tol * max|weight| are dropped (sparse
    operator products leave numerically-zero residue where weights cancel
    exactly); pass drop_tol=0 to keep every stored entry.
    """
    space = _space_for(mesh_or_space, k)
    method = normalize_method(method)
    if node < 0 or node >= space.dof_count:
        raise RecoveryError(f"node {node} out of range")
    mat = _component_matrix(space, method, component)
    row = mat.getrow(node).tocoo()
    cols, vals = row.col, row.data
    if len(vals) and drop_tol > 0:
        keep = np.abs(vals) > drop_tol * np.abs(vals).max()
        cols, vals = cols[keep], vals[keep]
    order = np.argsort(cols)
    mesh = space.mesh
    h = mesh.grid_spacing if mesh.grid_spacing is not None else mesh.mesh_size_h
    return Stencil(center=int(node), component=component,
                   h_power=1 if component.startswith("g") else 2, h=float(h),
                   entries=[(int(c), float(v)) for c, v in zip(cols[order], vals[order])])


def _monomial_hessian_at_center(a, b):
    # Hessian of (x-x0)^a (y-y0)^b evaluated at (x0, y0)
    return np.array([2.0 if (a, b) == (2, 0) else 0.0,
                     1.0 if (a, b) == (1, 1) else 0.0,
                     1.0 if (a, b) == (1, 1) else 0.0,
                     2.0 if (a, b) == (0, 2) else 0.0])


def verify_exactness_degree(mesh_or_space, k, method, node, max_degree=8, tol=1e-9):
    """Largest d such that the Hessian recovery at `node` is exact for every
    monomial of total degree <= d centered there, scanning upward to failure.

    Residuals are compared at the stencil's natural h^-2 scale.
    """
    space = _space_for(mesh_or_space, k)
    method = normalize_method(method)
    mats = hessian_matrices(space, method)
    rows = {c: mats[c].getrow(node).tocoo() for c in ("hxx", "hxy", "hyx", "hyy")}
    dep = np.unique(np.concatenate([r.col for r in rows.values()]))
    col_pos = {int(c): i for i, c in enumerate(dep)}
    local = space.dof_coords[dep] - space.dof_coords[node]
    mesh = space.mesh
    h = mesh.grid_spacing if mesh.grid_spacing is not None else mesh.mesh_size_h

    best = -1
    for d in range(max_degree + 1):
        for a in range(d + 1):
            b = d - a
            u = local[:, 0] ** a * local[:, 1] ** b
            exact = _monomial_hessian_at_center(a, b)
            scale = max(1.0, np.abs(u).max() / h**2, np.abs(exact).max())
            for i, c in enumerate(("hxx", "hxy", "hyx", "hyy")):
                r = rows[c]
                got = sum(w * u[col_pos[int(cc)]] for cc, w in zip(r.col, r.data))
                if abs(got - exact[i]) > tol * scale:
                    return best
        best = d
    return best

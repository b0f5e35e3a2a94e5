"""Pure-numpy patch-fitting kernel: the fallback backend.

For every mesh vertex, grows the element patch by whole layers until the
degree-`degree` least-squares problem has full numerical rank, then stores
the pseudo-inverse of the scaled design matrix.  The compiled backend in
_ppr_core implements the identical contract.
"""

import numpy as np

from .polyfit import RANK_RTOL, RankDeficientError, monomial_powers, poly_dim


def batch_patch_pinv(nodes, triangles, vt_indptr, vt_data, dof_coords, elem_dofs, degree):
    """Per-vertex patch membership and design pseudo-inverse.

    Returns (members, m_indptr, pinv_flat, scales, layers):
      members   int64, concatenated sorted DOF ids per vertex
      m_indptr  int64 (n_vertices + 1,) offsets into members
      pinv_flat float64, concatenated (dim x m_v) pseudo-inverses, C order
      scales    float64 (n_vertices,) patch radii
      layers    int32 (n_vertices,) growth layers used
    """
    n_vertices = len(nodes)
    dim = poly_dim(degree)
    powers = monomial_powers(degree)
    px, py = powers[:, 0], powers[:, 1]

    member_chunks = []
    pinv_chunks = []
    m_indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    scales = np.zeros(n_vertices)
    layers = np.zeros(n_vertices, dtype=np.int32)

    for v in range(n_vertices):
        elems = vt_data[vt_indptr[v]:vt_indptr[v + 1]]
        layer = 1
        while True:
            mem = np.unique(elem_dofs[elems])
            if len(mem) >= dim:
                local = dof_coords[mem] - dof_coords[v]
                scale = np.sqrt((local**2).sum(axis=1).max())
                if scale == 0.0:
                    scale = 1.0
                local /= scale
                A = local[:, 0, None] ** px * local[:, 1, None] ** py
                U, S, Vt = np.linalg.svd(A, full_matrices=False)
                if S[-1] >= RANK_RTOL * S[0]:
                    pinv = (Vt.T / S) @ U.T
                    break
            verts = np.unique(triangles[elems])
            grown = np.unique(np.concatenate(
                [elems] + [vt_data[vt_indptr[w]:vt_indptr[w + 1]] for w in verts]))
            if len(grown) == len(elems):
                raise RankDeficientError(
                    f"patch at vertex {v} exhausted the mesh without full rank",
                    n_points=len(mem), degree=degree)
            elems = grown
            layer += 1
        member_chunks.append(mem)
        pinv_chunks.append(pinv.ravel())
        m_indptr[v + 1] = m_indptr[v] + len(mem)
        scales[v] = scale
        layers[v] = layer

    members = np.concatenate(member_chunks) if member_chunks else np.zeros(0, dtype=np.int64)
    pinv_flat = np.concatenate(pinv_chunks) if pinv_chunks else np.zeros(0)
    return members.astype(np.int64), m_indptr, pinv_flat, scales, layers

# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled patch-fitting kernel.

Same contract as _ppr_numpy.batch_patch_pinv: per-vertex layer growth with a
singular-value rank test, returning sorted member ids and the pseudo-inverse
of the scaled design matrix.  The SVD goes through LAPACK dgesdd directly,
so weights agree with the numpy backend to rounding error.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt
from scipy.linalg.cython_lapack cimport dgesdd

from .polyfit import RANK_RTOL, RankDeficientError, monomial_powers, poly_dim

cnp.import_array()


cdef inline void _sort_i64(cnp.int64_t* a, Py_ssize_t n) noexcept nogil:
    # insertion sort; patch member lists are short
    cdef Py_ssize_t i, j
    cdef cnp.int64_t key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def batch_patch_pinv(nodes, triangles, vt_indptr, vt_data, dof_coords,
                     elem_dofs, degree):
    """Per-vertex patch membership and design pseudo-inverse.

    Returns (members, m_indptr, pinv_flat, scales, layers) exactly as the
    numpy backend does.
    """
    cdef cnp.float64_t[:, ::1] coords = np.ascontiguousarray(dof_coords, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] tris = np.ascontiguousarray(triangles, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] edofs = np.ascontiguousarray(elem_dofs, dtype=np.int64)
    cdef cnp.int64_t[::1] vt_ptr = np.ascontiguousarray(vt_indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] vt = np.ascontiguousarray(vt_data, dtype=np.int64)

    cdef Py_ssize_t n_vertices = len(nodes)
    cdef Py_ssize_t n_tris = tris.shape[0]
    cdef Py_ssize_t n_local = edofs.shape[1]
    cdef Py_ssize_t n_dofs = coords.shape[0]
    cdef int dim = poly_dim(degree)
    cdef double rank_rtol = RANK_RTOL

    pw = monomial_powers(degree)
    cdef cnp.int64_t[:, ::1] powers = np.ascontiguousarray(pw, dtype=np.int64)

    # patch scratch: current elements, member dofs, stamp arrays
    elems_np = np.empty(n_tris, dtype=np.int64)
    mem_np = np.empty(n_dofs, dtype=np.int64)
    cdef cnp.int64_t[::1] elems = elems_np
    cdef cnp.int64_t[::1] mem = mem_np
    cdef cnp.int64_t[::1] elem_stamp = np.zeros(n_tris, dtype=np.int64)
    cdef cnp.int64_t[::1] vert_stamp = np.zeros(n_vertices, dtype=np.int64)
    cdef cnp.int64_t[::1] dof_stamp = np.zeros(n_dofs, dtype=np.int64)

    # LAPACK scratch; the work buffer regrows on demand after a size query
    cdef int lwork = 4096
    work_np = np.empty(lwork, dtype=np.float64)
    cdef cnp.float64_t[::1] work = work_np
    cdef cnp.int32_t[::1] iwork = np.empty(8 * dim, dtype=np.int32)
    cdef cnp.float64_t[::1] svals = np.empty(dim, dtype=np.float64)
    cdef cnp.float64_t[::1] umat = np.empty(dim * dim, dtype=np.float64)
    cdef Py_ssize_t bcap = 256
    b_np = np.empty(dim * bcap, dtype=np.float64)
    vt_np = np.empty(dim * bcap, dtype=np.float64)
    cdef cnp.float64_t[::1] bmat = b_np
    cdef cnp.float64_t[::1] vtmat = vt_np

    # outputs, doubled when full
    cdef Py_ssize_t mcap = 16 * n_vertices + 64
    members_np = np.empty(mcap, dtype=np.int64)
    pinv_np = np.empty(dim * mcap, dtype=np.float64)
    cdef cnp.int64_t[::1] members = members_np
    cdef cnp.float64_t[::1] pinv_flat = pinv_np
    m_indptr_np = np.zeros(n_vertices + 1, dtype=np.int64)
    scales_np = np.zeros(n_vertices, dtype=np.float64)
    layers_np = np.zeros(n_vertices, dtype=np.int32)
    cdef cnp.int64_t[::1] m_indptr = m_indptr_np
    cdef cnp.float64_t[::1] scales = scales_np
    cdef cnp.int32_t[::1] layers = layers_np

    cdef Py_ssize_t v, i, j, r, e, t, lo, hi, ne, m, added, off
    cdef cnp.int64_t tick = 0, stamp, d, w
    cdef int layer, info, mm, nn, lquery
    cdef double cx, cy, dx, dy, r2, maxr2, scale, sinv, acc
    cdef char jobz = b'S'

    for v in range(n_vertices):
        stamp = v + 1
        ne = 0
        for t in range(vt_ptr[v], vt_ptr[v + 1]):
            e = vt[t]
            if elem_stamp[e] != stamp:
                elem_stamp[e] = stamp
                elems[ne] = e
                ne += 1
        layer = 1
        cx = coords[v, 0]
        cy = coords[v, 1]

        while True:
            # collect the patch's DOF ids
            tick += 1
            m = 0
            for i in range(ne):
                e = elems[i]
                for j in range(n_local):
                    d = edofs[e, j]
                    if dof_stamp[d] != tick:
                        dof_stamp[d] = tick
                        mem[m] = d
                        m += 1
            if m >= dim:
                _sort_i64(&mem[0], m)
                maxr2 = 0.0
                for j in range(m):
                    dx = coords[mem[j], 0] - cx
                    dy = coords[mem[j], 1] - cy
                    r2 = dx * dx + dy * dy
                    if r2 > maxr2:
                        maxr2 = r2
                scale = sqrt(maxr2)
                if scale == 0.0:
                    scale = 1.0

                if m > bcap:
                    while bcap < m:
                        bcap *= 2
                    b_np = np.empty(dim * bcap, dtype=np.float64)
                    vt_np = np.empty(dim * bcap, dtype=np.float64)
                    bmat = b_np
                    vtmat = vt_np
                # design matrix transpose, Fortran order (dim x m)
                for j in range(m):
                    dx = (coords[mem[j], 0] - cx) / scale
                    dy = (coords[mem[j], 1] - cy) / scale
                    for i in range(dim):
                        bmat[j * dim + i] = (pow(dx, <double> powers[i, 0])
                                             * pow(dy, <double> powers[i, 1]))

                mm = dim
                nn = <int> m
                lquery = -1
                dgesdd(&jobz, &mm, &nn, &bmat[0], &mm, &svals[0], &umat[0],
                       &mm, &vtmat[0], &mm, &work[0], &lquery, <int*> &iwork[0], &info)
                if info == 0 and <int> work[0] > lwork:
                    lwork = <int> work[0]
                    work_np = np.empty(lwork, dtype=np.float64)
                    work = work_np
                dgesdd(&jobz, &mm, &nn, &bmat[0], &mm, &svals[0], &umat[0],
                       &mm, &vtmat[0], &mm, &work[0], &lwork, <int*> &iwork[0], &info)
                if info != 0:
                    raise RuntimeError(f"dgesdd failed with info={info} at vertex {v}")
                if svals[dim - 1] >= rank_rtol * svals[0]:
                    break

            # grow by one layer: add the stars of every patch vertex
            added = 0
            hi = ne
            for i in range(hi):
                e = elems[i]
                for j in range(3):
                    w = tris[e, j]
                    if vert_stamp[w] != stamp:
                        vert_stamp[w] = stamp
                        for t in range(vt_ptr[w], vt_ptr[w + 1]):
                            if elem_stamp[vt[t]] != stamp:
                                elem_stamp[vt[t]] = stamp
                                elems[ne] = vt[t]
                                ne += 1
                                added += 1
            if added == 0:
                raise RankDeficientError(
                    f"patch at vertex {v} exhausted the mesh without full rank",
                    n_points=m, degree=degree)
            layer += 1

        off = m_indptr[v]
        if off + m > mcap or dim * (off + m) > pinv_np.shape[0]:
            while mcap < off + m:
                mcap *= 2
            grown_members = np.empty(mcap, dtype=np.int64)
            grown_members[:off] = members_np[:off]
            members_np = grown_members
            members = members_np
            grown_pinv = np.empty(dim * mcap, dtype=np.float64)
            grown_pinv[:dim * off] = pinv_np[:dim * off]
            pinv_np = grown_pinv
            pinv_flat = pinv_np
        for j in range(m):
            members[off + j] = mem[j]
        # pinv(A) = U_f diag(1/s) VT_f for the transposed-design factorization
        for i in range(dim):
            for j in range(m):
                acc = 0.0
                for r in range(dim):
                    acc += umat[i + dim * r] * (vtmat[r + dim * j] / svals[r])
                pinv_flat[dim * off + i * m + j] = acc
        m_indptr[v + 1] = off + m
        scales[v] = scale
        layers[v] = layer

    total = int(m_indptr[n_vertices])
    return (members_np[:total].copy(), m_indptr_np,
            pinv_np[:dim * total].copy(), scales_np, layers_np)

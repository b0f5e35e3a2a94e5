"""2D triangulations: uniform pattern generators, file I/O, refinement,
DOF classification, node patches, and the interior/near-boundary split.

Generated meshes number vertices lexicographically by (y, x); criss-cross
cell centers are appended after the grid nodes.  All triangles are stored
counter-clockwise.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .polyfit import RANK_RTOL, RankDeficientError, poly_dim, scaled_design

PATTERNS = ("regular", "chevron", "crisscross", "unionjack", "equilateral")


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    """Raised on malformed node/element text, carrying the offending line."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def _signed_areas(nodes, triangles):
    a = nodes[triangles[:, 0]]
    b = nodes[triangles[:, 1]]
    c = nodes[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


class Triangulation:
    """Conforming triangle mesh of a polygonal domain.

    nodes           (N, 2) float array
    triangles       (T, 3) int array, counter-clockwise
    boundary_node   (N,) bool flags
    mesh_size_h     max element diameter
    pattern_tag     one of PATTERNS or "imported"
    grid_spacing    structured spacing 1/n for generated patterns, else None
    """

    def __init__(self, nodes, triangles, boundary_node, pattern_tag="imported",
                 grid_spacing=None, validate=True):
        self.nodes = np.ascontiguousarray(nodes, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_node = np.ascontiguousarray(boundary_node, dtype=bool)
        self.pattern_tag = pattern_tag
        self.grid_spacing = grid_spacing
        if validate:
            self._validate()
        d01 = np.linalg.norm(self.nodes[self.triangles[:, 0]] - self.nodes[self.triangles[:, 1]], axis=1)
        d12 = np.linalg.norm(self.nodes[self.triangles[:, 1]] - self.nodes[self.triangles[:, 2]], axis=1)
        d20 = np.linalg.norm(self.nodes[self.triangles[:, 2]] - self.nodes[self.triangles[:, 0]], axis=1)
        self.mesh_size_h = float(np.max(np.stack([d01, d12, d20])))

    def _validate(self):
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("non-finite node coordinates")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes):
            raise MeshError("triangle node index out of range")
        if len(self.boundary_node) != len(self.nodes):
            raise MeshError("boundary flag length mismatch")
        areas = _signed_areas(self.nodes, self.triangles)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshError(f"degenerate element {bad}: signed area {areas[bad]:g} <= 0")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def areas(self):
        return _signed_areas(self.nodes, self.triangles)

    @cached_property
    def edges(self):
        """(E, 2) array of sorted vertex pairs, lexicographically ordered."""
        raw = self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        raw = np.sort(raw, axis=1)
        edges, inverse, counts = np.unique(raw, axis=0, return_inverse=True, return_counts=True)
        self._edge_of_tri_side = inverse.reshape(-1, 3)
        self._edge_counts = counts
        return edges

    @property
    def triangle_edges(self):
        """(T, 3) edge ids of sides (0,1), (1,2), (2,0)."""
        self.edges
        return self._edge_of_tri_side

    @cached_property
    def boundary_edges(self):
        """Edges belonging to exactly one triangle."""
        edges = self.edges
        return edges[self._edge_counts == 1]

    @cached_property
    def vertex_to_edges(self):
        """CSR (indptr, edge_ids): edges incident to each vertex."""
        flat = self.edges.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr.astype(np.int64), (order // 2).astype(np.int64)

    @cached_property
    def vertex_to_elements(self):
        """CSR (indptr, element_ids): triangles incident to each vertex."""
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr.astype(np.int64), (order // 3).astype(np.int64)

    def element_star(self, vertex):
        indptr, elems = self.vertex_to_elements
        return elems[indptr[vertex]:indptr[vertex + 1]]

    def to_node_text(self):
        lines = [f"{self.n_nodes} 2 0 1"]
        for i, (x, y) in enumerate(self.nodes):
            lines.append(f"{i + 1} {x:.17g} {y:.17g} {int(self.boundary_node[i])}")
        return "\n".join(lines) + "\n"

    def to_ele_text(self):
        lines = [f"{self.n_triangles} 3 0"]
        for i, (a, b, c) in enumerate(self.triangles):
            lines.append(f"{i + 1} {a + 1} {b + 1} {c + 1}")
        return "\n".join(lines) + "\n"

    def save(self, prefix):
        with open(f"{prefix}.node", "w") as f:
            f.write(self.to_node_text())
        with open(f"{prefix}.ele", "w") as f:
            f.write(self.to_ele_text())


def _grid_mesh(n, splitter):
    """Common body of the diagonal-split unit-square patterns."""
    xs = np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, xs)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            bl, br = idx(i, j), idx(i + 1, j)
            tl, tr = idx(i, j + 1), idx(i + 1, j + 1)
            tris.extend(splitter(i, j, bl, br, tr, tl))
    boundary = (X.ravel() == 0.0) | (X.ravel() == 1.0) | (Y.ravel() == 0.0) | (Y.ravel() == 1.0)
    return nodes, np.array(tris, dtype=np.int64), boundary


def _split_ne(i, j, bl, br, tr, tl):
    # diagonal in the (1,1) direction
    return [(bl, br, tr), (bl, tr, tl)]


def _split_nw(i, j, bl, br, tr, tl):
    # diagonal in the (-1,1) direction
    return [(bl, br, tl), (br, tr, tl)]


def generate_uniform(pattern, n):
    """Build one of the five uniform patterns on the unit square.

    The equilateral pattern tiles [0, 1] x [0, sqrt(3)/2 * m * h] for the
    largest m fitting in the square, with half-width right triangles closing
    the vertical sides; that rectangle is its domain.
    """
    if pattern not in PATTERNS:
        raise MeshError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    n = int(n)
    if n < 2:
        raise MeshError("n must be at least 2")
    h = 1.0 / n

    if pattern == "regular":
        nodes, tris, boundary = _grid_mesh(n, _split_ne)
    elif pattern == "chevron":
        nodes, tris, boundary = _grid_mesh(
            n, lambda i, j, *q: _split_ne(i, j, *q) if i % 2 == 0 else _split_nw(i, j, *q))
    elif pattern == "unionjack":
        nodes, tris, boundary = _grid_mesh(
            n, lambda i, j, *q: _split_ne(i, j, *q) if (i + j) % 2 == 0 else _split_nw(i, j, *q))
    elif pattern == "crisscross":
        nodes, tris, boundary = _crisscross(n)
    else:
        nodes, tris, boundary = _equilateral(n)
    return Triangulation(nodes, tris, boundary, pattern_tag=pattern, grid_spacing=h)


def _crisscross(n):
    xs = np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, xs)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    cx = (np.arange(n) + 0.5) / n
    CX, CY = np.meshgrid(cx, cx)
    centers = np.column_stack([CX.ravel(), CY.ravel()])
    nodes = np.vstack([grid, centers])
    n_grid = (n + 1) ** 2

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            bl, br = idx(i, j), idx(i + 1, j)
            tl, tr = idx(i, j + 1), idx(i + 1, j + 1)
            c = n_grid + j * n + i
            tris.extend([(bl, br, c), (br, tr, c), (tr, tl, c), (tl, bl, c)])
    boundary = np.zeros(len(nodes), dtype=bool)
    gx, gy = grid[:, 0], grid[:, 1]
    boundary[:n_grid] = (gx == 0.0) | (gx == 1.0) | (gy == 0.0) | (gy == 1.0)
    return nodes, np.array(tris, dtype=np.int64), boundary


def _equilateral(n):
    h = 1.0 / n
    row_h = np.sqrt(3.0) / 2.0 * h
    m = int(np.floor(1.0 / row_h + 1e-12))
    if m < 2:
        raise MeshError("n too small for an equilateral row to fit twice")
    height = m * row_h

    rows = []
    for j in range(m + 1):
        y = j * row_h
        if j % 2 == 0:
            xs = np.arange(n + 1) * h
        else:
            xs = np.concatenate([[0.0], (np.arange(n) + 0.5) * h, [1.0]])
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    offsets = np.cumsum([0] + [len(r) for r in rows])
    nodes = np.vstack(rows)

    tris = []
    for j in range(m):
        lo, hi = offsets[j], offsets[j + 1]
        if j % 2 == 0:
            B = np.arange(lo, hi)                      # aligned row, n+1 nodes
            T = np.arange(hi, offsets[j + 2])          # offset row, n+2 nodes
            for i in range(n):
                tris.append((B[i], B[i + 1], T[i + 1]))
            for i in range(n + 1):
                tris.append((B[i], T[i + 1], T[i]))
        else:
            T = np.arange(lo, hi)                      # offset row below
            B = np.arange(hi, offsets[j + 2])          # aligned row above
            for i in range(n + 1):
                tris.append((T[i], T[i + 1], B[i]))
            for i in range(n):
                tris.append((T[i + 1], B[i + 1], B[i]))
    x, y = nodes[:, 0], nodes[:, 1]
    boundary = (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == height)
    return nodes, np.array(tris, dtype=np.int64), boundary


def _parse_rows(text, expected_fields, what):
    rows = []
    count = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if count is None:
            try:
                count = int(fields[0])
            except ValueError:
                raise MeshFormatError(f"bad {what} header", line_no)
            continue
        if len(fields) < expected_fields:
            raise MeshFormatError(
                f"expected {expected_fields} fields in {what} row, got {len(fields)}", line_no)
        rows.append((line_no, fields))
    if count is None:
        raise MeshFormatError(f"empty {what} file")
    if len(rows) != count:
        raise MeshFormatError(f"{what} header promises {count} rows, found {len(rows)}")
    return rows


def import_mesh(node_text, element_text):
    """Parse Triangle/EasyMesh-style .node and .ele text into a mesh."""
    node_rows = _parse_rows(node_text, 4, "node")
    nodes = np.zeros((len(node_rows), 2))
    boundary = np.zeros(len(node_rows), dtype=bool)
    for pos, (line_no, f) in enumerate(node_rows):
        try:
            idx = int(f[0])
            nodes[pos] = (float(f[1]), float(f[2]))
            boundary[pos] = int(f[3]) != 0
        except ValueError as exc:
            raise MeshFormatError(str(exc), line_no)
        if idx != pos + 1:
            raise MeshFormatError(f"node index {idx} out of order (expected {pos + 1})", line_no)

    ele_rows = _parse_rows(element_text, 4, "element")
    tris = np.zeros((len(ele_rows), 3), dtype=np.int64)
    for pos, (line_no, f) in enumerate(ele_rows):
        try:
            tris[pos] = [int(f[1]) - 1, int(f[2]) - 1, int(f[3]) - 1]
        except ValueError as exc:
            raise MeshFormatError(str(exc), line_no)
        if tris[pos].min() < 0 or tris[pos].max() >= len(nodes):
            raise MeshFormatError(f"vertex index out of range in element {pos + 1}", line_no)
        if len(set(tris[pos])) != 3:
            raise MeshFormatError(f"degenerate element {pos + 1}: repeated vertex", line_no)
    try:
        return Triangulation(nodes, tris, boundary, pattern_tag="imported")
    except MeshError as exc:
        raise MeshFormatError(str(exc))


def load_mesh(prefix):
    with open(f"{prefix}.node") as f:
        node_text = f.read()
    with open(f"{prefix}.ele") as f:
        ele_text = f.read()
    return import_mesh(node_text, ele_text)


def refine_uniform(mesh):
    """Red refinement: each triangle split into 4 congruent children."""
    edges = mesh.edges
    tri_edges = mesh.triangle_edges
    n_old = mesh.n_nodes
    midpoints = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, midpoints])

    boundary = np.zeros(len(nodes), dtype=bool)
    boundary[:n_old] = mesh.boundary_node
    boundary_edge_ids = np.nonzero(mesh._edge_counts == 1)[0]
    boundary[n_old + boundary_edge_ids] = True

    a, b, c = mesh.triangles.T
    mab = n_old + tri_edges[:, 0]
    mbc = n_old + tri_edges[:, 1]
    mca = n_old + tri_edges[:, 2]
    tris = np.concatenate([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ])
    spacing = None if mesh.grid_spacing is None else 0.5 * mesh.grid_spacing
    return Triangulation(nodes, tris, boundary, pattern_tag=mesh.pattern_tag,
                         grid_spacing=spacing)


def delaunay_triangulate(points, boundary_node, pattern_tag="delaunay"):
    """Delaunay triangulation of a point set, oriented counter-clockwise."""
    from scipy.spatial import Delaunay

    points = np.ascontiguousarray(points, dtype=np.float64)
    tris = Delaunay(points).simplices.astype(np.int64)
    neg = _signed_areas(points, tris) < 0
    tris[neg, 1], tris[neg, 2] = tris[neg, 2].copy(), tris[neg, 1].copy()
    return Triangulation(points, tris, boundary_node, pattern_tag=pattern_tag)


def smoothed_refine(mesh, rounds=4):
    """Non-nested refinement: insert all edge midpoints, relax each interior
    node toward the mean of its neighbors, and re-triangulate.

    Unlike `refine_uniform` this does not reproduce the parent's local
    pattern, so the result stays a generic (but shape-regular) Delaunay
    mesh at roughly half the mesh size.  Deterministic.
    """
    from scipy.sparse import coo_matrix
    from scipy.spatial import Delaunay

    edges = mesh.edges
    n_old = mesh.n_nodes
    points = np.vstack([mesh.nodes,
                        0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])])
    boundary = np.zeros(len(points), dtype=bool)
    boundary[:n_old] = mesh.boundary_node
    boundary[n_old + np.nonzero(mesh._edge_counts == 1)[0]] = True

    interior = ~boundary
    for _ in range(rounds):
        simp = Delaunay(points).simplices
        e = np.vstack([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)),
                         shape=(len(points), len(points))).tocsr()
        degree = np.asarray(adj.sum(axis=1)).ravel()
        average = adj @ points / degree[:, None]
        points[interior] = average[interior]

    return delaunay_triangulate(points, boundary, pattern_tag=mesh.pattern_tag)


@dataclass
class NodeClassification:
    """One DOF node: a vertex, an edge node, or an element-interior node."""

    kind: str                      # "vertex" | "edge" | "interior"
    parent_vertices: tuple = None  # edge nodes: (v1, v2)
    ratio: float = None            # edge nodes: position from v1 toward v2
    parent_triangle: int = None    # interior nodes
    barycentric: tuple = None      # interior nodes


def classify_dofs(mesh, k):
    """Classify the Lagrange DOF nodes of order k in canonical order:
    vertices first, then k-1 nodes per edge, then interior lattice nodes.
    """
    if k < 1:
        raise MeshError("element order must be >= 1")
    out = [NodeClassification(kind="vertex") for _ in range(mesh.n_nodes)]
    if k == 1:
        return out
    for a, b in mesh.edges:
        for i in range(1, k):
            out.append(NodeClassification(kind="edge", parent_vertices=(int(a), int(b)),
                                          ratio=i / k))
    if k >= 3:
        for t in range(mesh.n_triangles):
            for i in range(1, k):
                for j in range(1, k - i):
                    lam = ((k - i - j) / k, i / k, j / k)
                    out.append(NodeClassification(kind="interior", parent_triangle=t,
                                                  barycentric=lam))
    return out


def dof_coordinates(mesh, k):
    """Coordinates of the canonical order-k DOF nodes (k = 1 or 2)."""
    if k == 1:
        return mesh.nodes
    if k == 2:
        edges = mesh.edges
        mid = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
        return np.vstack([mesh.nodes, mid])
    raise MeshError(f"order {k} DOF coordinates not supported")


def element_dof_table(mesh, k):
    """(T, n_local) global DOF ids per element: 3 vertices, then for k=2 the
    midpoints of sides (0,1), (1,2), (2,0)."""
    if k == 1:
        return mesh.triangles.copy()
    if k == 2:
        return np.hstack([mesh.triangles, mesh.n_nodes + mesh.triangle_edges])
    raise MeshError(f"order {k} elements not supported")


@dataclass
class Patch:
    """Sampling patch around a vertex: whole element layers, grown until the
    degree-(k+1) least-squares problem has full rank."""

    center: int
    member_nodes: np.ndarray
    member_elements: np.ndarray
    layers_used: int


def grow_patch(mesh, vertex, degree, dof_coords, elem_dofs):
    """Layer-growth engine shared by build_patch and the numpy kernel.

    Returns (member_nodes, member_elements, layers, svd) where svd is the
    (U, S, Vt, scale) of the final scaled design matrix.
    """
    indptr, vert_elems = mesh.vertex_to_elements
    need = poly_dim(degree)
    elems = np.unique(vert_elems[indptr[vertex]:indptr[vertex + 1]])
    layers = 1
    while True:
        members = np.unique(elem_dofs[elems])
        if len(members) >= need:
            A, scale = scaled_design(dof_coords[members], dof_coords[vertex], degree)
            U, S, Vt = np.linalg.svd(A, full_matrices=False)
            if S[-1] >= RANK_RTOL * S[0]:
                return members, elems, layers, (U, S, Vt, scale)
        verts = np.unique(mesh.triangles[elems])
        grown = np.unique(np.concatenate(
            [elems] + [vert_elems[indptr[v]:indptr[v + 1]] for v in verts]))
        if len(grown) == len(elems):
            raise RankDeficientError(
                f"patch at vertex {vertex} exhausted the mesh without full rank")
        elems = grown
        layers += 1


def build_patch(mesh, vertex, k):
    """Element-star patch around a vertex, grown one whole layer at a time."""
    if vertex < 0 or vertex >= mesh.n_nodes:
        raise MeshError(f"vertex {vertex} out of range")
    dof_coords = dof_coordinates(mesh, k)
    elem_dofs = element_dof_table(mesh, k)
    members, elems, layers, _ = grow_patch(mesh, vertex, k + 1, dof_coords, elem_dofs)
    return Patch(center=int(vertex), member_nodes=members, member_elements=elems,
                 layers_used=layers)


@dataclass
class InteriorRegion:
    """Split of DOF nodes by distance to the boundary polygon, and the
    elements whose DOF nodes all lie in the interior part."""

    cutoff_L: float
    interior_nodes: np.ndarray
    near_boundary_nodes: np.ndarray
    interior_elements: np.ndarray
    n_dofs: int

    @property
    def interior_mask(self):
        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[self.interior_nodes] = True
        return mask


def boundary_distances(mesh, points):
    """Exact Euclidean distance from each point to the boundary polygon."""
    segs = mesh.boundary_edges
    a = mesh.nodes[segs[:, 0]]
    b = mesh.nodes[segs[:, 1]]
    return _point_segment_min(points, a, b)


def _point_segment_min(points, a, b):
    ab = b - a
    ab2 = (ab**2).sum(axis=1)
    best = np.full(len(points), np.inf)
    chunk = max(1, 10_000_000 // max(len(a), 1))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk]
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip((ap * ab[None, :, :]).sum(axis=2) / ab2[None, :], 0.0, 1.0)
        d2 = ((ap - t[:, :, None] * ab[None, :, :]) ** 2).sum(axis=2)
        best[lo:lo + chunk] = np.sqrt(d2.min(axis=1))
    return best


def interior_region(mesh, L, k=1):
    """Partition the order-k DOF nodes at distance cutoff L and collect the
    triangles whose DOF nodes are all interior.  L = 0 disables the cutoff.

    Nodes at distance exactly L (to within rounding) count as interior: on
    meshes whose node lines land on the cutoff this keeps the measured region
    at its nominal size instead of shaving off a one-node layer.
    """
    dof_coords = dof_coordinates(mesh, k)
    n_dofs = len(dof_coords)
    if L < 0:
        raise MeshError("cutoff L must be nonnegative")
    if L == 0.0:
        near = np.zeros(n_dofs, dtype=bool)
    else:
        cut = L - 1e-12 * max(1.0, L)
        segs = mesh.boundary_edges
        seg_len = np.linalg.norm(mesh.nodes[segs[:, 1]] - mesh.nodes[segs[:, 0]], axis=1)
        endpoints = np.unique(segs)
        tree = cKDTree(mesh.nodes[endpoints])
        d_vertex, _ = tree.query(dof_coords)
        near = d_vertex <= cut
        band = np.nonzero(~near & (d_vertex <= cut + seg_len.max() / 2.0))[0]
        if len(band):
            d_exact = _point_segment_min(dof_coords[band],
                                         mesh.nodes[segs[:, 0]], mesh.nodes[segs[:, 1]])
            near[band] = d_exact <= cut
    elem_dofs = element_dof_table(mesh, k)
    interior_elems = np.nonzero(~near[elem_dofs].any(axis=1))[0]
    return InteriorRegion(cutoff_L=float(L),
                          interior_nodes=np.nonzero(~near)[0],
                          near_boundary_nodes=np.nonzero(near)[0],
                          interior_elements=interior_elems,
                          n_dofs=n_dofs)

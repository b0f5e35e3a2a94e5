"""Generate the packaged unstructured triangulation (delaunay139).

Deterministic: seeded point placement with minimum-distance thinning,
Lloyd-style smoothing of interior points, final Delaunay triangulation.
Writes src/trihess/data/delaunay139.node/.ele.  Rerunning reproduces the
same files byte for byte.
"""

import pathlib
import sys

import numpy as np
from scipy.spatial import Delaunay

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from trihess.mesh import Triangulation  # noqa: E402

TARGET_INTERIOR = 103
SIDE_POINTS = 9  # intervals per side -> 36 boundary nodes
SEED = 20240817
MIN_DIST = 0.075


def boundary_ring():
    t = np.linspace(0.0, 1.0, SIDE_POINTS + 1)
    bot = np.column_stack([t[:-1], np.zeros(SIDE_POINTS)])
    right = np.column_stack([np.ones(SIDE_POINTS), t[:-1]])
    top = np.column_stack([t[:0:-1], np.ones(SIDE_POINTS)])
    left = np.column_stack([np.zeros(SIDE_POINTS), t[:0:-1]])
    return np.vstack([bot, right, top, left])


def interior_points(rng, boundary):
    pts = []
    trial = 0
    while len(pts) < TARGET_INTERIOR:
        trial += 1
        if trial > 200000:
            raise RuntimeError("point placement stalled; relax MIN_DIST")
        p = rng.uniform(0.04, 0.96, size=2)
        ok = True
        for q in pts:
            if np.hypot(*(p - q)) < MIN_DIST:
                ok = False
                break
        if ok and np.min([p[0], p[1], 1 - p[0], 1 - p[1]]) > 0.05:
            d = np.hypot(boundary[:, 0] - p[0], boundary[:, 1] - p[1]).min()
            if d > 0.8 * MIN_DIST:
                pts.append(p)
    return np.array(pts)


def lloyd_smooth(boundary, interior, rounds=60):
    n_b = len(boundary)
    pts = np.vstack([boundary, interior])
    for _ in range(rounds):
        tri = Delaunay(pts)
        nbr = {i: set() for i in range(len(pts))}
        for simplex in tri.simplices:
            for a in simplex:
                for b in simplex:
                    if a != b:
                        nbr[a].add(b)
        new = pts.copy()
        for i in range(n_b, len(pts)):
            ring = np.array(sorted(nbr[i]))
            new[i] = pts[ring].mean(axis=0)
        pts = new
    return pts


def orient_ccw(points, simplices):
    a, b, c = points[simplices[:, 0]], points[simplices[:, 1]], points[simplices[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flipped = simplices.copy()
    neg = det < 0
    flipped[neg, 1], flipped[neg, 2] = simplices[neg, 2], simplices[neg, 1]
    return flipped


def min_angle_deg(points, simplices):
    worst = 180.0
    for s in simplices:
        p = points[s]
        for i in range(3):
            u = p[(i + 1) % 3] - p[i]
            v = p[(i + 2) % 3] - p[i]
            cosang = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
            worst = min(worst, np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    return worst


def main():
    rng = np.random.default_rng(SEED)
    boundary = boundary_ring()
    interior = interior_points(rng, boundary)
    pts = lloyd_smooth(boundary, interior)
    tri = Delaunay(pts)
    simplices = orient_ccw(pts, tri.simplices.astype(np.int64))

    on_boundary = ((np.abs(pts[:, 0]) < 1e-12) | (np.abs(pts[:, 0] - 1) < 1e-12)
                   | (np.abs(pts[:, 1]) < 1e-12) | (np.abs(pts[:, 1] - 1) < 1e-12))
    mesh = Triangulation(pts, simplices, on_boundary, pattern_tag="delaunay139")
    print(f"nodes={mesh.n_nodes} triangles={mesh.n_triangles} "
          f"min_angle={min_angle_deg(pts, simplices):.1f} deg "
          f"h={mesh.mesh_size_h:.4f}")
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "trihess" / "data" / "delaunay139"
    out.parent.mkdir(parents=True, exist_ok=True)
    mesh.save(str(out))
    print(f"wrote {out}.node / .ele")


if __name__ == "__main__":
    main()

"""Least-squares polynomial fitting on node patches.

Fits are carried out in scaled local coordinates ((x - xc)/s, (y - yc)/s)
to keep the design matrix well conditioned; s is the patch radius.
Coefficients are stored in graded-lex monomial order:
1, X, Y, X^2, XY, Y^2, X^3, X^2 Y, X Y^2, Y^3, ...
"""

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-10


class RankDeficientError(ValueError):
    """Sampling points do not determine the polynomial space."""

    def __init__(self, message, n_points=None, degree=None):
        super().__init__(message)
        self.n_points = n_points
        self.degree = degree


def poly_dim(degree):
    """Dimension of the full 2D polynomial space of the given total degree."""
    return (degree + 1) * (degree + 2) // 2


def monomial_powers(degree):
    """(n_terms, 2) integer exponent pairs in graded-lex order."""
    pw = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]
    return np.array(pw, dtype=np.int64)


def design_matrix(xy, degree):
    """Vandermonde-style matrix of monomials evaluated at points xy (n, 2)."""
    xy = np.asarray(xy, dtype=float)
    cols = [xy[:, 0] ** px * xy[:, 1] ** py for px, py in monomial_powers(degree)]
    return np.column_stack(cols)


def derivative_design(xy, degree, dx, dy):
    """Matrix of (d/dx)^dx (d/dy)^dy monomials at local points xy (n, 2)."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    x, y = xy[:, 0], xy[:, 1]
    cols = []
    for px, py in monomial_powers(degree):
        if px < dx or py < dy:
            cols.append(np.zeros(len(xy)))
            continue
        coef = 1.0
        for i in range(dx):
            coef *= px - i
        for i in range(dy):
            coef *= py - i
        cols.append(coef * x ** (px - dx) * y ** (py - dy))
    return np.column_stack(cols)


def monomial_deriv_row(point, degree, dx, dy):
    """Row of (d/dx)^dx (d/dy)^dy monomials at one local point."""
    x, y = point
    row = np.zeros(poly_dim(degree))
    for j, (px, py) in enumerate(monomial_powers(degree)):
        if px < dx or py < dy:
            continue
        cx = 1.0
        for i in range(dx):
            cx *= px - i
        cy = 1.0
        for i in range(dy):
            cy *= py - i
        row[j] = cx * cy * x ** (px - dx) * y ** (py - dy)
    return row


@dataclass
class PolyFit:
    """Least-squares polynomial in scaled local coordinates around `center`."""

    center: np.ndarray
    scale: float
    degree: int
    coeffs: np.ndarray

    def _local(self, x, y):
        return (np.asarray(x, dtype=float) - self.center[0]) / self.scale, (
            np.asarray(y, dtype=float) - self.center[1]
        ) / self.scale

    def __call__(self, x, y):
        X, Y = self._local(x, y)
        out = np.zeros_like(X, dtype=float)
        for c, (px, py) in zip(self.coeffs, monomial_powers(self.degree)):
            out += c * X**px * Y**py
        return out

    def gradient(self, x, y):
        """Physical-coordinate gradient (2, ...) at the given points."""
        X, Y = self._local(x, y)
        gx = np.zeros_like(X, dtype=float)
        gy = np.zeros_like(X, dtype=float)
        for c, (px, py) in zip(self.coeffs, monomial_powers(self.degree)):
            if px > 0:
                gx += c * px * X ** (px - 1) * Y**py
            if py > 0:
                gy += c * py * X**px * Y ** (py - 1)
        return np.stack([gx, gy]) / self.scale

    def hessian_at_center(self):
        """(pxx, pxy, pyy) of the fit at the patch center, physical scaling."""
        if self.degree < 2:
            return np.zeros(3)
        c = self.coeffs
        return np.array([2.0 * c[3], c[4], 2.0 * c[5]]) / self.scale**2


def scaled_design(points, center, degree):
    """Design matrix in local coordinates plus the scale used."""
    points = np.asarray(points, dtype=float)
    diff = points - np.asarray(center, dtype=float)
    scale = np.sqrt((diff**2).sum(axis=1).max())
    if scale == 0.0:
        scale = 1.0
    return design_matrix(diff / scale, degree), scale


def fit_polynomial(patch_or_points, values, degree, coords=None):
    """Least-squares fit of a degree-`degree` polynomial at sampling points.

    Accepts either a mesh Patch (with node coordinates supplied via `coords`)
    or a raw (n, 2) array of points whose first row is taken as the center.
    Solved by SVD on the scaled design matrix, never by normal equations;
    raises RankDeficientError when the points do not determine the space.
    """
    if coords is not None:
        points = coords[patch_or_points.member_nodes]
        center = coords[patch_or_points.center]
    else:
        points = np.asarray(patch_or_points, dtype=float)
        center = points[0]
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite sample values")
    ndim = poly_dim(degree)
    if len(points) < ndim:
        raise RankDeficientError(
            f"{len(points)} sampling points < dim P_{degree} = {ndim}",
            n_points=len(points),
            degree=degree,
        )
    A, scale = scaled_design(points, center, degree)
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    if S[-1] < RANK_RTOL * S[0]:
        raise RankDeficientError(
            f"design matrix rank-deficient at rtol {RANK_RTOL:g} "
            f"({len(points)} points, degree {degree})",
            n_points=len(points),
            degree=degree,
        )
    coeffs = Vt.T @ ((U.T @ values) / S)
    return PolyFit(center=np.asarray(center, dtype=float), scale=scale, degree=degree, coeffs=coeffs)

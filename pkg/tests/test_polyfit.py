import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trihess.polyfit import (PolyFit, RankDeficientError, derivative_design,
                             design_matrix, fit_polynomial, monomial_powers,
                             poly_dim, scaled_design)


def test_poly_dim():
    assert [poly_dim(d) for d in range(5)] == [1, 3, 6, 10, 15]


def test_monomial_powers_graded_lex():
    pw = monomial_powers(3)
    assert pw.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2],
                           [3, 0], [2, 1], [1, 2], [0, 3]]
    assert (pw.sum(axis=1) == sorted(pw.sum(axis=1))).all()


def test_design_matrix_values():
    xy = np.array([[2.0, 3.0]])
    row = design_matrix(xy, 2)[0]
    assert np.allclose(row, [1, 2, 3, 4, 6, 9])


def test_derivative_design_matches_analytic():
    rng = np.random.default_rng(3)
    xy = rng.uniform(-1, 1, size=(20, 2))
    x, y = xy[:, 0], xy[:, 1]
    # d/dx of [1, x, y, x^2, xy, y^2] = [0, 1, 0, 2x, y, 0]
    dx = derivative_design(xy, 2, 1, 0)
    assert np.allclose(dx, np.column_stack(
        [0 * x, 1 + 0 * x, 0 * x, 2 * x, y, 0 * x]))
    dxy = derivative_design(xy, 3, 1, 1)
    # d2/dxdy of cubic basis: only xy, x^2 y, x y^2 survive (1, 2x, 2y)
    expect = np.zeros((len(xy), 10))
    expect[:, 4] = 1.0
    expect[:, 7] = 2 * x
    expect[:, 8] = 2 * y
    assert np.allclose(dxy, expect)


def _peval(coeffs, degree, xy):
    return design_matrix(np.atleast_2d(xy), degree) @ coeffs


@given(degree=st.integers(1, 3), seed=st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_fit_reproduces_polynomials(degree, seed):
    rng = np.random.default_rng(seed)
    dim = poly_dim(degree)
    pts = rng.uniform(-1, 1, size=(dim + 6, 2))
    coeffs = rng.uniform(-2, 2, size=dim)
    vals = _peval(coeffs, degree, pts)
    fit = fit_polynomial(pts, vals, degree)
    probe = rng.uniform(-1, 1, size=(5, 2))
    assert np.allclose(fit(probe[:, 0], probe[:, 1]),
                       _peval(coeffs, degree, probe), rtol=1e-9, atol=1e-9)


def test_gradient_and_second_derivatives_at_center():
    # u = 1 + 2x - y + 3x^2 + 4xy + 5y^2 around center (0.3, -0.2)
    rng = np.random.default_rng(7)
    c = np.array([0.3, -0.2])
    pts = np.vstack([c, rng.uniform(-1, 1, size=(30, 2))])
    u = (1 + 2 * pts[:, 0] - pts[:, 1] + 3 * pts[:, 0] ** 2
         + 4 * pts[:, 0] * pts[:, 1] + 5 * pts[:, 1] ** 2)
    fit = fit_polynomial(pts, u, 2)
    gx = 2 + 6 * c[0] + 4 * c[1]
    gy = -1 + 4 * c[0] + 10 * c[1]
    assert np.allclose(fit.gradient(c[0], c[1]), [gx, gy])
    assert np.allclose(fit.hessian_at_center(), [6.0, 4.0, 10.0])


def test_scale_is_patch_radius():
    pts = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]])
    _, scale = scaled_design(pts, np.zeros(2), 1)
    assert scale == 5.0


def test_translation_and_scale_invariance():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-1, 1, size=(15, 2))
    vals = rng.uniform(-1, 1, size=15)
    f1 = fit_polynomial(pts, vals, 2)
    big = pts * 1000.0 + np.array([500.0, -200.0])
    f2 = fit_polynomial(big, vals, 2)
    probe = pts[:4]
    probe_big = probe * 1000.0 + np.array([500.0, -200.0])
    assert np.allclose(f1(probe[:, 0], probe[:, 1]),
                       f2(probe_big[:, 0], probe_big[:, 1]),
                       rtol=1e-8, atol=1e-8)


def test_rank_deficient_collinear():
    pts = np.column_stack([np.linspace(0, 1, 8), np.linspace(0, 2, 8)])
    with pytest.raises(RankDeficientError):
        fit_polynomial(pts, np.ones(8), 2)


def test_too_few_points():
    with pytest.raises(RankDeficientError):
        fit_polynomial(np.array([[0.0, 0.0], [1.0, 0.0]]), np.ones(2), 2)

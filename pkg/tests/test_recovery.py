import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURE_PREFIX, center_vertex
from trihess.fem import FESpace, Field, interpolate
from trihess.mesh import Triangulation, generate_uniform, load_mesh
from trihess.polyfit import RankDeficientError
from trihess.recovery import (COMPONENTS, METHODS, RecoveryError, Stencil,
                              extract_stencil, hessian_matrices,
                              normalize_method, ppr_gradient, ppr_hessian,
                              recover_hessian, verify_exactness_degree,
                              zz_gradient)

H = 0.1  # grid spacing of the n=10 session meshes

# Recovered-gradient weights at a deep-interior vertex of the regular
# pattern, as (wx, wy) pairs scaled by 6h, keyed by integer grid offset.
GRAD_6H = {
    (1, 0): (2, -1), (1, 1): (1, 1), (0, 1): (-1, 2),
    (-1, 0): (-2, 1), (-1, -1): (-1, -1), (0, -1): (1, -2),
}

# Composed-recovery H^xx weights at the same vertex, scaled by 36h^2.
HXX_36H2 = {
    (0, 0): -12,
    (1, 0): 2, (-1, 0): 2, (2, 0): 4, (-2, 0): 4,
    (0, 1): -4, (0, -1): -4, (0, 2): 1, (0, -2): 1,
    (1, 1): -4, (-1, -1): -4, (2, 2): 1, (-2, -2): 1,
    (2, 1): 4, (-2, -1): 4, (1, -1): 4, (-1, 1): 4,
    (1, 2): -2, (-1, -2): -2,
}


def stencil_offsets(stencil, mesh, h=H):
    center = mesh.nodes[stencil.center]
    out = {}
    for node, w in stencil.entries:
        key = tuple(int(round(c)) for c in (mesh.nodes[node] - center) / h)
        assert np.allclose(mesh.nodes[node], center + np.array(key) * h, atol=1e-12)
        out[key] = w
    return out


def test_gradient_stencil_regular(regular10):
    v = center_vertex(regular10)
    gx = stencil_offsets(extract_stencil(regular10, 1, "ppr_ppr", v, "gx"), regular10)
    gy = stencil_offsets(extract_stencil(regular10, 1, "ppr_ppr", v, "gy"), regular10)
    assert set(gx) == set(GRAD_6H) and set(gy) == set(GRAD_6H)
    for off, (wx, wy) in GRAD_6H.items():
        assert gx[off] * 6 * H == pytest.approx(wx, abs=1e-12)
        assert gy[off] * 6 * H == pytest.approx(wy, abs=1e-12)


def test_hxx_stencil_regular(regular10):
    v = center_vertex(regular10)
    got = stencil_offsets(extract_stencil(regular10, 1, "ppr_ppr", v, "hxx"), regular10)
    assert set(got) == set(HXX_36H2)
    for off, w in HXX_36H2.items():
        assert got[off] * 36 * H**2 == pytest.approx(w, abs=1e-12)


def test_hyy_is_hxx_transposed(regular10):
    # the pattern is symmetric under swapping x and y
    v = center_vertex(regular10)
    got = stencil_offsets(extract_stencil(regular10, 1, "ppr_ppr", v, "hyy"), regular10)
    for (i, j), w in HXX_36H2.items():
        assert got[(j, i)] * 36 * H**2 == pytest.approx(w, abs=1e-12)


def test_mixed_partials_commute_on_regular(regular10):
    # a single translation class makes the two recovery stages commute
    v = center_vertex(regular10)
    mats = hessian_matrices(FESpace(regular10, 1), "ppr_ppr")
    rows = [mats[c].getrow(v).toarray().ravel() for c in ("hxy", "hyx")]
    assert np.abs(rows[0] - rows[1]).max() < 1e-12 / H**2


@pytest.mark.parametrize("pattern", ["crisscross", "unionjack"])
def test_mixed_partials_are_reflections_on_two_class_patterns(pattern):
    # two vertex classes break commutation, but the diagonal mesh symmetry
    # still maps the hxy stencil onto the hyx stencil with offsets swapped
    mesh = generate_uniform(pattern, 10)
    v = center_vertex(mesh)
    c = mesh.nodes[v]

    def offsets(component):
        st = extract_stencil(mesh, 1, "ppr_ppr", v, component)
        return {tuple(int(round(q)) for q in (mesh.nodes[n] - c) / (H / 2)): w
                for n, w in st.entries}

    xy, yx = offsets("hxy"), offsets("hyx")
    assert any(abs(xy[k] - yx.get(k, 0.0)) > 1.0 for k in xy)  # not equal
    for (i, j), w in xy.items():
        assert yx[(j, i)] == pytest.approx(w, abs=1e-12 / H**2)


def test_chevron_valley_second_difference(chevron10):
    # both row parities collapse H^xx to a second difference over 2h
    for target in ([0.5, 0.5], [0.5, 0.4]):
        v = int(np.argmin(np.linalg.norm(chevron10.nodes - target, axis=1)))
        got = stencil_offsets(extract_stencil(chevron10, 1, "ppr_ppr", v, "hxx"),
                              chevron10)
        assert set(got) == {(-2, 0), (0, 0), (2, 0)}
        assert got[(0, 0)] * 144 * H**2 == pytest.approx(-72, abs=1e-12)
        assert got[(2, 0)] * 144 * H**2 == pytest.approx(36, abs=1e-12)
        assert got[(-2, 0)] * 144 * H**2 == pytest.approx(36, abs=1e-12)


def test_mixed_partials_differ_on_chevron(chevron10):
    v = center_vertex(chevron10)
    mats = hessian_matrices(FESpace(chevron10, 1), "ppr_ppr")
    rows = [mats[c].getrow(v).toarray().ravel() for c in ("hxy", "hyx")]
    assert np.abs(rows[0] - rows[1]).max() > 1.0  # O(1/h) disagreement


def test_quadratic_exact_everywhere_unstructured(unstructured139):
    space = FESpace(unstructured139, 1)
    u = interpolate(space, lambda x, y: x**2 + 3 * x * y + 2 * y**2)
    got = recover_hessian(u).values
    exact = np.array([2.0, 3.0, 3.0, 4.0])
    err = np.abs(got - exact).max()
    assert err * unstructured139.mesh_size_h**2 < 1e-10


@pytest.mark.parametrize("pattern", ["regular", "chevron", "crisscross",
                                     "unionjack", "equilateral"])
def test_cubic_exactness_at_interior_vertex(pattern):
    mesh = generate_uniform(pattern, 10)
    v = center_vertex(mesh)
    assert verify_exactness_degree(mesh, 1, "ppr_ppr", v) == 3


def test_quintic_exactness_quadratic_elements(regular10):
    space = FESpace(regular10, 2)
    v = center_vertex(regular10)
    assert verify_exactness_degree(space, 2, "ppr_ppr", v) >= 5
    # nearest edge node to the center
    edge_dofs = np.arange(regular10.n_nodes, space.dof_count)
    e = edge_dofs[np.argmin(np.linalg.norm(
        space.dof_coords[edge_dofs] - [0.5, 0.5], axis=1))]
    assert verify_exactness_degree(space, 2, "ppr_ppr", int(e)) >= 5


@pytest.mark.parametrize("method", ["zz_zz", "zz_ppr", "qf"])
def test_comparison_methods_cubic_exact_at_regular_center(regular10, method):
    v = center_vertex(regular10)
    assert verify_exactness_degree(regular10, 1, method, v) == 3


def test_quadratic_fit_method_exact_on_quadratics(unstructured139):
    space = FESpace(unstructured139, 1)
    u = interpolate(space, lambda x, y: x**2 - x * y + 0.5 * y**2 + x - 3)
    got = recover_hessian(u, "qf").values
    exact = np.array([2.0, -1.0, -1.0, 1.0])
    assert np.abs(got - exact).max() * unstructured139.mesh_size_h**2 < 1e-10
    assert np.array_equal(got[:, 1], got[:, 2])  # single mixed estimate


def test_weighted_average_gradient_oracle(unstructured139):
    space = FESpace(unstructured139, 1)
    rng = np.random.default_rng(7)
    vals = rng.standard_normal(space.dof_count)
    fld = Field(space, vals)
    g = zz_gradient(fld).values

    mesh = unstructured139
    v = center_vertex(mesh)
    acc, total = np.zeros(2), 0.0
    for t, tri in enumerate(mesh.triangles):
        if v not in tri:
            continue
        p = mesh.nodes[tri]
        M = np.column_stack([np.ones(3), p])
        coef = np.linalg.solve(M, vals[tri])
        area = mesh.areas[t]
        acc += area * coef[1:]
        total += area
    assert np.allclose(g[v], acc / total, atol=1e-13)


def test_averaged_recovery_mixed_partial_of_xy(regular10):
    space = FESpace(regular10, 1)
    u = interpolate(space, lambda x, y: x * y)
    got = recover_hessian(u, "zz_zz").values
    interior = (np.abs(regular10.nodes - 0.5) <= 0.3 + 1e-9).all(axis=1)
    assert np.abs(got[interior][:, 1] - 1.0).max() < 1e-12
    assert np.abs(got[interior][:, 2] - 1.0).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-10, 10, allow_nan=False), b=st.floats(-10, 10, allow_nan=False))
def test_recovery_is_linear(a, b):
    mesh = generate_uniform("regular", 6)
    space = FESpace(mesh, 1)
    u = interpolate(space, lambda x, y: np.sin(x) * np.cos(y))
    w = interpolate(space, lambda x, y: x**3 - y**2)
    combo = Field(space, a * u.values + b * w.values)
    lhs = recover_hessian(combo).values
    rhs = a * recover_hessian(u).values + b * recover_hessian(w).values
    scale = max(1.0, np.abs(rhs).max())
    assert np.abs(lhs - rhs).max() < 1e-9 * scale


@pytest.mark.parametrize("method", METHODS)
def test_constants_are_annihilated(method):
    mesh = generate_uniform("crisscross", 8)
    space = FESpace(mesh, 1)
    ones = Field(space, np.ones(space.dof_count))
    got = recover_hessian(ones, method).values
    assert np.abs(got).max() < 1e-10  # zero row sums at the h^-2 scale


@pytest.mark.parametrize("method", METHODS)
def test_hessian_matrices_match_field_path(method):
    mesh = generate_uniform("unionjack", 6)
    space = FESpace(mesh, 1)
    u = interpolate(space, lambda x, y: np.exp(x - 0.3 * y))
    direct = recover_hessian(u, method).values
    mats = hessian_matrices(space, method)
    for i, c in enumerate(("hxx", "hxy", "hyx", "hyy")):
        # two-stage application vs assembled product differ only in rounding
        assert np.allclose(direct[:, i], mats[c] @ u.values,
                           rtol=1e-12, atol=1e-12)


def test_gradient_field_matches_composition(regular10):
    space = FESpace(regular10, 1)
    u = interpolate(space, lambda x, y: np.sin(2 * x + y))
    g = ppr_gradient(u)
    hh = ppr_hessian(u).values
    gx_again = recover_hessian(Field(space, g.values[:, 0])).values
    # hxx and hxy of u are the gradient recovery applied to gx
    gfield = ppr_gradient(Field(space, g.values[:, 0])).values
    assert np.array_equal(hh[:, 0], gfield[:, 0])
    assert np.array_equal(hh[:, 1], gfield[:, 1])
    assert gx_again.shape == (space.dof_count, 4)


def test_stencil_apply_and_weight_sum(regular10):
    space = FESpace(regular10, 1)
    v = center_vertex(regular10)
    stencil = extract_stencil(space, 1, "ppr_ppr", v, "hxx")
    assert stencil.h_power == 2
    assert stencil.h == pytest.approx(H)
    assert stencil.weight_sum() == pytest.approx(0.0, abs=1e-9)
    u = interpolate(space, lambda x, y: x**2)
    assert stencil.apply(u.values) == pytest.approx(2.0, abs=1e-9)


def test_stencil_json_roundtrip(chevron10):
    stencil = extract_stencil(chevron10, 1, "ppr_ppr",
                              center_vertex(chevron10), "hxx")
    text = stencil.to_json()
    json.loads(text)  # well-formed
    back = Stencil.from_json(text)
    assert back.center == stencil.center
    assert back.entries == stencil.entries


def test_stencil_drop_tolerance(regular10):
    v = center_vertex(regular10)
    sparse = extract_stencil(regular10, 1, "ppr_ppr", v, "hxx")
    full = extract_stencil(regular10, 1, "ppr_ppr", v, "hxx", drop_tol=0.0)
    assert len(full.entries) >= len(sparse.entries)
    kept = dict(sparse.entries)
    for node, w in full.entries:
        if node not in kept:
            assert abs(w) <= 1e-12 * max(abs(x) for _, x in full.entries)


def test_gradient_stencil_h_power(regular10):
    stencil = extract_stencil(regular10, 1, "ppr_ppr",
                              center_vertex(regular10), "gx")
    assert stencil.h_power == 1


def test_taylor_residual_scales_quadratically():
    # recovered d2/dx2 of x^4 at the center carries an 8 h^2 Taylor residual
    errs, hs = [], []
    for n in (8, 16, 32):
        mesh = generate_uniform("regular", n)
        space = FESpace(mesh, 1)
        u = interpolate(space, lambda x, y: x**4)
        v = center_vertex(mesh)
        got = recover_hessian(u).values[v, 0]
        errs.append(abs(got - 12 * mesh.nodes[v, 0] ** 2))
        hs.append(mesh.grid_spacing)
    slope = math.log(errs[0] / errs[1]) / math.log(hs[0] / hs[1])
    assert slope == pytest.approx(2.0, abs=0.05)
    slope = math.log(errs[1] / errs[2]) / math.log(hs[1] / hs[2])
    assert slope == pytest.approx(2.0, abs=0.05)
    assert errs[0] / hs[0] ** 2 == pytest.approx(8.0, rel=1e-9)


def test_single_triangle_cannot_support_recovery():
    mesh = Triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                         np.array([[0, 1, 2]]), np.ones(3, dtype=bool))
    space = FESpace(mesh, 1)
    with pytest.raises(RankDeficientError):
        recover_hessian(interpolate(space, lambda x, y: x * y))


def test_normalize_method():
    assert normalize_method("ppr-ppr") == "ppr_ppr"
    assert normalize_method("PPR") == "ppr_ppr"
    assert normalize_method(" zz_zz ") == "zz_zz"
    with pytest.raises(RecoveryError):
        normalize_method("sobolev")


def test_component_list_is_fixed():
    assert COMPONENTS == ("gx", "gy", "hxx", "hxy", "hyx", "hyy")
    assert METHODS == ("ppr_ppr", "zz_zz", "zz_ppr", "qf")


@pytest.mark.parametrize("method", ["zz_zz", "zz_ppr", "qf"])
def test_comparison_methods_reject_quadratic_elements(method, regular10):
    space = FESpace(regular10, 2)
    u = interpolate(space, lambda x, y: x * y)
    with pytest.raises(RecoveryError):
        recover_hessian(u, method)


def test_extract_stencil_bad_inputs(regular10):
    with pytest.raises(RecoveryError):
        extract_stencil(regular10, 1, "ppr_ppr", 10**6, "hxx")
    with pytest.raises(RecoveryError):
        extract_stencil(regular10, 1, "ppr_ppr", 0, "hzz")
    with pytest.raises(RecoveryError):
        extract_stencil(regular10, 1, "qf", 0, "gx")  # no gradient stage


def test_vector_field_rejected(regular10):
    space = FESpace(regular10, 1)
    u = interpolate(space, lambda x, y: x)
    g = ppr_gradient(u)
    with pytest.raises(RecoveryError):
        recover_hessian(g)

import numpy as np
import pytest

from hdgmg.basis import (
    bary_eval,
    barycentric_weights,
    diff_matrix,
    eval_matrix,
    gl_nodes_weights,
    gll_nodes_weights,
    quad_2d,
    reference_element,
)


def rule_integral(basis, exponent):
    return float(basis.quad_weights @ basis.nodes**exponent)


def exact_monomial_integral(exponent):
    # int_{-1}^{1} x^k dx
    return 0.0 if exponent % 2 else 2.0 / (exponent + 1)


def test_gll_two_points():
    b = gll_nodes_weights(1)
    np.testing.assert_allclose(b.nodes, [-1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(b.quad_weights, [1.0, 1.0], atol=1e-15)


def test_gll_three_points_simpson_like():
    b = gll_nodes_weights(2)
    np.testing.assert_allclose(b.nodes, [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(b.quad_weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-15)


def test_gll_exactness_p6():
    b = gll_nodes_weights(6)
    assert abs(rule_integral(b, 11)) < 1e-13
    assert abs(rule_integral(b, 10) - 2.0 / 11.0) < 1e-13


def test_gl_midpoint():
    b = gl_nodes_weights(0)
    np.testing.assert_allclose(b.nodes, [0.0], atol=1e-15)
    np.testing.assert_allclose(b.quad_weights, [2.0], atol=1e-15)


def test_gl_two_points():
    b = gl_nodes_weights(1)
    np.testing.assert_allclose(b.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(b.quad_weights, [1.0, 1.0], atol=1e-15)


def test_gl_exactness_p4():
    b = gl_nodes_weights(4)
    assert abs(rule_integral(b, 9)) < 1e-13
    assert abs(rule_integral(b, 8) - 2.0 / 9.0) < 1e-13


@pytest.mark.parametrize("p", range(1, 9))
def test_quadrature_exactness_sweep(p):
    gll = gll_nodes_weights(p)
    for k in range(2 * p):
        exact = exact_monomial_integral(k)
        assert abs(rule_integral(gll, k) - exact) < 1e-12 * max(1.0, abs(exact))
    gl = gl_nodes_weights(p)
    for k in range(2 * p + 2):
        exact = exact_monomial_integral(k)
        assert abs(rule_integral(gl, k) - exact) < 1e-12 * max(1.0, abs(exact))


@pytest.mark.parametrize("p", range(1, 9))
def test_basic_invariants(p):
    for b in (gll_nodes_weights(p), gl_nodes_weights(p)):
        assert np.all(np.diff(b.nodes) > 0)
        assert b.nodes[0] >= -1.0 and b.nodes[-1] <= 1.0
        assert np.all(b.quad_weights > 0)
        assert abs(b.quad_weights.sum() - 2.0) < 1e-13
    gll = gll_nodes_weights(p)
    assert gll.nodes[0] == -1.0 and gll.nodes[-1] == 1.0
    gl = gl_nodes_weights(p)
    assert gl.nodes[0] > -1.0 and gl.nodes[-1] < 1.0


def test_gll_rejects_order_zero():
    with pytest.raises(ValueError):
        gll_nodes_weights(0)


def test_bary_weights_products():
    # direct product formula on {-1, 1}: {-1/2, 1/2}, normalized to {1, -1}
    np.testing.assert_allclose(gll_nodes_weights(1).bary_weights, [1.0, -1.0], atol=1e-15)
    # on {-1, 0, 1}: proportional to {1, -2, 1}
    w = gll_nodes_weights(2).bary_weights
    np.testing.assert_allclose(w / w[0], [1.0, -2.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("p", range(1, 9))
@pytest.mark.parametrize("family", ["gll", "gl"])
def test_bary_weights_alternate_in_sign(p, family):
    b = gll_nodes_weights(p) if family == "gll" else gl_nodes_weights(p)
    signs = np.sign(b.bary_weights)
    np.testing.assert_array_equal(signs, (-1.0) ** np.arange(p + 1))


@pytest.mark.parametrize("p", range(2, 9))
def test_gll_bary_weights_match_closed_form(p):
    # up to a common scale, W_j = (-1)^j sqrt(w_j) with the GLL weights
    b = gll_nodes_weights(p)
    ref = (-1.0) ** np.arange(p + 1) * np.sqrt(b.quad_weights)
    ratio = b.bary_weights / ref
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_bary_eval_partition_of_unity():
    b = gll_nodes_weights(5)
    for x in np.linspace(-1, 1, 17):
        assert abs(bary_eval(b, np.ones(6), x) - 1.0) < 1e-13


def test_bary_eval_nodal():
    b = gll_nodes_weights(4)
    for k in range(5):
        vals = np.zeros(5)
        vals[k] = 1.0
        assert bary_eval(b, vals, b.nodes[k]) == 1.0


def test_bary_eval_cubic():
    b = gll_nodes_weights(4)
    vals = b.nodes**3
    assert abs(bary_eval(b, vals, 0.3) - 0.027) < 1e-13


@pytest.mark.parametrize("p", range(1, 9))
def test_bary_eval_reproduces_monomials(p):
    b = gll_nodes_weights(p)
    rng = np.random.default_rng(42)
    points = rng.uniform(-1, 1, size=50)
    for k in range(p + 1):
        vals = b.nodes**k
        for x in points:
            assert abs(bary_eval(b, vals, x) - x**k) < 1e-11


def test_bary_eval_stable_near_nodes():
    # Runge-style data evaluated within 1e-13 of the nodes must stay finite
    b = gll_nodes_weights(8)
    vals = 1.0 / (1.0 + 25.0 * b.nodes**2)
    for x0 in b.nodes:
        for eps in (-1e-13, 1e-13):
            x = np.clip(x0 + eps, -1.0, 1.0)
            assert np.isfinite(bary_eval(b, vals, x))


def test_eval_matrix_identity_at_own_nodes():
    b = gll_nodes_weights(6)
    V = eval_matrix(b, b.nodes)
    np.testing.assert_allclose(V, np.eye(7), atol=1e-13)


def test_eval_matrix_rows_sum_to_one():
    b = gll_nodes_weights(5)
    V = eval_matrix(b, np.linspace(-1, 1, 11))
    np.testing.assert_allclose(V.sum(axis=1), 1.0, atol=1e-13)


def test_eval_matrix_gll_to_gl_quintic():
    b = gll_nodes_weights(5)
    gl = gl_nodes_weights(5)
    V = eval_matrix(b, gl.nodes)
    np.testing.assert_allclose(V @ b.nodes**5, gl.nodes**5, atol=1e-12)


def test_diff_matrix_exact_for_cubics():
    b = gll_nodes_weights(4)
    D = diff_matrix(b)
    np.testing.assert_allclose(D @ b.nodes**3, 3 * b.nodes**2, atol=1e-12)


def test_quad_2d_area():
    ref = reference_element(2)
    samples = np.ones(ref.n_quad)
    assert abs(quad_2d(ref, samples, 0.25, 0.5) - 0.125) < 1e-14


def test_quad_2d_linear():
    # int_{[0,1]^2} x = 1/2 on a single element
    ref = reference_element(2)
    x, _ = ref.quad_points_on(0.0, 0.0, 1.0, 1.0)
    assert abs(quad_2d(ref, x, 1.0, 1.0) - 0.5) < 1e-14


def test_quad_2d_biquadratic():
    # int_{[0,1]^2} x^2 y^2 = 1/9 with the p=3 GL rule
    ref = reference_element(3)
    x, y = ref.quad_points_on(0.0, 0.0, 1.0, 1.0)
    assert abs(quad_2d(ref, x**2 * y**2, 1.0, 1.0) - 1.0 / 9.0) < 1e-13


def test_reference_element_tensor_sizes():
    ref = reference_element(3)
    assert ref.n_nodes == 16
    assert ref.n_quad == 16
    assert ref.jacobian(0.5, 0.25) == 0.5 * 0.25 / 4.0


def test_reference_element_gll_quadrature_option():
    ref = reference_element(3, quad_family="gll")
    assert ref.quad.family == "gll"
    with pytest.raises(ValueError):
        reference_element(3, quad_family="newton-cotes")

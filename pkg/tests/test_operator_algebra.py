import json

import numpy as np
import pytest

from kmsprobe import operator_algebra as oa


def op_of(name, n=2):
    return oa.induce_operator(oa.catalogue(name, n))


E = np.eye(2)


# --- part maps and the catalogue -------------------------------------------

def test_sym_applied_to_off_diagonal():
    out = oa.catalogue("sym", 2)(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert out.reshape(2, 2).tolist() == [[0.0, 0.5], [0.5, 0.0]]


def test_dev_sym_formula():
    P = np.random.default_rng(0).standard_normal((2, 2))
    a, b = P[0, 0] - P[1, 1], P[0, 1] + P[1, 0]
    want = 0.5 * np.array([[a, b], [b, -a]])
    assert np.allclose(oa.catalogue("dev_sym", 2)(P).reshape(2, 2), want, atol=1e-15)


def test_skew_plus_trace_on_identity():
    out = oa.catalogue("skew_plus_trace(1,1)", 2)(np.eye(2)).reshape(2, 2)
    assert np.allclose(out, np.eye(2), atol=1e-15)


def test_catalogue_errors():
    with pytest.raises((KeyError, ValueError)):
        oa.catalogue("nosuch", 2)
    with pytest.raises(ValueError):
        oa.catalogue("skew_plus_trace(0,1)", 2)
    with pytest.raises(ValueError):
        oa.catalogue("skew_plus_trace(1,0)", 2)


@pytest.mark.parametrize("name", oa.CATALOGUE_NAMES)
def test_catalogue_linear_and_shaped(name):
    for n in (2, 3):
        A = oa.catalogue(name, n)
        assert A.matrix.shape == (A.N, A.m * A.n)
        assert np.all(np.isfinite(A.matrix))
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((2, n, n))
        al, be = rng.standard_normal(2)
        assert np.allclose(A(al * X + be * Y), al * A(X) + be * A(Y), atol=1e-13)


def test_partmap_json_roundtrip(tmp_path):
    A = oa.catalogue("skew_plus_trace(2,0.5)", 3)
    B = oa.PartMap.from_dict(json.loads(json.dumps(A.to_dict())))
    assert np.array_equal(A.matrix, B.matrix) and (A.m, A.n, A.N) == (B.m, B.n, B.N)
    path = tmp_path / "a.json"
    path.write_text(json.dumps(A.to_dict()))
    assert np.array_equal(oa.PartMap.from_json(path).matrix, A.matrix)


def test_apply_field_matches_pointwise():
    A = oa.catalogue("dev_sym", 2)
    data = np.random.default_rng(2).standard_normal((2, 2, 5, 3))
    out = A.apply_field(data)
    assert np.allclose(out[..., 4, 1], A(data[..., 4, 1]).reshape(out.shape[:-2]), atol=1e-15)


# --- induced operators and symbols -----------------------------------------

def test_sym_coefficient():
    assert np.array_equal(op_of("sym").coeffs[0], [[1, 0], [0, 0.5], [0, 0.5], [0, 0]])


def test_dev_sym_coefficient():
    assert np.allclose(op_of("dev_sym").coeffs[0],
                       [[0.5, 0], [0, 0.5], [0, 0.5], [-0.5, 0]], atol=1e-15)


@pytest.mark.parametrize("n", (2, 3))
def test_identity_coeffs_are_gradient_coeffs(n):
    op = op_of("identity", n)
    for Ai, Ei in zip(op.coeffs, op.gradient_coeffs):
        assert np.array_equal(Ai, Ei)
    for i, Ei in enumerate(op.gradient_coeffs):
        for j in range(n):
            v = np.eye(n)[j]
            assert np.array_equal(Ei @ v, np.outer(v, np.eye(n)[i]).reshape(-1))


@pytest.mark.parametrize("name", oa.CATALOGUE_NAMES)
def test_coefficients_match_part_map(name):
    A = oa.catalogue(name, 3)
    op = oa.induce_operator(A)
    for i in range(3):
        for j in range(3):
            v = np.eye(3)[j]
            assert np.allclose(op.coeffs[i] @ v, A(np.outer(v, np.eye(3)[i])), atol=1e-15)


def test_symbol_examples():
    op = op_of("sym")
    assert np.array_equal(oa.symbol(op, E[0]).matrix @ E[0], [1, 0, 0, 0])
    assert not np.any(oa.symbol(op, [0.0, 0.0]).matrix)
    xi = np.array([0.3, -1.2])
    assert np.allclose(oa.symbol(op, 2 * xi).matrix, 2 * oa.symbol(op, xi).matrix)
    d = oa.symbol(op_of("dev_sym"), np.array([1, 1j])).matrix @ np.array([1, -1j])
    assert np.max(np.abs(d)) == 0
    with pytest.raises(ValueError):
        oa.symbol(op, [1.0, 0.0, 0.0])


def test_pure_tensor_examples():
    assert np.array_equal(oa.pure_tensor(op_of("sym"), E[0], E[1]), [0, 0.5, 0.5, 0])
    assert not np.any(oa.pure_tensor(op_of("sym"), np.zeros(2), E[1]))
    assert np.array_equal(oa.pure_tensor(op_of("identity"), E[1], E[0]),
                          np.outer(E[1], E[0]).reshape(-1))


@pytest.mark.parametrize("name", oa.CATALOGUE_NAMES)
def test_pure_tensor_consistency(name):
    for n in (2, 3):
        A = oa.catalogue(name, n)
        op = oa.induce_operator(A)
        rng = np.random.default_rng(hash(name) % 2 ** 32)
        vs, xis = rng.standard_normal((2, 1000, n))
        err = max(np.max(np.abs(oa.pure_tensor(op, v, x) - A(np.outer(v, x))))
                  for v, x in zip(vs, xis))
        assert err <= 1e-12


@pytest.mark.parametrize("name,dim", [("grad", 4), ("identity", 4), ("sym", 3),
                                      ("dev_grad", 3), ("dev_sym", 2),
                                      ("skew_plus_trace(1,1)", 2)])
def test_span_dims(name, dim):
    assert oa.pure_tensor_span_dim(op_of(name)) == dim


# --- ellipticity --------------------------------------------------------------

@pytest.mark.parametrize("name,want", [("sym", True), ("dev_sym", True), ("grad", True),
                                       ("dev_grad", True), ("skew_plus_trace(1,1)", True),
                                       ("zero", False), ("trace", False), ("skew", False),
                                       ("dev", True)])
def test_is_elliptic(name, want):
    op = op_of(name)
    cert = oa.is_elliptic(op)
    assert cert.elliptic is want
    if not want:
        xi, v = cert.witness
        assert np.linalg.norm(xi) > 0 and np.linalg.norm(v) > 0
        assert cert.witness_residual(op) <= 10 * cert.tolerance
    else:
        assert cert.min_sigma > 0.1


@pytest.mark.parametrize("name", ["sym", "dev_sym", "grad", "trace"])
def test_is_elliptic_3d(name):
    assert oa.is_elliptic(op_of(name, 3)).elliptic is (name != "trace")


def test_c_elliptic_dev_sym_witness():
    op = op_of("dev_sym")
    cert = oa.is_c_elliptic(op)
    assert not cert.c_elliptic and not cert.heuristic and cert.span_dim == 2
    xi, v = cert.nullvector_witness
    assert np.allclose(xi, [1, 1j]) and np.allclose(v, [1, -1j])
    assert cert.telephone_residual(op) <= 10 * cert.tolerance
    re_xi, im_xi, re_v, im_v = cert.parts()
    S = lambda x: oa.symbol(op, x).matrix
    assert np.allclose(S(re_xi) @ re_v, S(im_xi) @ im_v, atol=1e-12)
    assert np.allclose(S(im_xi) @ re_v, -S(re_xi) @ im_v, atol=1e-12)


def test_c_elliptic_skew_plus_trace_witness():
    op = op_of("skew_plus_trace(1,1)")
    cert = oa.is_c_elliptic(op)
    assert not cert.c_elliptic
    xi, v = cert.nullvector_witness
    assert np.max(np.abs(oa.symbol(op, xi).matrix @ v)) <= 1e-12
    assert cert.telephone_residual(op) <= 10 * cert.tolerance


@pytest.mark.parametrize("name", ["sym", "grad", "dev_grad"])
def test_c_elliptic_positive(name):
    cert = oa.is_c_elliptic(op_of(name))
    assert cert.c_elliptic and cert.nullvector_witness is None


def test_not_elliptic_gives_real_witness():
    op = op_of("trace")
    cert = oa.is_c_elliptic(op)
    assert not cert.c_elliptic
    xi, v = cert.nullvector_witness
    assert np.max(np.abs(oa.symbol(op, xi).matrix @ v)) <= 1e-12


@pytest.mark.parametrize("name,want", [("dev_sym", True), ("sym", True), ("grad", True),
                                       ("skew_plus_trace(1,1)", False), ("trace", False)])
def test_c_elliptic_3d_heuristic(name, want):
    op = op_of(name, 3)
    cert = oa.is_c_elliptic(op)
    assert cert.heuristic
    assert cert.c_elliptic is want
    if not want:
        xi, v = cert.nullvector_witness
        rel = np.linalg.norm(oa.symbol(op, xi).matrix @ v) / (np.linalg.norm(xi) * np.linalg.norm(v))
        assert rel <= 1e-6


# --- cancellation and factorization -------------------------------------------

@pytest.mark.parametrize("name,want", [("sym", True), ("dev_sym", False), ("grad", True),
                                       ("dev_grad", True), ("skew_plus_trace(1,1)", False),
                                       ("zero", True)])
def test_is_cancelling(name, want):
    assert oa.is_cancelling(op_of(name)) is want


def test_factor_identity_is_identity():
    L = oa.factor_through(op_of("identity"))
    assert L is not None and np.allclose(L, np.eye(4), atol=1e-12)


def test_factor_invertible_part_map():
    rng = np.random.default_rng(9)
    M = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    op = oa.induce_operator(oa.PartMap(2, 2, 4, M))
    L = oa.factor_through(op)
    assert L is not None and np.allclose(L, np.linalg.inv(M), atol=1e-10)


@pytest.mark.parametrize("name", ["sym", "dev_sym", "dev_grad", "skew_plus_trace(1,1)"])
def test_non_injective_maps_do_not_factor(name):
    # the stacked E matrix is a permutation, so the least squares residual
    # is the norm of the projector onto ker A, which equals 1
    L, res = oa.factorization_residual(op_of(name))
    assert res == pytest.approx(1.0, abs=1e-10)
    assert oa.factor_through(op_of(name)) is None


# --- almost complementary part -------------------------------------------------

def test_acp_sym():
    A = oa.catalogue("sym", 2)
    acp = oa.almost_complementary(oa.induce_operator(A))
    assert acp.span_dim == 3 and acp.dependent_index == (2, 1)
    assert np.allclose(acp.G, [[0, -1], [1, 0]], atol=1e-12)
    assert np.allclose(acp.gamma, [0, 0, 1, 0], atol=1e-12)
    assert acp.coefficients[(1, 2)] == pytest.approx(1.0)
    assert acp.coefficients[(1, 1)] == pytest.approx(0.0, abs=1e-12)
    X = np.random.default_rng(3).standard_normal((2, 2))
    assert np.allclose(X - (acp.L @ A(X)).reshape(2, 2), X[1, 0] * acp.G, atol=1e-12)


def test_acp_grad():
    acp = oa.almost_complementary(op_of("grad"))
    assert acp.span_dim == 4 and acp.dependent_index is None
    assert np.array_equal(acp.G, np.eye(2))
    assert np.array_equal(acp.gamma, np.ones(4))


def test_acp_refused():
    with pytest.raises(oa.NotCEllipticError):
        oa.almost_complementary(op_of("dev_sym"))
    with pytest.raises(oa.NotCEllipticError):
        oa.almost_complementary(op_of("skew_plus_trace(1,1)"))


@pytest.mark.parametrize("name", ["sym", "grad", "dev_grad"])
def test_acp_residual_scaled(name):
    A = oa.catalogue(name, 2)
    acp = oa.almost_complementary(oa.induce_operator(A))
    rng = np.random.default_rng(11)
    for X in rng.standard_normal((1000, 2, 2)) * 10.0 ** rng.integers(-3, 4, (1000, 1, 1)):
        assert np.linalg.norm(acp.residual(A, X)) <= 1e-10 * np.linalg.norm(X)
    assert oa.acp_check_residual(acp, A) <= 1e-10
    json.dumps(acp.to_dict())


def test_acp_random_span3_map():
    # a random map with the same kernel as sym is still C-elliptic
    rng = np.random.default_rng(5)
    M = rng.standard_normal((4, 4)) @ oa.catalogue("sym", 2).matrix
    A = oa.PartMap(2, 2, 4, M)
    acp = oa.almost_complementary(oa.induce_operator(A))
    assert abs(np.linalg.det(acp.G)) >= 1e-8
    assert oa.acp_check_residual(acp, A) <= 1e-9


def test_classify_keys():
    d = oa.classify(oa.catalogue("dev_sym", 2))
    assert d["elliptic"] and not d["c_elliptic"] and d["span_dim"] == 2
    assert d["cancelling"] is False and d["factorizes"] is False
    json.dumps(d, default=float)

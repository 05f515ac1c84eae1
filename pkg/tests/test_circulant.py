import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tomogcv import circulant as C
from tomogcv.errors import SpectralError

rng = np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# dense oracles, built straight from the defining formulas
# ---------------------------------------------------------------------------


def dense_circulant(row):
    p = len(row)
    return np.array([[row[(j - i) % p] for j in range(p)] for i in range(p)])


def dense_basis(p):
    """Real orthogonal eigenbasis in canonical frequency order.

    Columns: constant, cosines at frequencies 1..ceil(p/2)-1, the alternating
    column at p/2 for even p, and sines at frequencies p/2 < m <= p-1 (the
    sine at index m equals minus the sine at frequency p - m).
    """
    j = np.arange(p)
    v = np.zeros((p, p))
    v[:, 0] = 1.0 / np.sqrt(p)
    for k in range(1, (p + 1) // 2):
        v[:, k] = np.sqrt(2.0 / p) * np.cos(2 * np.pi * k * j / p)
        v[:, p - k] = np.sqrt(2.0 / p) * np.sin(2 * np.pi * (p - k) * j / p)
    if p % 2 == 0:
        v[:, p // 2] = (-1.0) ** j / np.sqrt(p)
    return v


def eig_by_cosine_sum(row):
    """Eigenvalues from the direct cosine-sum formula."""
    p = len(row)
    ks = np.arange(p)
    d = np.full(p, row[0], dtype=float)
    for j in range(1, (p + 1) // 2):
        d += 2.0 * row[j] * np.cos(2 * np.pi * ks * j / p)
    if p % 2 == 0:
        d += row[p // 2] * (-1.0) ** ks
    return d


def symmetric_row(p, seed):
    r = np.random.default_rng(seed).standard_normal(p)
    return 0.5 * (r + np.roll(r[::-1], 1))


def dense_bccb(gen):
    p, q = gen.shape
    m = np.empty((p * q, p * q))
    for bl in range(p):
        for br in range(p):
            block = dense_circulant(gen[(br - bl) % p])
            m[bl * q:(bl + 1) * q, br * q:(br + 1) * q] = block
    return m


def random_point_symmetric(p, q, seed):
    g = np.random.default_rng(seed).standard_normal((p, q))
    return C.point_symmetrize(g)


def random_axis_symmetric(p, q, seed):
    g = random_point_symmetric(p, q, seed)
    return 0.5 * (g + g[(p - np.arange(p)) % p, :])


# ---------------------------------------------------------------------------
# 1D eigenvalues
# ---------------------------------------------------------------------------


def test_identity_circulant_spectrum():
    d = C.eig_sym_circ_1d(C.SymCirc1D([1.0, 0.0, 0.0, 0.0]))
    assert np.array_equal(d.eigenvalues, np.ones(4))


def test_eig_circ_211():
    d = C.eig_sym_circ_1d(C.SymCirc1D([2.0, 1.0, 1.0]))
    np.testing.assert_allclose(d.eigenvalues, [4.0, 1.0, 1.0], atol=1e-12)


def test_eig_circ_0101():
    d = C.eig_sym_circ_1d(C.SymCirc1D([0.0, 1.0, 0.0, 1.0]))
    np.testing.assert_allclose(d.eigenvalues, [2.0, 0.0, -2.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("p", range(2, 13))
def test_eig_matches_cosine_sum(p):
    row = symmetric_row(p, p)
    d = C.eig_sym_circ_1d(C.SymCirc1D(row)).eigenvalues
    np.testing.assert_allclose(d, eig_by_cosine_sum(row), atol=1e-12)


@pytest.mark.parametrize("p", range(2, 13))
def test_eig_pair_equality(p):
    d = C.eig_sym_circ_1d(C.SymCirc1D(symmetric_row(p, 7 * p))).eigenvalues
    for k in range(1, (p - 1) // 2 + 1):
        assert d[k] == d[p - k]


def test_asymmetric_row_rejected():
    with pytest.raises(ValueError):
        C.SymCirc1D([1.0, 2.0, 3.0])


def test_eig_mean_equals_first_entry():
    row = symmetric_row(9, 0)
    d = C.eig_sym_circ_1d(C.SymCirc1D(row)).eigenvalues
    assert abs(d.mean() - row[0]) < 1e-12


# ---------------------------------------------------------------------------
# 1D spectral decomposition against the dense oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("p", range(2, 17))
def test_spectral_decomposition_dense(p):
    row = symmetric_row(p, 100 + p)
    cm = dense_circulant(row)
    v = dense_basis(p)
    d = C.eig_sym_circ_1d(C.SymCirc1D(row)).eigenvalues
    assert np.abs(v @ np.diag(d) @ v.T - cm).max() < 1e-10
    assert np.abs(v.T @ v - np.eye(p)).max() < 1e-12


# ---------------------------------------------------------------------------
# fast basis application
# ---------------------------------------------------------------------------


def test_apply_vt_constant_vector():
    a = C.apply_vt_1d(np.ones(4))
    np.testing.assert_allclose(a, [2.0, 0.0, 0.0, 0.0], atol=1e-14)


def test_apply_vt_alternating_vector():
    a = C.apply_vt_1d(np.array([1.0, -1.0, 1.0, -1.0]))
    np.testing.assert_allclose(a, [0.0, 0.0, 2.0, 0.0], atol=1e-14)


def test_apply_v_inverts_constant_coefficient():
    x = C.apply_v_1d(np.array([2.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(x, np.ones(4), atol=1e-14)


@pytest.mark.parametrize("p", [5, 6, 7, 8])
def test_round_trip(p):
    x = rng.standard_normal(p)
    np.testing.assert_allclose(C.apply_v_1d(C.apply_vt_1d(x)), x, atol=1e-12)
    np.testing.assert_allclose(C.apply_vt_1d(C.apply_v_1d(x)), x, atol=1e-12)


@pytest.mark.parametrize("p", [6, 7])
def test_apply_matches_dense(p):
    x = rng.standard_normal(p)
    v = dense_basis(p)
    np.testing.assert_allclose(C.apply_vt_1d(x), v.T @ x, atol=1e-12)
    np.testing.assert_allclose(C.apply_v_1d(x), v @ x, atol=1e-12)


@given(st.integers(min_value=2, max_value=32), st.integers())
@settings(max_examples=40, deadline=None)
def test_norm_preserved_property(p, seed):
    x = np.random.default_rng(seed % 2**32).standard_normal(p)
    assert abs(np.linalg.norm(C.apply_vt_1d(x)) - np.linalg.norm(x)) < 1e-10 * (1 + np.linalg.norm(x))
    assert abs(np.linalg.norm(C.apply_v_1d(x)) - np.linalg.norm(x)) < 1e-10 * (1 + np.linalg.norm(x))


# ---------------------------------------------------------------------------
# BCCB
# ---------------------------------------------------------------------------


def test_bccb_identity():
    g = np.zeros((3, 4))
    g[0, 0] = 1.0
    d = C.eig_bccb(C.BccbGenerator(g))
    assert np.array_equal(d.eigenvalues, np.ones((3, 4)))


def test_bccb_2x2_example():
    d = C.eig_bccb(C.BccbGenerator([[2.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(d.eigenvalues.ravel(), [4.0, 2.0, 2.0, 0.0], atol=1e-12)


def test_bccb_double_sum_oracle():
    for p, q in [(3, 4), (4, 4), (5, 6), (6, 5)]:
        g = random_point_symmetric(p, q, 10 * p + q)
        d = C.eig_bccb(C.BccbGenerator(g)).eigenvalues
        ks, js = np.meshgrid(np.arange(p), np.arange(q), indexing="ij")
        direct = np.zeros((p, q), dtype=complex)
        for l in range(p):
            for m in range(q):
                direct += g[l, m] * np.exp(-2j * np.pi * (ks * l / p + js * m / q))
        np.testing.assert_allclose(d, direct.real, atol=1e-10)


def test_bccb_matches_dense_eigensolver_multiset():
    g = random_point_symmetric(4, 4, 5)
    d = np.sort(C.eig_bccb(C.BccbGenerator(g)).eigenvalues.ravel())
    dense = np.sort(np.linalg.eigvalsh(dense_bccb(g)))
    np.testing.assert_allclose(d, dense, atol=1e-10)


def test_bccb_asymmetric_raises():
    g = np.arange(12.0).reshape(3, 4)
    with pytest.raises(SpectralError):
        C.eig_bccb(C.BccbGenerator(g))


def test_bccb_mean_equals_first_element():
    g = random_point_symmetric(4, 6, 2)
    d = C.eig_bccb(C.BccbGenerator(g)).eigenvalues
    assert abs(d.mean() - g[0, 0]) < 1e-12


def test_apply_vt_2d_constant_array():
    x = np.full((4, 4), 2.5)
    a = C.apply_vt_2d(x)
    assert abs(a[0, 0] - 4.0 * 2.5) < 1e-12  # sqrt(pq) * mean
    a[0, 0] = 0.0
    assert np.abs(a).max() < 1e-12


def test_apply_2d_round_trip():
    x = rng.standard_normal((6, 8))
    np.testing.assert_allclose(C.apply_v_2d(C.apply_vt_2d(x)), x, atol=1e-12)


def test_apply_vt_2d_matches_kronecker_dense():
    x = rng.standard_normal((4, 4))
    w = np.kron(dense_basis(4), dense_basis(4))
    np.testing.assert_allclose(C.apply_vt_2d(x).ravel(), w.T @ x.ravel(), atol=1e-12)
    np.testing.assert_allclose(C.apply_v_2d(x).ravel(), w @ x.ravel(), atol=1e-12)


def test_multiplication_theorem_axis_symmetric():
    # the separable real eigenbasis diagonalizes blockwise-symmetric BCCBs
    for p, q in [(4, 4), (5, 6), (6, 6)]:
        g = random_axis_symmetric(p, q, p + 2 * q)
        cm = dense_bccb(g)
        d = C.eig_bccb(C.BccbGenerator(g)).eigenvalues
        x = rng.standard_normal((p, q))
        via_v = C.apply_v_2d(d * C.apply_vt_2d(x))
        np.testing.assert_allclose(via_v.ravel(), cm @ x.ravel(), atol=1e-10)


def test_bccb_apply_exact_for_point_symmetric():
    # the complex-Fourier product is exact even when the generator is only
    # point symmetric (where the separable real basis block-diagonalizes)
    g = random_point_symmetric(4, 6, 77)
    cm = dense_bccb(g)
    spec = C.eig_bccb(C.BccbGenerator(g))
    x = rng.standard_normal((4, 6))
    np.testing.assert_allclose(C.bccb_apply(spec, x).ravel(), cm @ x.ravel(), atol=1e-10)


def test_norm_preserved_2d():
    x = rng.standard_normal((5, 7))
    assert abs(np.linalg.norm(C.apply_vt_2d(x)) - np.linalg.norm(x)) < 1e-12 * np.linalg.norm(x)

import numpy as np
import pytest
import scipy.linalg

from darkloop import linalg


def _random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def test_as_matrix_reshapes_row_major_and_is_read_only():
    m = linalg.as_matrix([1, 2, 3, 4, 5, 6], 2, 3)
    assert m.shape == (2, 3)
    assert m[1, 0] == 4
    with pytest.raises(ValueError):
        m[0, 0] = 7


def test_as_matrix_rejects_wrong_length():
    with pytest.raises(ValueError, match="2x2"):
        linalg.as_matrix([1, 2, 3], 2, 2)


def test_matmul_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_normalize_zero_vector():
    with pytest.raises(ValueError):
        linalg.normalize(np.zeros(3))


def test_hermitian_eigen_matches_reconstruction():
    rng = np.random.default_rng(1)
    h = _random_hermitian(rng, 6)
    vals, vecs = linalg.hermitian_eigen(h)
    assert np.all(np.diff(vals) >= 0)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.conj().T, h, atol=1e-12)
    np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(6), atol=1e-12)


def test_hermitian_eigen_fixes_phase():
    h = np.diag([1.0, 2.0]).astype(complex)
    _, vecs = linalg.hermitian_eigen(h)
    for k in range(2):
        lead = vecs[np.flatnonzero(np.abs(vecs[:, k]) > 1e-12)[0], k]
        assert abs(lead.imag) < 1e-15 and lead.real > 0


def test_hermitian_eigen_reports_defect():
    h = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(ValueError, match="1.000e\\+00"):
        linalg.hermitian_eigen(h)


def test_nullspace_matches_scipy():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 7)) + 1j * rng.normal(size=(3, 7))
    ours = np.column_stack(linalg.nullspace(a))
    ref = scipy.linalg.null_space(a)
    assert ours.shape == ref.shape == (7, 4)
    # same subspace: projectors agree
    np.testing.assert_allclose(ours @ ours.conj().T, ref @ ref.conj().T, atol=1e-12)
    np.testing.assert_allclose(a @ ours, 0, atol=1e-12)


def test_nullspace_edge_cases():
    assert len(linalg.nullspace(np.zeros((2, 3)))) == 3
    assert linalg.nullspace(np.eye(3)) == []
    with pytest.raises(ValueError):
        linalg.nullspace(np.eye(2), sv_tol=0)


def test_trace_distance_orthogonal_pure_states():
    rho = linalg.projector(linalg.ket(2, 0))
    sigma = linalg.projector(linalg.ket(2, 1))
    assert linalg.trace_distance(rho, sigma) == pytest.approx(1.0)
    assert linalg.trace_distance(rho, rho) == pytest.approx(0.0)


def test_expm_hermitian_matches_scipy():
    rng = np.random.default_rng(3)
    h = _random_hermitian(rng, 5)
    np.testing.assert_allclose(linalg.expm_hermitian(h, -0.3j), scipy.linalg.expm(-0.3j * h), atol=1e-12)

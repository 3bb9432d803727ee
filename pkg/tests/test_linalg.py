import numpy as np
import pytest

from keldysh_maps.linalg import (SIGMA_MINUS, SIGMA_X, SIGMA_Z, CPTPReport,
                                 apply_superop, choi_of, commutator_superop,
                                 conjugation_superop, cptp_check, dag, destroy,
                                 dissipator_superop, left_mult, matexp,
                                 matrix_from_json, matrix_to_json, right_mult,
                                 sandwich_superop, unvec,
                                 validate_density_matrix, vec)

rng = np.random.default_rng(7)


def random_matrix(dim):
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


def random_density_matrix(dim):
    a = random_matrix(dim)
    rho = a @ dag(a)
    return rho / np.trace(rho)


def test_vec_is_column_stacking():
    m = np.array([[1.0, 3.0], [2.0, 4.0]], dtype=complex)
    assert np.array_equal(vec(m), np.array([1, 2, 3, 4], dtype=complex))


def test_vec_unvec_round_trip():
    for dim in (2, 3, 5):
        m = random_matrix(dim)
        assert np.allclose(unvec(vec(m)), m)


def test_vec_rejects_non_square():
    with pytest.raises(ValueError):
        vec(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        unvec(np.zeros(5))


def test_sandwich_superop_matches_direct_product():
    a, b, rho = random_matrix(3), random_matrix(3), random_matrix(3)
    assert np.allclose(apply_superop(sandwich_superop(a, b), rho), a @ rho @ b)
    assert np.allclose(apply_superop(left_mult(a), rho), a @ rho)
    assert np.allclose(apply_superop(right_mult(b), rho), rho @ b)


def test_conjugation_superop_is_unitary_channel():
    h = random_matrix(3)
    u = matexp(-1j * (h + dag(h)))
    rho = random_density_matrix(3)
    assert np.allclose(apply_superop(conjugation_superop(u), rho),
                       u @ rho @ dag(u))
    report = cptp_check(conjugation_superop(u))
    assert report.ok


def test_dissipator_superop_matches_lindblad_form():
    jump = random_matrix(4)
    rho = random_density_matrix(4)
    direct = (jump @ rho @ dag(jump)
              - 0.5 * (dag(jump) @ jump @ rho + rho @ dag(jump) @ jump))
    assert np.allclose(apply_superop(dissipator_superop(jump), rho), direct)


def test_dissipator_annihilates_trace():
    jump = random_matrix(3)
    rho = random_density_matrix(3)
    out = apply_superop(dissipator_superop(jump), rho)
    assert abs(np.trace(out)) < 1e-12


def test_commutator_superop():
    h = random_matrix(3)
    h = h + dag(h)
    rho = random_density_matrix(3)
    assert np.allclose(apply_superop(commutator_superop(h), rho),
                       -1j * (h @ rho - rho @ h))


def test_commutator_superop_rejects_non_hermitian():
    with pytest.raises(ValueError):
        commutator_superop(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_matexp_hermitian_generator():
    h = random_matrix(4)
    h = h + dag(h)
    evals, evecs = np.linalg.eigh(h)
    expected = evecs @ np.diag(np.exp(-1j * evals)) @ dag(evecs)
    assert np.allclose(matexp(-1j * h), expected, atol=1e-12)


def test_matexp_rejects_overflow_and_nan():
    with pytest.raises(OverflowError):
        matexp(np.eye(2) * 2.0**41)
    with pytest.raises(ValueError):
        matexp(np.array([[np.nan, 0.0], [0.0, 0.0]]))


def test_destroy_matrix_elements():
    a = destroy(4)
    assert np.allclose(np.diag(a, k=1), np.sqrt([1.0, 2.0, 3.0]))
    n = dag(a) @ a
    assert np.allclose(np.diag(n), [0.0, 1.0, 2.0, 3.0])


def test_amplitude_damping_channel_is_cptp():
    # Kraus pair for decay probability p
    p = 0.3
    k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1 - p)]], dtype=complex)
    k1 = np.array([[0.0, np.sqrt(p)], [0.0, 0.0]], dtype=complex)
    superop = sandwich_superop(k0, dag(k0)) + sandwich_superop(k1, dag(k1))
    report = cptp_check(superop)
    assert report.ok
    choi = choi_of(superop)
    assert np.allclose(choi, dag(choi))


def test_transpose_map_is_not_cp():
    dim = 2
    superop = np.zeros((4, 4), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            unit = np.zeros((dim, dim), dtype=complex)
            unit[i, j] = 1.0
            superop[:, j * dim + i] = vec(unit.T)
    report = cptp_check(superop)
    assert not report.cp_ok
    assert report.tp_ok


def test_dephasing_map_choi_and_trace():
    gamma = 0.4
    pi = matexp(gamma * dissipator_superop(SIGMA_Z))
    report = cptp_check(pi)
    assert report.min_choi_eigenvalue >= -1e-12
    assert report.tp_defect <= 1e-12
    rho = random_density_matrix(2)
    out = apply_superop(pi, rho)
    # populations untouched, coherence damped by exp(-2 gamma)
    assert np.allclose(np.diag(out), np.diag(rho))
    assert np.allclose(out[0, 1], rho[0, 1] * np.exp(-2.0 * gamma))


def test_cptp_report_flags():
    good = CPTPReport(min_choi_eigenvalue=0.0, tp_defect=0.0, tol=1e-10)
    bad = CPTPReport(min_choi_eigenvalue=-1e-3, tp_defect=1e-3, tol=1e-10)
    assert good.ok and not bad.cp_ok and not bad.tp_ok


def test_validate_density_matrix():
    validate_density_matrix(random_density_matrix(3))
    with pytest.raises(ValueError):
        validate_density_matrix(np.array([[0.5, 0.0], [1.0, 0.5]]))
    with pytest.raises(ValueError):
        validate_density_matrix(np.eye(2))
    with pytest.raises(ValueError):
        validate_density_matrix(np.diag([1.5, -0.5]).astype(complex))


def test_matrix_json_round_trip():
    m = random_matrix(3)
    assert np.allclose(matrix_from_json(matrix_to_json(m)), m)
    superop = dissipator_superop(SIGMA_MINUS)
    obj = matrix_to_json(superop)
    obj["dim"] = 2  # superoperator of a 2-level system
    assert np.allclose(matrix_from_json(obj), superop)


def test_pauli_conventions():
    assert np.allclose(SIGMA_X @ SIGMA_X, np.eye(2))
    assert np.allclose(SIGMA_Z @ np.array([1.0, 0.0]), np.array([1.0, 0.0]))

"""Dense operator/superoperator algebra on vectorized density matrices.

Conventions used throughout the package:

* hbar = 1, all frequencies are angular.
* Density matrices are vectorized by column stacking, so the channel
  ``rho -> A rho B`` has the matrix representation ``kron(B.T, A)``.
* Operators and superoperators are plain complex numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITICITY_TOL = 1e-10

# Pauli matrices and ladder operators for two-level systems.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |e><g| with |e> = (1,0)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |g><e|
IDENTITY_2 = np.eye(2, dtype=complex)

# Basis states: |e> = (1, 0), |g> = (0, 1), matching sigma_z |e> = +|e>.
KET_E = np.array([1.0, 0.0], dtype=complex)
KET_G = np.array([0.0, 1.0], dtype=complex)


def destroy(dim: int) -> np.ndarray:
    """Bosonic annihilation operator truncated to ``dim`` levels."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=complex)
    dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return v.reshape((dim, dim), order="F")


def apply_superop(superop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return unvec(superop @ vec(rho))


def left_mult(a: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> a rho."""
    return np.kron(np.eye(a.shape[0]), a)


def right_mult(b: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> rho b."""
    return np.kron(b.T, np.eye(b.shape[0]))


def conjugation_superop(u: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> u rho u^dag (closed-system map)."""
    return np.kron(u.conj(), u)


def sandwich_superop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> a rho b."""
    return np.kron(b.T, a)


def dissipator_superop(jump: np.ndarray) -> np.ndarray:
    """Lindblad damping superoperator D[L] rho = L rho L^dag - {L^dag L, rho}/2."""
    jump = np.asarray(jump, dtype=complex)
    if jump.ndim != 2 or jump.shape[0] != jump.shape[1]:
        raise ValueError(f"jump operator must be square, got shape {jump.shape}")
    dim = jump.shape[0]
    ldl = dag(jump) @ jump
    eye = np.eye(dim)
    return (np.kron(jump.conj(), jump)
            - 0.5 * np.kron(eye, ldl)
            - 0.5 * np.kron(ldl.T, eye))


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator for the coherent part, rho -> -i [h, rho].

    Rejects non-Hermitian generators.
    """
    h = np.asarray(h, dtype=complex)
    defect = np.max(np.abs(h - dag(h)))
    if defect > HERMITICITY_TOL:
        raise ValueError(f"generator is not Hermitian (defect {defect:.2e})")
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def matexp(m: np.ndarray, norm_cap: float = 2.0**40) -> np.ndarray:
    """Matrix exponential by Pade approximation with scaling and squaring."""
    m = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    norm = np.linalg.norm(m, 1)
    if norm > norm_cap:
        raise OverflowError(f"matrix 1-norm {norm:.3e} exceeds scaling budget {norm_cap:.3e}")
    return scipy.linalg.expm(m)


def hermitian_eigenvalues(m: np.ndarray) -> np.ndarray:
    """Eigenvalues, using the Hermitian solver when the input is Hermitian."""
    m = np.asarray(m, dtype=complex)
    if np.max(np.abs(m - dag(m))) <= HERMITICITY_TOL:
        return np.linalg.eigvalsh(0.5 * (m + dag(m)))
    return np.linalg.eigvals(m)


def choi_of(superop: np.ndarray) -> np.ndarray:
    """Choi matrix of a superoperator, C = sum_ij E_ij (x) P(E_ij)."""
    superop = np.asarray(superop, dtype=complex)
    n2 = superop.shape[0]
    dim = int(round(np.sqrt(n2)))
    if dim * dim != n2 or superop.shape != (n2, n2):
        raise ValueError(f"not a square superoperator: shape {superop.shape}")
    choi = np.zeros((n2, n2), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            unit = np.zeros((dim, dim), dtype=complex)
            unit[i, j] = 1.0
            out = apply_superop(superop, unit)
            choi[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim] = out
    return choi


@dataclass(frozen=True)
class CPTPReport:
    """Complete-positivity and trace-preservation diagnostics of a map."""

    min_choi_eigenvalue: float
    tp_defect: float
    tol: float

    @property
    def cp_ok(self) -> bool:
        return self.min_choi_eigenvalue >= -self.tol

    @property
    def tp_ok(self) -> bool:
        return self.tp_defect <= self.tol

    @property
    def ok(self) -> bool:
        return self.cp_ok and self.tp_ok

    def to_dict(self) -> dict:
        return {
            "min_choi_eigenvalue": self.min_choi_eigenvalue,
            "tp_defect": self.tp_defect,
            "tol": self.tol,
            "cp_ok": self.cp_ok,
            "tp_ok": self.tp_ok,
        }


def cptp_check(superop: np.ndarray, tol: float = 1e-10) -> CPTPReport:
    """Check complete positivity and trace preservation of a superoperator.

    Non-CPTP maps are reported, not rejected; the caller decides.
    """
    choi = choi_of(superop)
    min_eig = float(hermitian_eigenvalues(0.5 * (choi + dag(choi))).min().real)
    dim = int(round(np.sqrt(superop.shape[0])))
    trace_row = vec(np.eye(dim)) @ superop
    tp_defect = float(np.max(np.abs(trace_row - vec(np.eye(dim)))))
    return CPTPReport(min_choi_eigenvalue=min_eig, tp_defect=tp_defect, tol=tol)


def validate_density_matrix(rho: np.ndarray,
                            herm_tol: float = 1e-12,
                            trace_tol: float = 1e-12,
                            eig_tol: float = 1e-10) -> None:
    """Raise ValueError unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    herm = np.max(np.abs(rho - dag(rho)))
    if herm > herm_tol:
        raise ValueError(f"density matrix not Hermitian (defect {herm:.2e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {tr} != 1")
    min_eig = np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min()
    if min_eig < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {min_eig:.2e}")


def matrix_to_json(m: np.ndarray) -> dict:
    """Serialize a complex matrix as row-major [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return {
        "dim": m.shape[0],
        "entries": [[float(z.real), float(z.imag)] for z in m.reshape(-1, order="C")],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    dim = int(obj["dim"])
    flat = np.array([complex(re, im) for re, im in obj["entries"]], dtype=complex)
    n = flat.size
    if n == dim * dim:
        return flat.reshape((dim, dim), order="C")
    if n == dim**4:  # superoperator serialized with its system dim
        return flat.reshape((dim * dim, dim * dim), order="C")
    raise ValueError(f"entry count {n} inconsistent with dim {dim}")

"""Second-order self-energies, their exponentiated CPTP maps, reference
Lindbladians, and the scalar error functionals built on them.

Two assembly routes are provided. The secular route keeps only diagonal
spectral overlaps phi_{k,k} and always exponentiates to a CPTP map. The
full-wave route keeps every pair of filter operators whose overlap window
is within ``k_cut`` bins of a diagonal one; it is exact at second order but
may leave the CPTP cone, which is reported and never repaired.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .filters import FilterDecomposition, operator_strength, spectral_overlap
from .linalg import (CPTPReport, commutator_superop, cptp_check, dag,
                     dissipator_superop, matexp, matrix_to_json, unvec, vec)
from .spectra import NoiseSpectrum

NEGATIVE_RATE_TOL = 1e-12


class NegativeRateError(RuntimeError):
    """A diagonal damping coefficient came out negative beyond tolerance.

    Re{2 phi_{k,k}} is an integral of a non-negative kernel against a
    non-negative spectrum, so this always signals quadrature failure.
    """


# ---------------------------------------------------------------------------
# phi bookkeeping


def _phi(cache: dict, spectrum: NoiseSpectrum, tau: float, k: int, kp: int,
         phi_table: dict | None) -> complex:
    key = (int(k), int(kp))
    if key not in cache:
        if phi_table is not None and key in phi_table:
            cache[key] = complex(phi_table[key])
        else:
            cache[key] = complex(spectral_overlap(spectrum, key[0], key[1], tau))
    return cache[key]


def _damping_rate(phi: complex, k: int) -> float:
    rate = 2.0 * phi.real
    if rate < -NEGATIVE_RATE_TOL:
        raise NegativeRateError(
            f"Re(2 phi_({k},{k})) = {rate:.3e} < 0; overlap quadrature failed")
    return max(rate, 0.0)


# ---------------------------------------------------------------------------
# Self-energy assembly


def _batch_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """kron(a_n, b_n) for stacked square matrices, shape (n, d^2, d^2)."""
    n, d, _ = a.shape
    return (a[:, :, None, :, None] * b[:, None, :, None, :]).reshape(n, d * d, d * d)


def secular_self_energy(decomp: FilterDecomposition, spectrum: NoiseSpectrum,
                        lamb_shift: bool = True,
                        phi_table: dict | None = None,
                        phi_out: dict | None = None) -> np.ndarray:
    """Diagonal-overlap self-energy sum_k Re{2 phi_kk} D[x_k] + Lamb shifts.

    ``phi_table`` supplies precomputed overlaps keyed (k, k); missing keys
    fall back to adaptive quadrature. ``phi_out`` (if a dict) collects the
    overlaps actually used.
    """
    dim = decomp.ops.shape[-1]
    cache: dict = {}
    phis = np.empty(decomp.ks.size, dtype=complex)
    rates = np.empty(decomp.ks.size)
    for i, k in enumerate(decomp.ks):
        phis[i] = _phi(cache, spectrum, decomp.tau, k, k, phi_table)
        rates[i] = _damping_rate(phis[i], int(k))
        if phi_out is not None:
            phi_out[(int(k), int(k))] = complex(phis[i])

    ops = decomp.ops
    ldl = np.einsum("nji,njk->nik", ops.conj(), ops)
    eyes = np.broadcast_to(np.eye(dim), ops.shape)
    diss = (_batch_kron(ops.conj(), ops)
            - 0.5 * _batch_kron(eyes, ldl)
            - 0.5 * _batch_kron(ldl.transpose(0, 2, 1), eyes))
    sigma = np.tensordot(rates, diss, axes=1).astype(complex)
    if lamb_shift:
        # the Lamb contribution is linear in the generator, so one commutator
        h_eff = np.tensordot(phis.imag, ldl, axes=1)
        sigma += commutator_superop(0.5 * (h_eff + dag(h_eff)))
    return sigma


def fullwave_self_energy(decomp: FilterDecomposition, spectrum: NoiseSpectrum,
                         k_cut: int, phi_table: dict | None = None,
                         phi_out: dict | None = None) -> np.ndarray:
    """Self-energy keeping overlap windows up to ``k_cut`` bins off-diagonal.

    For each retained operator pair (x_k, x_k') the three sandwich
    structures x_k x_k' rho, rho x_k' x_k, and x_k rho x_k' enter with
    overlap coefficients whose window indices differ by |k + k'|; the
    truncation keeps |k + k'| <= k_cut. At k_cut = 0 only the k' = -k terms
    survive, which reproduces the secular form exactly. The structure is
    trace-annihilating pair by pair, so trace preservation is exact.
    """
    if k_cut < 0:
        raise ValueError("k_cut must be >= 0")
    dim = decomp.ops.shape[-1]
    eye = np.eye(dim)
    sigma = np.zeros((dim * dim, dim * dim), dtype=complex)
    cache: dict = {}
    tau = decomp.tau
    for i, k in enumerate(decomp.ks):
        k = int(k)
        xk = decomp.ops[i]
        for j, kp in enumerate(decomp.ks):
            kp = int(kp)
            if abs(k + kp) > k_cut:
                continue
            xkp = decomp.ops[j]
            p1 = _phi(cache, spectrum, tau, -k, kp, phi_table)
            p2 = _phi(cache, spectrum, tau, k, -kp, phi_table)
            p3 = _phi(cache, spectrum, tau, -kp, k, phi_table)
            sigma -= p1 * np.kron(eye, xk @ xkp)
            sigma -= np.conj(p2) * np.kron((xkp @ xk).T, eye)
            sigma += (np.conj(p2) + p3) * np.kron(xkp.T, xk)
    if phi_out is not None:
        phi_out.update(cache)
    return sigma


# ---------------------------------------------------------------------------
# Map results


@dataclass(frozen=True, eq=False)
class KeldyshMapResult:
    """Self-energy, exponentiated map, overlaps, strengths, and diagnostics."""

    sigma: np.ndarray
    map: np.ndarray
    phis: dict
    strengths: dict
    mode: str                 # "secular" or "fullwave"
    k_cut: int | None
    cptp_report: CPTPReport

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.map @ vec(rho))

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "k_cut": self.k_cut,
            "sigma": matrix_to_json(self.sigma),
            "map": matrix_to_json(self.map),
            "phis": {f"{k},{kp}": [v.real, v.imag]
                     for (k, kp), v in sorted(self.phis.items())},
            "strengths": {str(k): float(v) for k, v in sorted(self.strengths.items())},
            "cptp_report": self.cptp_report.to_dict(),
        }


def keldysh_map(sigma: np.ndarray, phis: dict | None = None,
                strengths: dict | None = None, mode: str = "secular",
                k_cut: int | None = None, tol: float = 1e-10) -> KeldyshMapResult:
    """Exponentiate a self-energy and attach CPTP diagnostics."""
    pi = matexp(sigma)
    report = cptp_check(pi, tol=tol)
    return KeldyshMapResult(sigma=sigma, map=pi, phis=dict(phis or {}),
                            strengths=dict(strengths or {}), mode=mode,
                            k_cut=k_cut, cptp_report=report)


def build_keldysh_map(decomp: FilterDecomposition, spectrum: NoiseSpectrum,
                      mode: str = "secular", k_cut: int = 0,
                      lamb_shift: bool = True,
                      phi_table: dict | None = None,
                      tol: float = 1e-10) -> KeldyshMapResult:
    """One-call pipeline from a filter decomposition to a KeldyshMapResult."""
    phis: dict = {}
    if mode == "secular":
        sigma = secular_self_energy(decomp, spectrum, lamb_shift=lamb_shift,
                                    phi_table=phi_table, phi_out=phis)
        kc = None
    elif mode == "fullwave":
        sigma = fullwave_self_energy(decomp, spectrum, k_cut,
                                     phi_table=phi_table, phi_out=phis)
        kc = k_cut
    else:
        raise ValueError(f"unknown mode {mode!r}")
    strengths = {int(k): operator_strength(op)
                 for k, op in zip(decomp.ks, decomp.ops)}
    return keldysh_map(sigma, phis=phis, strengths=strengths, mode=mode,
                       k_cut=kc, tol=tol)


# ---------------------------------------------------------------------------
# Transition decompositions (static and Floquet bases)


@dataclass(frozen=True, eq=False)
class TransitionDecomposition:
    """Discrete transition frequencies w_L and damping operators x(w_L).

    Reconstructs the interaction-picture coupling as
    x~(t) = sum_L x(w_L) e^{-i w_L t}.
    """

    frequencies: np.ndarray
    ops: np.ndarray

    def reconstruct(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phases = np.exp(-1j * np.outer(t, self.frequencies))
        return np.einsum("tk,kij->tij", phases, self.ops)

    def operator_at(self, omega: float, tol: float = 1e-8) -> np.ndarray:
        hits = np.nonzero(np.abs(self.frequencies - omega) <= tol)[0]
        if hits.size == 0:
            return np.zeros_like(self.ops[0])
        return self.ops[hits].sum(axis=0)


def _cluster_contributions(freqs, ops, freq_tol: float, drop_tol: float
                           ) -> TransitionDecomposition:
    """Sum operator contributions whose frequencies agree within freq_tol."""
    freqs = np.asarray(freqs, dtype=float)
    order = np.argsort(freqs)
    out_f: list[float] = []
    out_ops: list[np.ndarray] = []
    for idx in order:
        if out_f and freqs[idx] - out_f[-1] <= freq_tol:
            out_ops[-1] = out_ops[-1] + ops[idx]
        else:
            out_f.append(float(freqs[idx]))
            out_ops.append(ops[idx].copy())
    scale = max(np.max(np.abs(op)) for op in out_ops)
    keep = [i for i, op in enumerate(out_ops)
            if np.max(np.abs(op)) > drop_tol * scale]
    return TransitionDecomposition(
        frequencies=np.array([out_f[i] for i in keep]),
        ops=np.stack([out_ops[i] for i in keep]))


def static_decomposition(h_static: np.ndarray, coupling: np.ndarray,
                         freq_tol: float = 1e-9) -> TransitionDecomposition:
    """Eigenbasis transition decomposition of a time-independent system.

    With H |i> = E_i |i>, the element x_ij |i><j| of the coupling rotates at
    w_L = E_j - E_i in the interaction picture.
    """
    evals, evecs = np.linalg.eigh(h_static)
    x_eig = dag(evecs) @ coupling @ evecs
    dim = h_static.shape[0]
    freqs = []
    ops = []
    for i in range(dim):
        for j in range(dim):
            mask = np.zeros((dim, dim), dtype=complex)
            mask[i, j] = x_eig[i, j]
            freqs.append(evals[j] - evals[i])
            ops.append(evecs @ mask @ dag(evecs))
    return _cluster_contributions(freqs, ops, freq_tol, drop_tol=1e-12)


def floquet_decomposition(model, period: float, n_samples: int = 512,
                          substeps: int = 4, freq_tol: float | None = None,
                          degeneracy_tol: float = 1e-8,
                          drop_tol: float = 1e-10) -> TransitionDecomposition:
    """Transition decomposition in the Floquet basis of a periodic drive.

    Quasi-energies and Floquet states come from the one-period propagator;
    the periodic matrix elements <w_j(t)|x|w_j'(t)> are Fourier analyzed
    over one period, giving channels at w_L = eps_j' - eps_j + l*w_d.
    """
    from .propagation import propagate

    omega_d = 2.0 * np.pi / period
    # periodicity check on a coarse sample set
    for t in np.linspace(0.0, period, 7)[:-1]:
        defect = np.max(np.abs(model.hamiltonian(t) - model.hamiltonian(t + period)))
        if defect > 1e-10:
            raise ValueError(f"model not periodic with the given period "
                             f"(defect {defect:.2e} at t={t:.3g})")

    t_grid = np.linspace(0.0, period, n_samples + 1)
    us = propagate(model, t_grid, substeps_per_interval=substeps)
    u_period = us[-1]
    lam, w0 = np.linalg.eig(u_period)
    lam /= np.abs(lam)
    eps = -np.angle(lam) / period

    gaps = np.abs(np.subtract.outer(eps, eps))
    gaps = np.minimum(gaps, np.abs(gaps - omega_d))
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() < degeneracy_tol:
        warnings.warn("near-degenerate quasi-energies; Floquet basis fixed by QR",
                      RuntimeWarning)
    w0, _ = np.linalg.qr(w0)

    dim = model.dim
    x = model.coupling
    # w_j(t_n) = e^{i eps_j t_n} U(t_n) w_j(0); m_{jj'}(t_n) periodic in n
    wt = np.einsum("nab,bj->naj", us[:-1], w0)
    wt = wt * np.exp(1j * np.outer(t_grid[:-1], eps))[:, None, :]
    m = np.einsum("naj,ab,nbk->njk", wt.conj(), x, wt)
    coeffs = np.fft.ifft(m, axis=0)   # (1/N) sum_n m(t_n) e^{+i l w_d t_n}
    l_index = np.rint(np.fft.fftfreq(n_samples) * n_samples).astype(int)

    freqs = []
    ops = []
    scale = np.max(np.abs(x))
    for li, l in enumerate(l_index):
        c = coeffs[li]
        if np.max(np.abs(c)) <= drop_tol * scale:
            continue
        for j in range(dim):
            for jp in range(dim):
                if abs(c[j, jp]) <= drop_tol * scale:
                    continue
                freqs.append(eps[jp] - eps[j] + l * omega_d)
                ops.append(c[j, jp] * np.outer(w0[:, j], w0[:, jp].conj()))
    if not freqs:
        freqs = [0.0]
        ops = [np.zeros_like(x)]
    if freq_tol is None:
        freq_tol = 1e-8 * omega_d
    return _cluster_contributions(freqs, ops, freq_tol, drop_tol=drop_tol)


# ---------------------------------------------------------------------------
# Lindblad reference map


def principal_value_spectrum(spectrum: NoiseSpectrum, omega: float) -> float:
    """S-bar(w) = -PV integral dw'/2pi S(w') / (w' - w).

    The Cauchy singularity is handled by weighted quadrature on a window
    around w free of other breakpoints; the remainder integrates plainly.
    """
    from .filters import _quad

    lo, hi = spectrum.support()
    s_at = float(spectrum(omega))
    if not np.isfinite(s_at):
        raise ValueError(f"spectrum singular at omega={omega}")
    bps = sorted({float(p) for p in spectrum.breakpoints()})

    def f(w):
        return float(spectrum(w))

    def g(w):
        return float(spectrum(w)) / (w - omega)

    total = 0.0
    if lo < omega < hi:
        dists = [abs(p - omega) for p in bps if abs(p - omega) > 1e-12]
        dists += [omega - lo, hi - omega]
        delta = 0.5 * min(d for d in dists if np.isfinite(d) and d > 0)
        delta = min(delta, max(1.0, abs(omega)))
        val, _ = _quad(f, omega - delta, omega + delta, weight="cauchy", wvar=omega)
        total += val
        segments = [(lo, omega - delta), (omega + delta, hi)]
    else:
        segments = [(lo, hi)]

    for a, b in segments:
        if not b > a:
            continue
        inner = [p for p in bps if a < p < b]
        for s0, s1 in zip([a] + inner, inner + [b]):
            if not s1 > s0:
                continue
            val, _ = _quad(g, s0, s1)
            total += val
    return -total / (2.0 * np.pi)


def lindblad_reference(tdecomp: TransitionDecomposition, spectrum: NoiseSpectrum,
                       tau: float, lamb_shift: bool = True,
                       zero_mode_coefficient: float | None = None) -> np.ndarray:
    """Markovian reference self-energy tau * sum_L {S(w_L) D[x(w_L)] + Lamb}.

    ``zero_mode_coefficient``, if given, replaces the damping coefficient
    tau*S(0) of the zero-frequency channel (useful when the spectrum's
    zero-frequency value is a poor stand-in for the finite-time overlap,
    e.g. 1/f noise).
    """
    dim = tdecomp.ops.shape[-1]
    sigma = np.zeros((dim * dim, dim * dim), dtype=complex)
    for omega_l, op in zip(tdecomp.frequencies, tdecomp.ops):
        s_val = float(spectrum(omega_l))
        if not np.isfinite(s_val):
            raise ValueError(f"spectrum singular at transition frequency {omega_l}")
        rate = tau * s_val
        if zero_mode_coefficient is not None and abs(omega_l) < 1e-12:
            rate = float(zero_mode_coefficient)
        sigma += rate * dissipator_superop(op)
        if lamb_shift:
            sbar = principal_value_spectrum(spectrum, float(omega_l))
            sigma += tau * sbar * commutator_superop(dag(op) @ op)
    return sigma


# ---------------------------------------------------------------------------
# Error functionals


def decoherence_error(decomp: FilterDecomposition, spectrum: NoiseSpectrum,
                      phi_table: dict | None = None) -> float:
    """Leading-order decoherence error (1/N) sum_k M_k Re{2 phi_kk}."""
    dim = decomp.ops.shape[-1]
    cache: dict = {}
    total = 0.0
    for i, k in enumerate(decomp.ks):
        m_k = operator_strength(decomp.ops[i])
        if m_k == 0.0:
            continue
        phi = _phi(cache, spectrum, decomp.tau, int(k), int(k), phi_table)
        total += m_k * _damping_rate(phi, int(k))
    return total / dim


def _check_unitary(u: np.ndarray, name: str, tol: float = 1e-8) -> None:
    defect = np.max(np.abs(dag(u) @ u - np.eye(u.shape[0])))
    if defect > tol:
        raise ValueError(f"{name} is not unitary (defect {defect:.2e})")


def gate_error(u_target: np.ndarray, u_s_tau: np.ndarray,
               superop: np.ndarray) -> float:
    """Gate infidelity 1 - tr{V_tg^dag V_s Pi} / N^2."""
    _check_unitary(u_target, "u_target")
    _check_unitary(u_s_tau, "u_s_tau")
    dim = u_target.shape[0]
    v_tg = np.kron(u_target.conj(), u_target)
    v_s = np.kron(u_s_tau.conj(), u_s_tau)
    val = np.trace(dag(v_tg) @ v_s @ superop) / dim**2
    if abs(val.imag) > 1e-10:
        warnings.warn(f"gate fidelity trace has imaginary residue {val.imag:.2e}",
                      RuntimeWarning)
    return float(1.0 - val.real)


def state_transfer_error(rho_init: np.ndarray, rho_target: np.ndarray,
                         u_s_tau: np.ndarray, superop: np.ndarray) -> float:
    """State-transfer infidelity 1 - |tr[U^dag rho_tg U * Pi rho_init]|^2."""
    _check_unitary(u_s_tau, "u_s_tau")
    mapped = unvec(superop @ vec(rho_init))
    rotated_target = dag(u_s_tau) @ rho_target @ u_s_tau
    val = np.trace(rotated_target @ mapped)
    return float(1.0 - abs(val) ** 2)

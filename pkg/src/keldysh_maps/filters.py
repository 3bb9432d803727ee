"""Filter operators, filter functions, and spectral overlap coefficients.

The interaction-picture coupling operator on [0, tau] is expanded as
x~(t) = sum_k x_k e^{-i k w_p t} with w_p = 2 pi / tau. Mode k couples to
the noise spectrum through the frequency window I_{k,k'}(omega); on the
diagonal the window splits into real and imaginary kernels K^R + i K^I.
Overlap coefficients phi_{k,k'} are integrals of the window against the
spectrum, computed by adaptive quadrature (precise, per pair) or on a
shared Gauss-Legendre grid (fast, for large full-wave tables).
"""

from __future__ import annotations

import cmath
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .spectra import NoiseSpectrum, WhiteNoise


class QuadratureError(RuntimeError):
    """Raised when an overlap integral fails to converge."""


# ---------------------------------------------------------------------------
# Diagonal kernels and the filter function


def _kr(u, tau):
    """K^R(u) = (tau^2/2) sinc^2(u tau / 2), non-negative."""
    u = np.asarray(u, dtype=float)
    return 0.5 * tau**2 * np.sinc(u * tau / (2.0 * np.pi)) ** 2


def _ki(u, tau):
    """K^I(u) = -(tau/u)(1 - sinc(u tau)), odd, with a series branch near 0."""
    u = np.asarray(u, dtype=float)
    y = u * tau
    small = np.abs(y) < 0.1
    ys = np.where(small, y, 0.0)
    series = -(tau**2) * (ys / 6.0 - ys**3 / 120.0 + ys**5 / 5040.0 - ys**7 / 362880.0)
    ud = np.where(small, 1.0, u)
    yd = np.where(small, 1.0, y)
    direct = -tau / ud + np.sin(yd) / ud**2
    return np.where(small, series, direct)


def filter_kernel_diag(u, tau: float):
    """Diagonal window K^R(u) + i K^I(u) at detuning u from the mode frequency."""
    return _kr(u, tau) + 1j * _ki(u, tau)


def _expm1_ratio(u, tau):
    """E(u) = (e^{-i u tau} - 1)/u with a series branch near u = 0."""
    u = np.asarray(u, dtype=float)
    y = u * tau
    small = np.abs(y) < 1e-3
    iy = -1j * np.where(small, y, 0.0)
    series = -1j * tau * (1.0 + iy / 2.0 + iy**2 / 6.0 + iy**3 / 24.0 + iy**4 / 120.0)
    ud = np.where(small, 1.0, u)
    yd = np.where(small, 1.0, y)
    direct = (np.exp(-1j * yd) - 1.0) / ud
    return np.where(small, series, direct)


def _offdiag_window(u, v, tau):
    """I for k != k' written as -E(u)/v = -E(v)/u; u, v are the two detunings."""
    yu = np.abs(u * tau)
    yv = np.abs(v * tau)
    near_u = yu <= yv
    eu = _expm1_ratio(u, tau)
    ev = _expm1_ratio(v, tau)
    vden = np.where(near_u, v, 1.0)
    uden = np.where(near_u, 1.0, u)
    return np.where(near_u, -eu / vden, -ev / uden)


def filter_function(k: int, kp: int, omega, tau: float):
    """Window I_{k,k'}(omega) for the mode pair (k, k'); all poles removable."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    omega = np.asarray(omega, dtype=float)
    wp = 2.0 * np.pi / tau
    u = omega - k * wp
    if k == kp:
        return filter_kernel_diag(u, tau)
    v = omega - kp * wp
    return _offdiag_window(u, v, tau)


def _ff_scalar(k, kp, w, tau, wp):
    """Scalar off-diagonal window, pure python for fast quadrature callbacks."""
    u = w - k * wp
    v = w - kp * wp
    if abs(u) <= abs(v):
        y, den = u, v
    else:
        y, den = v, u
    s = y * tau
    if abs(s) < 1e-3:
        iy = -1j * s
        e = -1j * tau * (1.0 + iy / 2.0 + iy * iy / 6.0 + iy**3 / 24.0 + iy**4 / 120.0)
    else:
        e = (cmath.exp(-1j * s) - 1.0) / y
    return -e / den


# ---------------------------------------------------------------------------
# Fourier decomposition of the coupling operator


def operator_strength(op: np.ndarray) -> float:
    """Noise sensitivity M = Tr{op^dag op} - |Tr op|^2 / N_s of a single mode."""
    n = op.shape[0]
    m = float(np.sum(np.abs(op) ** 2).real) - abs(np.trace(op)) ** 2 / n
    if m < -1e-12:
        raise ValueError(f"negative filter strength {m:.2e}")
    return max(m, 0.0)


@dataclass(frozen=True, eq=False)
class FilterDecomposition:
    """Retained Fourier modes x_k of x~(t) over [0, tau]."""

    tau: float
    omega_p: float
    ks: np.ndarray        # retained mode indices, ascending
    ops: np.ndarray       # stacked operators aligned with ks
    n_samples: int

    def index_of(self, k: int) -> int | None:
        i = int(np.searchsorted(self.ks, k))
        if i < self.ks.size and self.ks[i] == k:
            return i
        return None

    def operator(self, k: int) -> np.ndarray:
        i = self.index_of(k)
        if i is None:
            return np.zeros_like(self.ops[0])
        return self.ops[i]

    def strength(self, k: int) -> float:
        i = self.index_of(k)
        return 0.0 if i is None else operator_strength(self.ops[i])

    def strengths(self) -> np.ndarray:
        return np.array([operator_strength(op) for op in self.ops])

    def total_strength(self) -> float:
        return float(self.strengths().sum())

    def mode_frequencies(self) -> np.ndarray:
        return self.ks * self.omega_p

    def reconstruct(self, t) -> np.ndarray:
        """sum_k x_k e^{-i k w_p t} at the given times, shape (n_t, dim, dim)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phases = np.exp(-1j * np.outer(t, self.ks * self.omega_p))
        return np.einsum("tk,kij->tij", phases, self.ops)


def fourier_decompose(xt_samples, tau: float,
                      strength_tol: float = 1e-8) -> FilterDecomposition:
    """FFT decomposition of x~(t) sampled uniformly on [0, tau).

    Modes are dropped from the weakest up while the cumulative discarded
    strength stays below strength_tol times the total; the retained set is
    symmetrized in k.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    samples = np.asarray(xt_samples, dtype=complex)
    n_t = samples.shape[0]
    if n_t < 2 or (n_t & (n_t - 1)) != 0:
        raise ValueError(f"sample count {n_t} must be a power of two")
    coeffs = np.fft.ifft(samples, axis=0)
    k_index = np.rint(np.fft.fftfreq(n_t) * n_t).astype(int)

    dim = samples.shape[1]
    m = np.sum(np.abs(coeffs) ** 2, axis=(1, 2)).real \
        - np.abs(np.einsum("kii->k", coeffs)) ** 2 / dim
    m = np.maximum(m, 0.0)
    total = float(m.sum())

    if total == 0.0:
        keep = {0}
    else:
        asc = np.argsort(m, kind="stable")
        cum = np.cumsum(m[asc])
        n_drop = int(np.searchsorted(cum, strength_tol * total, side="left"))
        keep = set(k_index[asc[n_drop:]].tolist())
        valid = set(k_index.tolist())
        keep |= {-k for k in keep if -k in valid}

    ks = np.array(sorted(keep), dtype=int)
    pos = {int(k): i for i, k in enumerate(k_index)}
    ops = np.stack([coeffs[pos[int(k)]] for k in ks])
    return FilterDecomposition(tau=float(tau), omega_p=2.0 * np.pi / tau,
                               ks=ks, ops=ops, n_samples=n_t)


def filter_strength(decomp: FilterDecomposition, k: int) -> float:
    return decomp.strength(k)


# ---------------------------------------------------------------------------
# Precise overlap quadrature


def _quad(f, a, b, **kw):
    kw.setdefault("limit", 800)
    kw.setdefault("epsabs", 1e-13)
    kw.setdefault("epsrel", 1e-10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(f, a, b, **kw)
    return val, err


def _osc_quad(f, a, b, tau, kind):
    """Integral of f times cos/sin(tau * x) on [a, b], b possibly infinite."""
    if np.isinf(b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            val, err = quad(f, a, b, weight=kind, wvar=tau,
                            limlst=200, limit=400, epsabs=1e-11)
        return val, err
    return _quad(f, a, b, weight=kind, wvar=tau)


_NEAR_FIELD_PERIODS = 30


def _phi_diag(spectrum: NoiseSpectrum, k: int, tau: float) -> complex:
    """phi_{k,k} folded onto u > 0 about the mode frequency k w_p.

    Near field integrates the full kernels; beyond it K^R and K^I are split
    into rational and oscillatory parts handled by weighted quadrature.
    """
    wp = 2.0 * np.pi / tau
    a = k * wp
    lo, hi = spectrum.support()
    u_max = max(hi - a, a - lo)
    if not u_max > 0:
        return 0.0 + 0.0j

    def gp(u):
        return float(spectrum(a + u)) + float(spectrum(a - u))

    def gm(u):
        return float(spectrum(a + u)) - float(spectrum(a - u))

    folds = sorted({float(abs(p - a)) for p in spectrum.breakpoints()})
    folds = [p for p in folds if 0.0 < p < u_max]
    w_edge = min(_NEAR_FIELD_PERIODS * wp, u_max)
    pts = [p for p in folds if p < w_edge] or None
    re, e1 = _quad(lambda u: float(_kr(u, tau)) * gp(u), 0.0, w_edge, points=pts)
    im, e2 = _quad(lambda u: float(_ki(u, tau)) * gm(u), 0.0, w_edge, points=pts)
    err = e1 + e2

    if u_max > w_edge:
        bounds = [w_edge] + [p for p in folds if p > w_edge] + [u_max]
        for s0, s1 in zip(bounds[:-1], bounds[1:]):
            if not s1 > s0:
                continue
            # K^R = (1 - cos(u tau))/u^2, K^I = -tau/u + sin(u tau)/u^2
            r1, a1 = _quad(lambda u: gp(u) / u**2, s0, s1)
            r2, a2 = _osc_quad(lambda u: gp(u) / u**2, s0, s1, tau, "cos")
            i1, a3 = _quad(lambda u: gm(u) / u, s0, s1)
            i2, a4 = _osc_quad(lambda u: gm(u) / u**2, s0, s1, tau, "sin")
            re += r1 - r2
            im += -tau * i1 + i2
            err += a1 + a2 + a3 + a4

    phi = (re + 1j * im) / (2.0 * np.pi)
    if err / (2.0 * np.pi) > max(1e-6, 1e-3 * abs(phi)):
        raise QuadratureError(
            f"phi_({k},{k}) error estimate {err / (2.0 * np.pi):.2e} too large")
    return phi


def _phi_pair(spectrum: NoiseSpectrum, k: int, kp: int, tau: float) -> complex:
    """phi_{k,k'} for k != k'; near field direct, tails split into
    rational plus cos/sin weighted parts."""
    wp = 2.0 * np.pi / tau
    a, b = k * wp, kp * wp
    lo, hi = spectrum.support()
    margin = 5.0 * wp
    nf_lo, nf_hi = min(a, b) - margin, max(a, b) + margin
    bps = [float(p) for p in spectrum.breakpoints()]
    pts = sorted({p for p in bps if nf_lo < p < nf_hi} | {a, b})

    def f_re(w):
        return (_ff_scalar(k, kp, w, tau, wp) * float(spectrum(w))).real

    def f_im(w):
        return (_ff_scalar(k, kp, w, tau, wp) * float(spectrum(w))).imag

    re, e1 = _quad(f_re, nf_lo, nf_hi, points=pts)
    im, e2 = _quad(f_im, nf_lo, nf_hi, points=pts)
    err = e1 + e2

    # I = [1 - cos(w tau) + i sin(w tau)] * S / ((w - a)(w - b)) in the tails
    def rat(w):
        return float(spectrum(w)) / ((w - a) * (w - b))

    if hi > nf_hi:
        bounds = [nf_hi] + sorted(p for p in bps if p > nf_hi) + [hi]
        for s0, s1 in zip(bounds[:-1], bounds[1:]):
            if not s1 > s0:
                continue
            r1, a1 = _quad(rat, s0, s1)
            r2, a2 = _osc_quad(rat, s0, s1, tau, "cos")
            i1, a3 = _osc_quad(rat, s0, s1, tau, "sin")
            re += r1 - r2
            im += i1
            err += a1 + a2 + a3

    if lo < nf_lo:
        # mirror w -> -x; cos is even, sin odd
        def ratm(x):
            return float(spectrum(-x)) / ((x + a) * (x + b))

        mirrored = sorted(-p for p in bps if p < nf_lo)
        bounds = [-nf_lo] + mirrored + [np.inf if np.isinf(lo) else -lo]
        for s0, s1 in zip(bounds[:-1], bounds[1:]):
            if not s1 > s0:
                continue
            r1, a1 = _quad(ratm, s0, s1)
            r2, a2 = _osc_quad(ratm, s0, s1, tau, "cos")
            i1, a3 = _osc_quad(ratm, s0, s1, tau, "sin")
            re += r1 - r2
            im -= i1
            err += a1 + a2 + a3

    phi = (re + 1j * im) / (2.0 * np.pi)
    if err / (2.0 * np.pi) > max(1e-6, 1e-3 * abs(phi)):
        raise QuadratureError(
            f"phi_({k},{kp}) error estimate {err / (2.0 * np.pi):.2e} too large")
    return phi


def spectral_overlap(spectrum: NoiseSpectrum, k: int, kp: int, tau: float) -> complex:
    """phi_{k,k'} = integral dw/2pi I_{k,k'}(w) S_B(w), adaptive quadrature."""
    if k == kp:
        return _phi_diag(spectrum, k, tau)
    return _phi_pair(spectrum, k, kp, tau)


def overlap_phi(decomp: FilterDecomposition, spectrum: NoiseSpectrum,
                k: int, kp: int | None = None) -> complex:
    kp = k if kp is None else kp
    return spectral_overlap(spectrum, k, kp, decomp.tau)


def filter_area(k: int, kp: int, tau: float) -> complex:
    """integral dw/2pi I_{k,k'}(w); equals (tau/2) delta_{kk'} analytically."""
    return spectral_overlap(WhiteNoise(1.0), k, kp, tau)


# ---------------------------------------------------------------------------
# Fast shared-grid overlap table (full-wave assembly)


def overlap_table(spectrum: NoiseSpectrum, tau: float, ks, k_cut: int,
                  margin: int = 40, nodes_per_panel: int = 8,
                  refine_levels: int = 16) -> dict:
    """All phi_{k,k'} with k, k' in ks and |k - k'| <= k_cut on a shared grid.

    The spectrum is sampled once on Gauss-Legendre panels one w_p wide
    (geometrically refined around spectrum breakpoints) and every pair
    reuses the samples. Diagonal entries use the non-negative K^R kernel so
    damping coefficients cannot go negative from quadrature noise. Accuracy
    is limited by the finite grid span; use spectral_overlap when single
    coefficients are needed to high precision.
    """
    ks = np.asarray(sorted(int(k) for k in ks), dtype=int)
    if ks.size == 0:
        return {}
    wp = 2.0 * np.pi / tau
    lo, hi = spectrum.support()
    d_lo = max(lo, (ks[0] - margin) * wp)
    d_hi = min(hi, (ks[-1] + margin) * wp)
    if not d_hi > d_lo:
        return {(int(k), int(q)): 0.0j for k in ks for q in ks
                if abs(int(k) - int(q)) <= k_cut}

    base = wp * np.arange(np.floor(d_lo / wp), np.ceil(d_hi / wp) + 1)
    edges = set(np.clip(base, d_lo, d_hi).tolist())
    for p in spectrum.breakpoints():
        if d_lo < p < d_hi:
            edges.add(float(p))
            for j in range(1, refine_levels + 1):
                step = wp / 2.0**j
                edges.add(float(min(p + step, d_hi)))
                edges.add(float(max(p - step, d_lo)))
    edges = np.array(sorted(edges))
    keep = np.concatenate(([True], np.diff(edges) > 1e-14 * max(1.0, abs(d_hi))))
    edges = edges[keep]

    gx, gw = np.polynomial.legendre.leggauss(nodes_per_panel)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    weighted_s = wts * np.asarray(spectrum(nodes), dtype=float)

    table: dict = {}
    ks_set = set(ks.tolist())
    u_all = nodes[None, :] - ks[:, None] * wp
    diag = (_kr(u_all, tau) @ weighted_s + 1j * (_ki(u_all, tau) @ weighted_s)) \
        / (2.0 * np.pi)
    for i, k in enumerate(ks):
        table[(int(k), int(k))] = complex(diag[i])

    for d in range(1, k_cut + 1):
        for dd in (d, -d):
            mask = np.array([(int(k) + dd) in ks_set for k in ks])
            if not mask.any():
                continue
            u = u_all[mask]
            vals = (_offdiag_window(u, u - dd * wp, tau) @ weighted_s) / (2.0 * np.pi)
            for k, val in zip(ks[mask], vals):
                table[(int(k), int(k) + dd)] = complex(val)
    return table

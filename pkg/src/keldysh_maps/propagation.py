"""Closed-system propagation for driven few-level systems.

Drive terms are (operator, envelope, carrier) triples. A carrier of kind
"cos" multiplies the envelope by cos(omega t + phase); kind "rwa" builds
the rotating-wave form env(t)/2 * (A e^{-i(omega t + phase)} + h.c.) with A
the (possibly non-Hermitian) drive operator. Without a carrier the envelope
multiplies the operator directly.

Time stepping uses the two-point Gauss-Legendre Magnus scheme (4th order),
which is exactly unitary for every step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .linalg import HERMITICITY_TOL, dag

_GAUSS_OFFSET = np.sqrt(3.0) / 6.0


# ---------------------------------------------------------------------------
# Drive envelopes


class DriveEnvelope:
    def __call__(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(DriveEnvelope):
    amplitude: float

    def __call__(self, t):
        return self.amplitude * np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Sinusoid(DriveEnvelope):
    amplitude: float
    omega: float
    phase: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.cos(self.omega * np.asarray(t, dtype=float) + self.phase)


@dataclass(frozen=True)
class HyperbolicWindow(DriveEnvelope):
    """Tanh ramp-up/ramp-down window multiplying an inner envelope."""

    t_mid1: float
    t_mid2: float
    t_ramp: float
    inner: DriveEnvelope = field(default_factory=lambda: Constant(1.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = 0.25 * (1.0 + np.tanh((t - self.t_mid1) / (np.pi * self.t_ramp))) \
                 * (1.0 + np.tanh((self.t_mid2 - t) / (np.pi * self.t_ramp)))
        return w * self.inner(t)


@dataclass(frozen=True)
class SwitchOff(DriveEnvelope):
    """Smooth switch-off: 1 for t << t_mid, 0 for t >> t_mid."""

    t_mid: float
    t_ramp: float
    inner: DriveEnvelope = field(default_factory=lambda: Constant(1.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        w = 0.5 * (1.0 + np.tanh((self.t_mid - t) / (np.pi * self.t_ramp)))
        return w * self.inner(t)


@dataclass(frozen=True)
class PiecewiseConstant(DriveEnvelope):
    """Uniform piecewise-constant segments on [0, tau]."""

    amplitudes: tuple[float, ...]
    tau: float

    def __post_init__(self):
        if len(self.amplitudes) < 1:
            raise ValueError("need at least one segment")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        amps = np.asarray(self.amplitudes, dtype=float)
        idx = np.clip((t / self.tau * len(amps)).astype(int), 0, len(amps) - 1)
        return amps[idx]


@dataclass(frozen=True)
class EchoPi(DriveEnvelope):
    """Gaussian-flattop pulse normalized to a given rotating-frame angle.

    Flat for |t - center| <= width/2, Gaussian edges with the given sigma.
    The amplitude is set so that the time integral equals ``angle`` (a pi
    rotation by default, for an rwa carrier drive).
    """

    center: float
    width: float
    sigma: float
    angle: float = np.pi

    def _shape(self, t):
        t = np.asarray(t, dtype=float)
        edge = np.abs(t - self.center) - 0.5 * self.width
        return np.where(edge <= 0, 1.0, np.exp(-0.5 * (np.maximum(edge, 0) / self.sigma) ** 2))

    def __call__(self, t):
        area = self.width + self.sigma * np.sqrt(2.0 * np.pi)
        return (self.angle / area) * self._shape(t)


# ---------------------------------------------------------------------------
# System model


@dataclass(frozen=True)
class Carrier:
    kind: str  # "cos" or "rwa"
    omega: float
    phase: float = 0.0


@dataclass(frozen=True)
class DriveTerm:
    operator: np.ndarray
    envelope: DriveEnvelope
    carrier: Carrier | None = None

    def hamiltonian(self, t: float) -> np.ndarray:
        env = float(self.envelope(t))
        if self.carrier is None:
            return env * self.operator
        arg = self.carrier.omega * t + self.carrier.phase
        if self.carrier.kind == "cos":
            return env * np.cos(arg) * self.operator
        if self.carrier.kind == "rwa":
            term = 0.5 * env * np.exp(-1j * arg) * self.operator
            return term + dag(term)
        raise ValueError(f"unknown carrier kind {self.carrier.kind!r}")


@dataclass(frozen=True)
class SystemModel:
    """Static Hamiltonian, drive terms, and noise-coupling operator."""

    h_static: np.ndarray
    drive_terms: tuple[DriveTerm, ...]
    coupling: np.ndarray

    def __post_init__(self):
        for name, op in (("h_static", self.h_static), ("coupling", self.coupling)):
            defect = np.max(np.abs(op - dag(op)))
            if defect > HERMITICITY_TOL:
                raise ValueError(f"{name} is not Hermitian (defect {defect:.2e})")
        dim = self.h_static.shape[0]
        if self.coupling.shape != (dim, dim):
            raise ValueError("coupling dimension mismatch")
        for term in self.drive_terms:
            if term.operator.shape != (dim, dim):
                raise ValueError("drive operator dimension mismatch")

    @property
    def dim(self) -> int:
        return self.h_static.shape[0]

    def hamiltonian(self, t: float) -> np.ndarray:
        h = self.h_static.copy()
        for term in self.drive_terms:
            h = h + term.hamiltonian(t)
        defect = np.max(np.abs(h - dag(h)))
        if defect > 1e-9:
            raise ValueError(f"instantaneous Hamiltonian not Hermitian (defect {defect:.2e})")
        return h

    def hamiltonian_batch(self, ts: np.ndarray) -> np.ndarray:
        """Stacked H(t) for an array of times (vectorized over envelopes)."""
        ts = np.asarray(ts, dtype=float)
        h = np.broadcast_to(self.h_static, (ts.size,) + self.h_static.shape).copy()
        for term in self.drive_terms:
            env = np.asarray(term.envelope(ts), dtype=float)
            if term.carrier is None:
                h += env[:, None, None] * term.operator
            else:
                arg = term.carrier.omega * ts + term.carrier.phase
                if term.carrier.kind == "cos":
                    h += (env * np.cos(arg))[:, None, None] * term.operator
                elif term.carrier.kind == "rwa":
                    half = (0.5 * env * np.exp(-1j * arg))[:, None, None] * term.operator
                    h += half + np.conj(np.swapaxes(half, -1, -2))
                else:
                    raise ValueError(f"unknown carrier kind {term.carrier.kind!r}")
        return h


def static_qubit(omega_q: float = 1.0) -> np.ndarray:
    from .linalg import SIGMA_Z
    return 0.5 * omega_q * SIGMA_Z


# ---------------------------------------------------------------------------
# Propagation


def _magnus_step_generators(model: SystemModel, t_start: np.ndarray,
                            dt: np.ndarray) -> np.ndarray:
    """Stacked anti-Hermitian Magnus generators, one per step."""
    h1 = model.hamiltonian_batch(t_start + (0.5 - _GAUSS_OFFSET) * dt)
    h2 = model.hamiltonian_batch(t_start + (0.5 + _GAUSS_OFFSET) * dt)
    defect = max(np.max(np.abs(h1 - np.conj(np.swapaxes(h1, -1, -2)))),
                 np.max(np.abs(h2 - np.conj(np.swapaxes(h2, -1, -2)))))
    if defect > 1e-9:
        raise ValueError(f"instantaneous Hamiltonian not Hermitian (defect {defect:.2e})")
    hs = dt[:, None, None]
    return -0.5j * hs * (h1 + h2) - (np.sqrt(3.0) / 12.0) * hs * hs * (h2 @ h1 - h1 @ h2)


def _exp_antihermitian(gen: np.ndarray) -> np.ndarray:
    """exp of stacked anti-Hermitian matrices via batched Hermitian eigensolve."""
    herm = 1j * gen  # Hermitian
    evals, evecs = np.linalg.eigh(herm)
    phases = np.exp(-1j * evals)
    return np.einsum("nij,nj,nkj->nik", evecs, phases, evecs.conj())


def propagate(model: SystemModel, t_grid: np.ndarray,
              substeps_per_interval: int = 1) -> np.ndarray:
    """Unitary propagators U_s(t_j) on an increasing time grid starting at 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if substeps_per_interval < 1:
        raise ValueError("substeps_per_interval must be >= 1")

    starts = []
    dts = []
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        h = (t1 - t0) / substeps_per_interval
        for s in range(substeps_per_interval):
            starts.append(t0 + s * h)
            dts.append(h)
    gens = _magnus_step_generators(model, np.asarray(starts), np.asarray(dts))
    steps = _exp_antihermitian(gens)

    dim = model.dim
    us = np.empty((t_grid.size, dim, dim), dtype=complex)
    u = np.eye(dim, dtype=complex)
    us[0] = u
    idx = 0
    for j in range(t_grid.size - 1):
        for _ in range(substeps_per_interval):
            u = steps[idx] @ u
            idx += 1
        us[j + 1] = u
    return us


def unitarity_defect(us: np.ndarray) -> float:
    dim = us.shape[-1]
    eye = np.eye(dim)
    return float(max(np.max(np.abs(dag(u) @ u - eye)) for u in us))


def interaction_coupling(model: SystemModel, us: np.ndarray) -> np.ndarray:
    """Interaction-picture coupling operators x~(t_j) = U^dag x U."""
    x = model.coupling
    if us.shape[-1] != x.shape[0]:
        raise ValueError("propagator/coupling dimension mismatch")
    xt = np.einsum("nji,jk,nkl->nil", us.conj(), x, us)
    # re-symmetrize to suppress roundoff in the Hermitian structure
    return 0.5 * (xt + np.conj(np.swapaxes(xt, -1, -2)))


# ---------------------------------------------------------------------------
# Driven harmonic oscillator (analytic route)


def coherent_displacement(omega_r: float, drive, tau: float,
                          n_eval: int = 257, rtol: float = 1e-10):
    """Solve i d(alpha)/dt = omega_r alpha + d(t) with alpha(0) = 0.

    ``drive`` is a DriveEnvelope (or any callable of t). Returns the times,
    the alpha(t) trajectory, and the accumulated phase Phi(tau).
    """

    def rhs(t, y):
        a = y[0] + 1j * y[1]
        da = -1j * (omega_r * a + float(drive(t)))
        return [da.real, da.imag]

    t_eval = np.linspace(0.0, tau, n_eval)
    sol = solve_ivp(rhs, (0.0, tau), [0.0, 0.0], t_eval=t_eval,
                    rtol=rtol, atol=1e-12, method="DOP853")
    alpha = sol.y[0] + 1j * sol.y[1]

    def alpha_at(t):
        i = np.searchsorted(t_eval, t)
        i = min(max(i, 1), n_eval - 1)
        w = (t - t_eval[i - 1]) / (t_eval[i] - t_eval[i - 1])
        return alpha[i - 1] * (1 - w) + alpha[i] * w

    def phase_integrand(t):
        a = alpha_at(t)
        adot = -1j * (omega_r * a + float(drive(t)))
        return -(omega_r * abs(a) ** 2 + 0.5 * (1j * (a * adot.conjugate() - a.conjugate() * adot)).real)

    phi, _ = quad(phase_integrand, 0.0, tau, limit=400)
    return t_eval, alpha, float(phi)

"""Noise spectral densities S_B(omega) and bath diagnostics.

All spectra are fixed non-negative functions of angular frequency.
Quantum (asymmetric) spectra are supported; zero-temperature variants
have support only at positive frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NoiseSpectrum:
    """Base class; subclasses implement ``__call__`` on scalar or array omega."""

    def __call__(self, omega):
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        """Frequencies where the spectrum is peaked or non-smooth."""
        return []

    def support(self) -> tuple[float, float]:
        """Interval outside of which the spectrum vanishes identically."""
        return (-np.inf, np.inf)


@dataclass(frozen=True)
class WhiteNoise(NoiseSpectrum):
    """Flat spectrum S_B(omega) = gamma."""

    gamma: float

    def __call__(self, omega):
        return self.gamma * np.ones_like(np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class OhmicNoise(NoiseSpectrum):
    """Zero-temperature Ohmic spectrum S_B(omega) = A * omega for 0 < omega < cutoff.

    The sharp ultraviolet cutoff keeps band overlaps finite; without it the
    diagonal overlap integrals diverge logarithmically.
    """

    strength: float
    cutoff: float = 100.0

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.where((omega > 0) & (omega <= self.cutoff), self.strength * omega, 0.0)

    def breakpoints(self):
        return [0.0, self.cutoff]

    def support(self):
        return (0.0, self.cutoff)


@dataclass(frozen=True)
class OneOverFNoise(NoiseSpectrum):
    """1/f spectrum 2 pi A^2 / |omega| with infrared and ultraviolet cutoffs.

    Below the infrared cutoff the spectrum continues as the constant
    value at omega_ir; above omega_uv it is zero.
    """

    amplitude: float
    omega_ir: float
    omega_uv: float

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        mag = np.maximum(np.abs(omega), self.omega_ir)
        s = 2.0 * np.pi * self.amplitude**2 / mag
        return np.where(np.abs(omega) <= self.omega_uv, s, 0.0)

    def breakpoints(self):
        return [-self.omega_uv, -self.omega_ir, 0.0, self.omega_ir, self.omega_uv]

    def support(self):
        return (-self.omega_uv, self.omega_uv)


@dataclass(frozen=True)
class TLSNoise(NoiseSpectrum):
    """Zero-temperature two-level-system defect: a Lorentzian at omega_t > 0.

    S_B(omega) = weight * (1/T_t) / ((omega - omega_t)^2 + 1/T_t^2) for omega > 0.
    ``relaxation_time`` is the defect coherence time T_t.
    """

    weight: float
    omega_t: float
    relaxation_time: float

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        rate = 1.0 / self.relaxation_time
        lor = rate / ((omega - self.omega_t) ** 2 + rate**2)
        return np.where(omega > 0, self.weight * lor, 0.0)

    def breakpoints(self):
        return [0.0, self.omega_t]

    def support(self):
        return (0.0, np.inf)

    def correlation_time(self, omega: float) -> float:
        """Closed-form bath correlation time from the spectral roughness."""
        rate2 = 1.0 / self.relaxation_time**2
        delta2 = (omega - self.omega_t) ** 2
        roughness = abs(2.0 * rate2 - 6.0 * delta2) / (rate2 + delta2) ** 2
        return float(np.sqrt(roughness / 2.0))


@dataclass(frozen=True)
class SumSpectrum(NoiseSpectrum):
    """Sum of component spectra."""

    parts: tuple[NoiseSpectrum, ...]

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        total = np.zeros_like(omega)
        for part in self.parts:
            total = total + part(omega)
        return total

    def breakpoints(self):
        pts: list[float] = []
        for part in self.parts:
            pts.extend(part.breakpoints())
        return sorted(set(pts))

    def support(self):
        los, his = zip(*(part.support() for part in self.parts))
        return (min(los), max(his))


@dataclass(frozen=True)
class TabulatedSpectrum(NoiseSpectrum):
    """Linear interpolation of (omega, S) samples, zero outside the table."""

    omegas: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        if om.size < 2 or np.any(np.diff(om) <= 0):
            raise ValueError("tabulated omegas must be strictly increasing, >= 2 points")
        if np.any(np.asarray(self.values, dtype=float) < 0):
            raise ValueError("tabulated spectrum values must be non-negative")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.interp(omega, self.omegas, self.values, left=0.0, right=0.0)

    def breakpoints(self):
        return list(self.omegas)

    def support(self):
        return (self.omegas[0], self.omegas[-1])


def bath_correlation_time(spectrum: NoiseSpectrum, omega: float,
                          omega_scale: float = 1.0) -> float:
    """Frequency-dependent bath correlation time tau_B = sqrt(R/2).

    R = |S''(omega)| / S(omega) is the spectral roughness, with the second
    derivative taken by central finite differences. Uses the closed form for
    a single TLS defect. Raises at frequencies where the spectrum vanishes.
    """
    if isinstance(spectrum, TLSNoise):
        return spectrum.correlation_time(omega)
    s0 = float(spectrum(omega))
    if s0 <= 0.0:
        raise ValueError(f"spectrum vanishes at omega={omega}; correlation time undefined")
    h = 1e-4 * max(abs(omega), omega_scale)
    second = (float(spectrum(omega + h)) - 2.0 * s0 + float(spectrum(omega - h))) / h**2
    roughness = abs(second) / s0
    return float(np.sqrt(roughness / 2.0))

"""Sideband weights, Stark shift and EIT/FEIT effective couplings.

Conventions
-----------
* The applied field is ``eps(t) = eps_dc + eps_rf * cos(omega_s t + phi_s)``.
* ``AtomMedium.alpha`` stores alpha/hbar in rad/s per (V/cm)^2, so every
  Bessel argument and the Stark shift come out directly in rad/s or as pure
  numbers.
* A control waveform is expanded as ``g(t) = sum_n g_n exp(+i n (omega_g t + phi_g))``.
  With this sign the n-th FEIT coupling is the coefficient of
  ``exp(+i n omega_g t)`` in ``Omega_c g(t) exp(i phi(t))`` (up to the global
  per-band phase ``exp(i n phi_g)``), where ``phi(t)`` is the oscillating part of
  the accumulated Stark phase.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import k as K_BOLTZMANN

from .errors import CalibrationError, CommensurabilityError, ParameterError
from .special import bessel_j_range

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # angular frequency of 1 MHz

# alpha/(2 pi hbar) = +11.31 MHz/(V/cm)^2 reproduces a 51.6 MHz Stark shift
# magnitude at eps_dc = 3 V/cm, eps_rf = 0.5 V/cm. The positive sign puts
# the largest first-order FEIT band at n = +1 for phi_s = 0.
DEFAULT_ALPHA = 51.6 / 4.5625 * MHZ

RWA_WARN_RATIO = 0.1
COMMENSURATE_RTOL = 1e-9
BESSEL_GUARD = 25


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class RfDrive:
    """DC + RF field ``eps_dc + eps_rf cos(omega_s t + phi_s)`` (V/cm, rad/s, rad)."""

    eps_dc: float = 3.0
    eps_rf: float = 0.5
    omega_s: float = 30.0 * MHZ
    phi_s: float = 0.0

    def __post_init__(self):
        for name in ("eps_dc", "eps_rf", "omega_s", "phi_s"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.eps_dc < 0 or self.eps_rf < 0:
            raise ParameterError("field strengths must be non-negative")
        if self.omega_s <= 0:
            raise ParameterError("omega_s must be positive")
        object.__setattr__(self, "phi_s", self.phi_s % TWO_PI)

    def field(self, t):
        return self.eps_dc + self.eps_rf * np.cos(self.omega_s * np.asarray(t) + self.phi_s)


@dataclass(frozen=True)
class ControlModulation:
    """Periodic control envelope g(t) stored by its Fourier coefficients."""

    omega_g: float
    phi_g: float = 0.0
    coefficients: Mapping[int, complex] = field(default_factory=lambda: {0: 1.0})
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "omega_g", _finite("omega_g", self.omega_g))
        object.__setattr__(self, "phi_g", _finite("phi_g", self.phi_g))
        if self.omega_g <= 0:
            raise ParameterError("omega_g must be positive")
        coeffs = {int(n): complex(v) for n, v in dict(self.coefficients).items() if v != 0}
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def cosine(cls, omega_g: float, phi_g: float = 0.0) -> "ControlModulation":
        """``g(t) = [1 + cos(omega_g t + phi_g)] / 2``."""
        return cls(omega_g, phi_g, {0: 0.5, 1: 0.25, -1: 0.25}, "cosine")

    @classmethod
    def constant(cls, omega_g: float, phi_g: float = 0.0) -> "ControlModulation":
        """Unmodulated control, g(t) = 1."""
        return cls(omega_g, phi_g, {0: 1.0}, "constant")

    @classmethod
    def from_waveform(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        omega_g: float,
        phi_g: float = 0.0,
        harmonics: int = 16,
        samples: int = 4096,
        kind: str = "custom",
    ) -> "ControlModulation":
        """Fourier-analyse ``func(theta)``, a 2pi-periodic waveform of theta = omega_g t + phi_g."""
        theta = TWO_PI * np.arange(samples) / samples
        spec = np.fft.fft(func(theta)) / samples
        coeffs = {}
        for n in range(-harmonics, harmonics + 1):
            val = spec[n % samples]
            if abs(val) > 1e-15:
                coeffs[n] = complex(val)
        return cls(omega_g, phi_g, coeffs, kind)

    def coefficient(self, n: int) -> complex:
        return self.coefficients.get(int(n), 0.0)

    @property
    def is_real(self) -> bool:
        return all(
            abs(v - np.conj(self.coefficient(-n))) <= 1e-12 * max(1.0, abs(v))
            for n, v in self.coefficients.items()
        )

    def waveform(self, t) -> np.ndarray:
        theta = self.omega_g * np.asarray(t, dtype=float) + self.phi_g
        out = np.zeros_like(theta, dtype=complex)
        for n, v in self.coefficients.items():
            out = out + v * np.exp(1j * n * theta)
        return out

    def peak(self, samples: int = 4096) -> float:
        theta = TWO_PI * np.arange(samples) / samples
        return float(np.max(np.abs(self.waveform((theta - self.phi_g) / self.omega_g))))

    def with_frequency(self, omega_g: float) -> "ControlModulation":
        return replace(self, omega_g=omega_g)


@dataclass(frozen=True)
class AtomMedium:
    """Ladder-system and vapour-cell parameters (SI units, rates in rad/s)."""

    alpha: float = DEFAULT_ALPHA
    omega_21: float = TWO_PI * C_LIGHT / 780e-9
    omega_32: float = TWO_PI * C_LIGHT / 480e-9
    gamma1: float = 3.0 * MHZ
    gamma2: float = 0.1 * MHZ
    mu12: float = 1.0e-29
    n0: float = 4.5e16
    t0: float = 300.0
    mass: float = 1.41e-25
    length: float = 0.05

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        for name in ("gamma1", "gamma2", "n0", "t0", "mass", "length"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.omega_21 <= 0 or self.omega_32 <= 0:
            raise ParameterError("transition frequencies must be positive")

    @property
    def most_probable_speed(self) -> float:
        """u = sqrt(2 k_B T0 / m) in m/s."""
        return math.sqrt(2.0 * K_BOLTZMANN * self.t0 / self.mass)


@dataclass(frozen=True)
class LaserParams:
    """Probe/control Rabi frequencies and detunings (rad/s), wavelengths (m).

    ``control_doppler_sign`` selects the two-photon Doppler factor
    ``omega_p + control_doppler_sign * omega_c``; -1 reproduces the
    ``(omega_p - omega_c)`` form used for counter-propagating beams.
    """

    omega_p_rabi: float = 0.1 * MHZ
    omega_c_rabi: float = 1.0 * MHZ
    delta_p: float = 0.0
    delta_c: float = 0.0
    lambda_p: float = 780e-9
    lambda_c: float = 480e-9
    control_doppler_sign: int = -1

    def __post_init__(self):
        for name in ("omega_p_rabi", "omega_c_rabi", "delta_p", "delta_c", "lambda_p", "lambda_c"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.omega_p_rabi < 0 or self.omega_c_rabi < 0:
            raise ParameterError("Rabi frequencies must be non-negative")
        if self.lambda_p <= 0 or self.lambda_c <= 0:
            raise ParameterError("wavelengths must be positive")
        if self.control_doppler_sign not in (-1, 1):
            raise ParameterError("control_doppler_sign must be +1 or -1")

    @property
    def omega_p(self) -> float:
        return TWO_PI * C_LIGHT / self.lambda_p

    @property
    def omega_c(self) -> float:
        return TWO_PI * C_LIGHT / self.lambda_c


@dataclass(frozen=True)
class CouplingSet:
    """Effective couplings Omega_n (rad/s) for bands n_min..n_max.

    Band n is resonant when ``delta_c + stark_shift + n * band_spacing = 0``.
    """

    bands: tuple[int, int]
    values: Mapping[int, complex]
    band_spacing: float
    stark_shift: float

    def __getitem__(self, n: int) -> complex:
        return self.values[n]

    @property
    def indices(self) -> range:
        return range(self.bands[0], self.bands[1] + 1)

    def band_offset(self, n: int, delta_c):
        """Detuning of band n from two-photon resonance (rad/s)."""
        return delta_c + self.stark_shift + n * self.band_spacing

    def peak_detuning(self, n: int) -> float:
        """Control detuning that puts band n on resonance."""
        return -self.stark_shift - n * self.band_spacing

    def power(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.values.values()))


def _check_bands(band_range) -> tuple[int, int]:
    lo, hi = (int(v) for v in band_range)
    if lo > hi:
        raise ParameterError(f"empty band range [{lo}, {hi}]")
    return lo, hi


def bessel_arguments(drive: RfDrive, medium: AtomMedium) -> tuple[float, float]:
    """(alpha eps_rf^2 / (8 hbar omega_s), alpha eps_dc eps_rf / (hbar omega_s))."""
    a = medium.alpha * drive.eps_rf**2 / (8.0 * drive.omega_s)
    b = medium.alpha * drive.eps_dc * drive.eps_rf / drive.omega_s
    return a, b


def sideband_truncation(drive: RfDrive, medium: AtomMedium) -> int:
    """Half-width of the k-sum; neglected Bessel terms are below 1e-14."""
    a, b = bessel_arguments(drive, medium)
    return math.ceil(max(abs(a), abs(b))) + BESSEL_GUARD


def sideband_coefficients(
    drive: RfDrive, medium: AtomMedium, m_lo: int, m_hi: int, extra_terms: int = 0
) -> dict[int, float]:
    """A_m = sum_k J_k(a) J_{m-2k}(b) for every m in [m_lo, m_hi]."""
    a, b = bessel_arguments(drive, medium)
    kmax = sideband_truncation(drive, medium) + int(extra_terms)
    k = np.arange(-kmax, kmax + 1)
    ja = bessel_j_range(-kmax, kmax, a)
    jlo = m_lo - 2 * kmax
    jb = bessel_j_range(jlo, m_hi + 2 * kmax, b)
    out = {}
    for m in range(m_lo, m_hi + 1):
        terms = ja * jb[m - 2 * k - jlo]
        out[m] = float(math.fsum(terms))
    return out


def sideband_coefficient(drive: RfDrive, medium: AtomMedium, m: int) -> float:
    return sideband_coefficients(drive, medium, m, m)[m]


def sideband_span(drive: RfDrive, medium: AtomMedium) -> int:
    """|m| beyond which every A_m is negligible (< 1e-16)."""
    a, b = bessel_arguments(drive, medium)
    return 2 * math.ceil(abs(a)) + math.ceil(abs(b)) + 2 * BESSEL_GUARD


def stark_shift(drive: RfDrive, medium: AtomMedium) -> float:
    """omega_alpha = alpha eps_dc^2 / (2 hbar) + alpha eps_rf^2 / (4 hbar), rad/s."""
    return medium.alpha * (drive.eps_dc**2 / 2.0 + drive.eps_rf**2 / 4.0)


def calibrate_alpha(drive: RfDrive, target_stark_shift: float) -> float:
    """Invert the Stark-shift formula for alpha/hbar."""
    denom = drive.eps_dc**2 / 2.0 + drive.eps_rf**2 / 4.0
    if denom <= 0:
        raise CalibrationError("cannot calibrate alpha with zero DC and RF fields")
    return float(target_stark_shift) / denom


def commensurability(drive: RfDrive, mod: ControlModulation) -> int:
    """L = omega_s / omega_g; raises unless it is a positive integer."""
    ratio = drive.omega_s / mod.omega_g
    L = round(ratio)
    if L < 1 or abs(ratio - L) > COMMENSURATE_RTOL * ratio:
        raise CommensurabilityError(
            f"omega_s/omega_g = {ratio:.12g} is not a positive integer"
        )
    return int(L)


def eit_couplings(
    drive: RfDrive, medium: AtomMedium, lasers: LaserParams, band_range
) -> CouplingSet:
    """Omega_m = Omega_c A_m exp(i m phi_s) on bands spaced by omega_s."""
    lo, hi = _check_bands(band_range)
    amp = sideband_coefficients(drive, medium, lo, hi)
    values = {
        m: lasers.omega_c_rabi * amp[m] * complex(math.cos(m * drive.phi_s), math.sin(m * drive.phi_s))
        for m in range(lo, hi + 1)
    }
    return CouplingSet((lo, hi), values, drive.omega_s, stark_shift(drive, medium))


def _feit_values(drive, mod, medium, lasers, lo, hi, L, relative_phase):
    terms = {}
    for n in range(lo, hi + 1):
        for j in mod.coefficients:
            if (n - j) % L == 0:
                terms.setdefault(n, []).append(((n - j) // L, j))
    ms = [m for pairs in terms.values() for m, _ in pairs]
    amp = sideband_coefficients(drive, medium, min(ms), max(ms)) if ms else {}
    values = {}
    for n in range(lo, hi + 1):
        acc = 0j
        for m, j in terms.get(n, ()):
            acc += mod.coefficients[j] * amp[m] * np.exp(1j * m * relative_phase)
        values[n] = complex(lasers.omega_c_rabi * acc)
    return values


def feit_couplings(
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    band_range,
) -> CouplingSet:
    """Omega_n = Omega_c sum_m g_{n-mL} A_m exp(i m (phi_s - L phi_g)), spacing omega_g."""
    lo, hi = _check_bands(band_range)
    L = commensurability(drive, mod)
    values = _feit_values(drive, mod, medium, lasers, lo, hi, L, drive.phi_s - L * mod.phi_g)
    return CouplingSet((lo, hi), values, mod.omega_g, stark_shift(drive, medium))


def slow_detuning(drive: RfDrive, mod: ControlModulation) -> tuple[int, float]:
    """Nearest integer L and residual detuning omega_s - L omega_g."""
    L = max(1, round(drive.omega_s / mod.omega_g))
    return int(L), drive.omega_s - L * mod.omega_g


def feit_couplings_detuned(
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    band_range,
    t: float,
) -> CouplingSet:
    """Quasi-static FEIT couplings at time t for a slightly detuned modulation.

    ``mod.omega_g`` is the actual modulation frequency. The slow detuning
    ``omega_s - L omega_g`` advances the interference phase of path m by
    ``m * delta * t``.
    """
    lo, hi = _check_bands(band_range)
    L, delta = slow_detuning(drive, mod)
    if abs(delta) > mod.omega_g / 100.0:
        warnings.warn(
            f"|omega_s - L omega_g| = {abs(delta):.4g} rad/s is not small against omega_g",
            RuntimeWarning,
            stacklevel=2,
        )
    phase = delta * float(t) + drive.phi_s - L * mod.phi_g
    values = _feit_values(drive, mod, medium, lasers, lo, hi, L, phase)
    return CouplingSet((lo, hi), values, mod.omega_g, stark_shift(drive, medium))


@dataclass(frozen=True)
class RwaReport:
    ratios: dict[str, float]
    threshold: float = RWA_WARN_RATIO

    @property
    def ok(self) -> bool:
        return all(r <= self.threshold for r in self.ratios.values())

    @property
    def flag(self) -> str:
        return "pass" if self.ok else "warn"

    def lines(self) -> list[str]:
        out = [f"rwa.{k} = {v:.6g}" for k, v in self.ratios.items()]
        out.append(f"rwa.status = {self.flag}")
        return out


def check_rwa(
    drive: RfDrive | None,
    mod: ControlModulation | None,
    medium: AtomMedium,
    lasers: LaserParams,
    threshold: float = RWA_WARN_RATIO,
) -> RwaReport:
    """Ratios that must be small for the resolved-band RWA picture to hold."""
    ratios = {}
    if drive is not None:
        ratios["omega_c_over_omega_s"] = lasers.omega_c_rabi / drive.omega_s
    if mod is not None:
        ratios["omega_c_over_omega_g"] = lasers.omega_c_rabi / mod.omega_g
    ratios["omega_c_over_omega_32"] = lasers.omega_c_rabi / medium.omega_32
    ratios["omega_p_over_omega_21"] = lasers.omega_p_rabi / medium.omega_21
    return RwaReport(ratios, threshold)


def feit_band_paths(
    drive: RfDrive, mod: ControlModulation, medium: AtomMedium, lasers: LaserParams, n: int, L: int
) -> tuple[np.ndarray, np.ndarray]:
    """Path weights ``Omega_c g_{n-mL} A_m`` and path indices m feeding band n."""
    pairs = [((n - j) // L, j) for j in sorted(mod.coefficients) if (n - j) % L == 0]
    if not pairs:
        return np.zeros(0, dtype=complex), np.zeros(0, dtype=int)
    ms = [m for m, _ in pairs]
    amp = sideband_coefficients(drive, medium, min(ms), max(ms))
    weights = np.array([lasers.omega_c_rabi * mod.coefficients[j] * amp[m] for m, j in pairs])
    return weights, np.array(ms)


def feit_coupling_vs_phase(
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    n: int,
    relative_phase,
    L: int | None = None,
) -> np.ndarray:
    """Omega_n as a function of the interference phase (phi_s - L phi_g [+ delta t]).

    Vectorised over ``relative_phase``; equals ``feit_couplings(...)[n]``
    when the phase is ``drive.phi_s - L * mod.phi_g``.
    """
    if L is None:
        L = commensurability(drive, mod)
    weights, ms = feit_band_paths(drive, mod, medium, lasers, n, L)
    phase = np.asarray(relative_phase, dtype=float)
    if ms.size == 0:
        return np.zeros_like(phase, dtype=complex)
    return np.sum(weights * np.exp(1j * np.multiply.outer(phase, ms)), axis=-1)

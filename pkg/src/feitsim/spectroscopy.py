"""Doppler-averaged probe susceptibility, band transmissions and spectra."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import epsilon_0, hbar

from .errors import ParameterError
from .floquet import (
    MHZ,
    TWO_PI,
    AtomMedium,
    ControlModulation,
    CouplingSet,
    LaserParams,
    RfDrive,
    eit_couplings,
    feit_couplings,
    feit_couplings_detuned,
    stark_shift,
)
from .special import (
    SQRT_PI,
    QuadratureRule,
    gaussian_double_pole_integral,
    gaussian_pole_integral,
)

# poles closer than this (in units of the Doppler width) use the confluent formula
_CONFLUENT_POLES = 1e-5

DEFAULT_BANDS = (-2, 2)
DEFAULT_GRID_POINTS = 2001
DEFAULT_GRID_HALF_SPAN = 80.0 * MHZ


def _prefactor(medium: AtomMedium) -> float:
    # N0 |mu12|^2 / (hbar eps0) / sqrt(pi), rad/s
    return medium.n0 * medium.mu12**2 / (hbar * epsilon_0) / SQRT_PI


def _denominator_parts(coupling_abs2, delta_p, two_photon, medium, lasers):
    """Coefficients of D(u x) = a1 + b1 x + C / (a2 + b2 x), x = v / u."""
    u = medium.most_probable_speed
    k_p = lasers.omega_p / C_LIGHT
    k_d = (lasers.omega_p + lasers.control_doppler_sign * lasers.omega_c) / C_LIGHT
    a1 = medium.gamma1 - 1j * np.asarray(delta_p, dtype=float)
    b1 = -1j * k_p * u
    a2 = medium.gamma2 - 1j * np.asarray(two_photon, dtype=float)
    b2 = -1j * k_d * u
    cc = np.asarray(coupling_abs2, dtype=float) / 4.0
    return a1, b1, a2, b2, cc


def _doppler_integral_exact(coupling_abs2, delta_p, two_photon, medium, lasers):
    """int exp(-x^2) / D(u x) dx in closed form.

    1/D is a ratio of a linear and a quadratic polynomial in x, so it splits
    into at most two simple poles and each pole integrates to a Faddeeva
    function value.
    """
    a1, b1, a2, b2, cc = _denominator_parts(coupling_abs2, delta_p, two_photon, medium, lasers)
    a1, a2, cc = np.broadcast_arrays(a1, a2, cc)
    # Q(x) = q2 x^2 + q1 x + q0 ; N(x) = a2 + b2 x ; 1/D = N/Q
    q2 = b1 * b2
    q1 = a1 * b2 + a2 * b1
    q0 = a1 * a2 + cc
    if q2 == 0:
        # no two-photon Doppler term: single pole of a1 + b1 x + cc/a2
        z = -(a1 + cc / a2) / b1
        return gaussian_pole_integral(z) / b1

    disc = np.sqrt(q1 * q1 - 4.0 * q2 * q0)
    sgn = np.where((np.conj(q1) * disc).real >= 0, 1.0, -1.0)
    big = -0.5 * (q1 + sgn * disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        z1 = big / q2
        z2 = np.where(big != 0, q0 / big, -q1 / q2)
    h = z1 - z2
    confluent = np.abs(h) < _CONFLUENT_POLES

    # divided difference of F(z) = N(z) I(z) / q2
    i1 = gaussian_pole_integral(z1)
    i2 = gaussian_pole_integral(z2)
    with np.errstate(divide="ignore", invalid="ignore"):
        split = ((a2 + b2 * z1) * i1 - (a2 + b2 * z2) * i2) / (q2 * h)
    if np.any(confluent):
        zm = 0.5 * (z1 + z2)
        deriv = (b2 * gaussian_pole_integral(zm) + (a2 + b2 * zm) * gaussian_double_pole_integral(zm)) / q2
        split = np.where(confluent, deriv, split)
    return split


def _doppler_integral_quadrature(coupling_abs2, delta_p, two_photon, medium, lasers, rule):
    a1, b1, a2, b2, cc = _denominator_parts(coupling_abs2, delta_p, two_photon, medium, lasers)
    x = np.asarray(rule.nodes)
    w = np.asarray(rule.weights)
    a1, a2, cc = (np.asarray(v)[..., None] for v in (a1, a2, cc))
    d = a1 + b1 * x + cc / (a2 + b2 * x)
    return np.sum(w / d, axis=-1)


def susceptibility_array(
    coupling_abs2,
    delta_p,
    two_photon,
    medium: AtomMedium,
    lasers: LaserParams,
    rule: QuadratureRule | None = None,
):
    """Vectorised Doppler-averaged susceptibility.

    ``two_photon`` is ``delta_p + Delta_n``. With ``rule`` the velocity
    integral is evaluated by Gauss-Hermite quadrature instead of in closed form.
    """
    if rule is None:
        integral = _doppler_integral_exact(coupling_abs2, delta_p, two_photon, medium, lasers)
    else:
        if rule.order < 2:
            raise ParameterError("quadrature order must be at least 2")
        integral = _doppler_integral_quadrature(coupling_abs2, delta_p, two_photon, medium, lasers, rule)
    return 1j * _prefactor(medium) * integral


def susceptibility(
    coupling: complex,
    band_offset: float,
    medium: AtomMedium,
    lasers: LaserParams,
    rule: QuadratureRule | None = None,
) -> complex:
    """chi for one band with effective coupling ``coupling`` and offset Delta_n.

    ``rule=None`` (the default) uses the closed-form velocity integral.
    """
    val = susceptibility_array(
        abs(coupling) ** 2, lasers.delta_p, lasers.delta_p + band_offset, medium, lasers, rule
    )
    return complex(val)


def transmission_from_chi(chi, medium: AtomMedium, lasers: LaserParams):
    return np.exp(-TWO_PI * medium.length * np.imag(chi) / lasers.lambda_p)


def band_transmission(
    coupling: complex,
    band_offset: float,
    medium: AtomMedium,
    lasers: LaserParams,
    rule: QuadratureRule | None = None,
) -> float:
    """T_n = exp(-2 pi l Im(chi) / lambda_p)."""
    chi = susceptibility(coupling, band_offset, medium, lasers, rule)
    return float(transmission_from_chi(chi, medium, lasers))


def couplings_for(
    drive: RfDrive,
    mod: ControlModulation | None,
    medium: AtomMedium,
    lasers: LaserParams,
    band_range,
    time: float | None = None,
) -> CouplingSet:
    """EIT couplings when ``mod`` is None, FEIT (optionally detuned at ``time``) otherwise."""
    if mod is None:
        return eit_couplings(drive, medium, lasers, band_range)
    if time is None:
        return feit_couplings(drive, mod, medium, lasers, band_range)
    return feit_couplings_detuned(drive, mod, medium, lasers, band_range, time)


def default_detuning_grid(
    drive: RfDrive,
    medium: AtomMedium,
    points: int = DEFAULT_GRID_POINTS,
    half_span: float = DEFAULT_GRID_HALF_SPAN,
) -> np.ndarray:
    """Uniform Delta_c grid centred on the main (n = 0) resonance at -omega_alpha."""
    center = -stark_shift(drive, medium)
    return np.linspace(center - half_span, center + half_span, int(points))


@dataclass
class SpectrumResult:
    detuning_grid: np.ndarray
    per_band: dict[int, np.ndarray]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        """Sum of band transmissions at each grid point."""
        out = np.zeros_like(self.detuning_grid)
        for n in sorted(self.per_band):
            out = out + self.per_band[n]
        return out

    @property
    def total_product(self) -> np.ndarray:
        """Product of band transmissions (all bands attenuating one beam)."""
        out = np.ones_like(self.detuning_grid)
        for n in sorted(self.per_band):
            out = out * self.per_band[n]
        return out

    def peak_detuning(self) -> float:
        return float(self.detuning_grid[int(np.argmax(self.total))])

    def to_csv(self, path) -> Path:
        path = Path(path)
        bands = sorted(self.per_band)
        total = self.total
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["delta_c_hz", "total"] + [f"T_{n}" for n in bands])
            for j, dc in enumerate(self.detuning_grid):
                row = [dc / TWO_PI, total[j]] + [self.per_band[n][j] for n in bands]
                writer.writerow([f"{v:.17g}" for v in row])
        return path


def sweep_spectrum(
    drive: RfDrive,
    mod: ControlModulation | None,
    medium: AtomMedium,
    lasers: LaserParams,
    grid=None,
    band_range=DEFAULT_BANDS,
    scheme: str = "FEIT",
    time: float | None = None,
    rule: QuadratureRule | None = None,
) -> SpectrumResult:
    """Per-band and total transmission against control detuning.

    The probe stays at ``lasers.delta_p``; every band shares the same
    Delta_c axis.
    """
    scheme = scheme.upper()
    if scheme not in ("EIT", "FEIT"):
        raise ParameterError(f"unknown scheme {scheme!r}")
    if scheme == "FEIT" and mod is None:
        raise ParameterError("FEIT scheme needs a control modulation")
    grid = default_detuning_grid(drive, medium) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("detuning grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("detuning grid must be strictly increasing")

    cs = couplings_for(drive, mod if scheme == "FEIT" else None, medium, lasers, band_range, time)
    per_band = {}
    for n in cs.indices:
        offsets = cs.band_offset(n, grid)
        chi = susceptibility_array(
            abs(cs[n]) ** 2, lasers.delta_p, lasers.delta_p + offsets, medium, lasers, rule
        )
        per_band[n] = transmission_from_chi(chi, medium, lasers)
    meta = {
        "scheme": scheme,
        "drive": asdict(drive),
        "modulation": None if mod is None else {
            "omega_g": mod.omega_g, "phi_g": mod.phi_g, "kind": mod.kind,
            "coefficients": {n: mod.coefficients[n] for n in sorted(mod.coefficients)},
        },
        "medium": asdict(medium),
        "lasers": asdict(lasers),
        "quadrature_order": None if rule is None else rule.order,
        "time": time,
        "band_range": tuple(cs.bands),
    }
    return SpectrumResult(grid, per_band, meta)


def band_peak_transmission(
    drive: RfDrive,
    mod: ControlModulation | None,
    medium: AtomMedium,
    lasers: LaserParams,
    n: int,
    time: float | None = None,
    rule: QuadratureRule | None = None,
) -> float:
    """T_n with the control locked on band n's two-photon resonance.

    The lock sits at ``Delta_c = -omega_alpha - n * spacing``; ``lasers.delta_c``
    is added on top as a lock error.
    """
    cs = couplings_for(drive, mod, medium, lasers, (n, n), time)
    delta_c = cs.peak_detuning(n) + lasers.delta_c
    return band_transmission(cs[n], cs.band_offset(n, delta_c), medium, lasers, rule)

"""RF phase and amplitude measurement protocols with a Monte-Carlo noise model.

All observables are evaluated with the control locked on the band peaks
(``Delta_c = -omega_alpha - n * spacing``) and the probe on resonance. Noise
enters as a multiplicative error on Omega_c and additive jitter on the probe
and control detunings. Each spectrum acquisition within a Monte-Carlo sample
gets its own quasi-static draw: T_{-1} and T_{1} read off one spectrum share
it, while separate acquisitions (the points of a time trace, or an RF-off
reference) do not.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AmbiguityError, OutOfRangeError, ParameterError
from .floquet import (
    MHZ,
    TWO_PI,
    AtomMedium,
    ControlModulation,
    LaserParams,
    RfDrive,
    commensurability,
    eit_couplings,
    feit_coupling_vs_phase,
    slow_detuning,
)
from .special import QuadratureRule
from .spectroscopy import susceptibility_array, transmission_from_chi

PHASE_STEP = 1e-3  # rad
EPS_RF_STEP = 1e-3  # V/cm
CHUNK = 1024  # Monte-Carlo samples per work item; fixed so results ignore thread count
MIN_DERIVATIVE = 1e-15


@dataclass(frozen=True)
class NoiseModel:
    """Quasi-static Gaussian noise, one draw per Monte-Carlo sample.

    ``laser_freq_sigma`` is the 1-sigma jitter (rad/s) applied to both the
    probe and control detunings; ``laser_freq_correlation`` couples the two.
    """

    omega_c_rabi_rel_sigma: float = 0.01
    laser_freq_sigma: float = 0.1 * MHZ
    samples: int = 10_000
    seed: int = 0
    laser_freq_correlation: float = 0.0

    def __post_init__(self):
        if self.omega_c_rabi_rel_sigma < 0 or self.laser_freq_sigma < 0:
            raise ParameterError("noise standard deviations must be non-negative")
        if int(self.samples) < 2:
            raise ParameterError("Monte-Carlo needs at least 2 samples")
        if not -1.0 <= self.laser_freq_correlation <= 1.0:
            raise ParameterError("laser_freq_correlation must lie in [-1, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    @property
    def noiseless(self) -> bool:
        return self.omega_c_rabi_rel_sigma == 0 and self.laser_freq_sigma == 0


@dataclass(frozen=True)
class NoiseDraws:
    """Per-sample perturbations.

    Arrays have shape (samples,) for a single acquisition or
    (acquisitions, samples) otherwise.
    """

    omega_c_scale: np.ndarray
    delta_p_shift: np.ndarray
    delta_c_shift: np.ndarray

    @classmethod
    def none(cls) -> "NoiseDraws":
        return cls(np.ones(1), np.zeros(1), np.zeros(1))

    def __len__(self) -> int:
        return self.omega_c_scale.shape[-1]

    @property
    def acquisitions(self) -> int:
        return 1 if self.omega_c_scale.ndim == 1 else self.omega_c_scale.shape[0]

    def chunk(self, start: int, stop: int) -> "NoiseDraws":
        return NoiseDraws(
            self.omega_c_scale[..., start:stop],
            self.delta_p_shift[..., start:stop],
            self.delta_c_shift[..., start:stop],
        )

    def acquisition(self, k: int) -> "NoiseDraws":
        if self.omega_c_scale.ndim == 1:
            return self
        return NoiseDraws(self.omega_c_scale[k], self.delta_p_shift[k], self.delta_c_shift[k])


@lru_cache(maxsize=4)
def _standard_normals(seed: int, samples: int, acquisitions: int = 1) -> np.ndarray:
    # Sample i gets its own Philox stream: key = seed, counter high word = i.
    # Acquisition k of a sample takes normals 3k..3k+2 of that stream.
    out = np.empty((acquisitions, samples, 3))
    for i in range(samples):
        gen = np.random.Generator(np.random.Philox(key=seed, counter=i << 192))
        out[:, i] = gen.standard_normal((acquisitions, 3))
    out.setflags(write=False)
    return out


def draw_noise(noise: NoiseModel, acquisitions: int = 1) -> NoiseDraws:
    """Draws for every sample; 1-D arrays when ``acquisitions`` is 1."""
    if int(acquisitions) < 1:
        raise ParameterError("acquisitions must be positive")
    z = _standard_normals(int(noise.seed), int(noise.samples), int(acquisitions))
    if acquisitions == 1:
        z = z[0]
    rho = noise.laser_freq_correlation
    zc = rho * z[..., 1] + math.sqrt(1.0 - rho * rho) * z[..., 2]
    return NoiseDraws(
        1.0 + noise.omega_c_rabi_rel_sigma * z[..., 0],
        noise.laser_freq_sigma * z[..., 1],
        noise.laser_freq_sigma * zc,
    )


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("FEITSIM_THREADS", "1"))
    return max(1, int(threads))


def monte_carlo_observable(
    observable: Callable[[NoiseDraws], np.ndarray],
    noise: NoiseModel,
    threads: int | None = None,
    acquisitions: int = 1,
) -> tuple[float, float]:
    """Sample mean and unbiased standard deviation of ``observable`` under ``noise``.

    ``observable`` maps a batch of draws to one value per sample. Batches have
    a fixed size, so results are bitwise identical for any thread count.
    """
    draws = draw_noise(noise, acquisitions)
    n = len(draws)
    bounds = [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]
    nthreads = resolve_threads(threads)

    def run(b):
        return np.asarray(observable(draws.chunk(*b)), dtype=float)

    if nthreads == 1:
        parts = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(pool.map(run, bounds))
    values = np.concatenate(parts)
    return float(np.mean(values)), float(np.std(values, ddof=1))


@dataclass
class ScanResult:
    abscissa: np.ndarray
    observable: np.ndarray
    tag: str
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.observable = np.asarray(self.observable, dtype=float)
        if self.abscissa.shape != self.observable.shape:
            raise ParameterError("abscissa and observable lengths differ")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.abscissa.shape:
                raise ParameterError("sigma length differs from abscissa")
        if np.any(np.diff(self.abscissa) <= 0):
            raise ParameterError("scan abscissa must be strictly increasing")

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# tag: {self.tag}\n")
            writer = csv.writer(fh, lineterminator="\n")
            header = ["abscissa", "observable"] + (["sigma"] if self.sigma is not None else [])
            writer.writerow(header)
            for j in range(self.abscissa.size):
                row = [self.abscissa[j], self.observable[j]]
                if self.sigma is not None:
                    row.append(self.sigma[j])
                writer.writerow([f"{v:.17g}" for v in row])
        return path


# -- band-peak evaluation ------------------------------------------------------


def _locked_transmission(omega_abs2, medium, lasers, draws, rule=None):
    """T of a band whose control is locked on its peak.

    ``omega_abs2`` gains a trailing sample axis and broadcasts against the
    draws. At the lock Delta_n reduces to the lock error ``lasers.delta_c``
    plus the control jitter.
    """
    delta_p = lasers.delta_p + draws.delta_p_shift
    band_offset = lasers.delta_c + draws.delta_c_shift
    omega2 = np.asarray(omega_abs2, dtype=float)[..., None] * draws.omega_c_scale**2
    two_photon = delta_p + band_offset
    chi = susceptibility_array(omega2, delta_p, two_photon, medium, lasers, rule)
    return transmission_from_chi(chi, medium, lasers)


def _first_order_contrast(drive, mod, medium, lasers, relative_phase, draws, L, rule=None):
    """T_{-1} - T_{1} for an array of interference phases; shape (phases, draws)."""
    out = None
    for n, sign in ((-1, 1.0), (1, -1.0)):
        omega = feit_coupling_vs_phase(drive, mod, medium, lasers, n, relative_phase, L)
        t = _locked_transmission(np.abs(omega) ** 2, medium, lasers, draws, rule)
        out = sign * t if out is None else out + sign * t
    return out


def _noiseless(draws: NoiseDraws | None) -> NoiseDraws:
    return NoiseDraws.none() if draws is None else draws


def phase_contrast(drive, mod, medium, lasers, draws: NoiseDraws | None = None, rule=None) -> np.ndarray:
    """T_{-1} - T_{1} at the drive's phase; one value per draw."""
    L = commensurability(drive, mod)
    phase = drive.phi_s - L * mod.phi_g
    return _first_order_contrast(drive, mod, medium, lasers, phase, _noiseless(draws), L, rule)


def phase_scan(
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    phi_grid,
    rule: QuadratureRule | None = None,
) -> ScanResult:
    """T_{-1} - T_{1} against RF phase with omega_g commensurate to omega_s."""
    phi = np.asarray(phi_grid, dtype=float)
    if np.any(phi < 0) or np.any(phi >= TWO_PI):
        raise ParameterError("phase grid must lie in [0, 2pi)")
    L = commensurability(drive, mod)
    rel = phi - L * mod.phi_g
    vals = _first_order_contrast(drive, mod, medium, lasers, rel, NoiseDraws.none(), L, rule)
    return ScanResult(phi, vals[:, 0], "T-1-T1/FEIT")


def invert_phase(scan: ScanResult, measured_contrast: float) -> tuple[float, ...]:
    """Candidate phases {phi, 2pi - phi} reproducing ``measured_contrast``.

    Uses linear interpolation on the [0, pi] branch of the scan, which must be
    strictly monotone.
    """
    keep = scan.abscissa <= math.pi + 1e-12
    x = scan.abscissa[keep]
    y = scan.observable[keep]
    if x.size < 2:
        raise ParameterError("scan must cover at least two phases in [0, pi]")
    dy = np.diff(y)
    if not (np.all(dy > 0) or np.all(dy < 0)):
        raise ParameterError("scan is not monotone on [0, pi]")
    if dy[0] < 0:
        x, y = x[::-1], y[::-1]
    tol = 1e-12 * max(1.0, abs(y[-1] - y[0]))
    if not y[0] - tol <= measured_contrast <= y[-1] + tol:
        raise OutOfRangeError(
            f"contrast {measured_contrast:.6g} outside scanned range [{y[0]:.6g}, {y[-1]:.6g}]"
        )
    phi = float(np.interp(measured_contrast, y, x))
    mirror = (TWO_PI - phi) % TWO_PI
    if abs(phi - mirror) < 1e-12 or abs(abs(phi - mirror) - TWO_PI) < 1e-12:
        return (phi,)
    return tuple(sorted((phi, mirror)))


def _detuned_modulation(drive, mod, delta_omega):
    L = commensurability(drive, mod)
    return mod.with_frequency((drive.omega_s - delta_omega) / L), L


def _trace_contrast(drive, mod, medium, lasers, delta_omega, t, draws, rule=None):
    """T_{-1} - T_{1} over times t for the slightly detuned modulation."""
    mod_d, L = _detuned_modulation(drive, mod, delta_omega)
    _, delta = slow_detuning(drive, mod_d)
    rel = delta * np.asarray(t, dtype=float) + drive.phi_s - L * mod_d.phi_g
    return _first_order_contrast(drive, mod_d, medium, lasers, rel, draws, L, rule)


def time_trace(
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    delta_omega: float,
    t_grid,
    rule: QuadratureRule | None = None,
) -> ScanResult:
    """T_{1} - T_{-1} against time when omega_g = (omega_s - delta_omega) / L.

    ``mod`` carries the commensurate modulation frequency; the quasi-static
    couplings follow the slowly advancing interference phase.
    """
    t = np.asarray(t_grid, dtype=float)
    vals = -_trace_contrast(drive, mod, medium, lasers, delta_omega, t, NoiseDraws.none(), rule)[:, 0]
    return ScanResult(t, vals, "T1-T-1/FEIT")


def _circular_distance(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def disambiguate_phase(
    candidates,
    measured_trace: ScanResult,
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    delta_omega: float,
    margin: float = 1e-6,
    merge_below: float = 1e-3,
    rule: QuadratureRule | None = None,
) -> float:
    """Pick the candidate whose simulated time trace best matches the measurement.

    Candidates closer than ``merge_below`` rad are already resolved to that
    precision and are returned as their circular midpoint.
    """
    cands = [float(c) % TWO_PI for c in candidates]
    if len(cands) == 1:
        return cands[0]
    if len(cands) != 2:
        raise ParameterError("expected one or two candidate phases")
    a, b = cands
    if _circular_distance(a, b) < merge_below:
        mid = math.atan2(math.sin(a) + math.sin(b), math.cos(a) + math.cos(b))
        return mid % TWO_PI
    rms = []
    for phi in cands:
        sim = time_trace(replace(drive, phi_s=phi), mod, medium, lasers, delta_omega, measured_trace.abscissa, rule)
        rms.append(float(np.sqrt(np.mean((sim.observable - measured_trace.observable) ** 2))))
    if abs(rms[0] - rms[1]) <= margin:
        raise AmbiguityError(
            f"traces for {a:.6g} and {b:.6g} rad are indistinguishable (rms {rms[0]:.3g} vs {rms[1]:.3g})"
        )
    return cands[int(np.argmin(rms))]


# -- amplitude protocol -----------------------------------------------------------


def _period_grid(delta_omega: float, points: int) -> np.ndarray:
    return (TWO_PI / abs(delta_omega)) * np.arange(points) / points


def feit_oscillation_contrast(
    drive, mod, medium, lasers, delta_omega, points: int = 256, draws: NoiseDraws | None = None, rule=None
) -> np.ndarray:
    """max - min of T_{-1} - T_{1} over one slow period; one value per sample.

    With ``points`` acquisitions in ``draws`` every time point gets its own
    draw; single-acquisition draws are held over the whole period.
    """
    if delta_omega == 0:
        raise ParameterError("amplitude protocol needs a non-zero delta_omega")
    if draws is not None and draws.acquisitions not in (1, points):
        raise ParameterError("draws must hold one acquisition or one per time point")
    t = _period_grid(delta_omega, points)
    vals = _trace_contrast(drive, mod, medium, lasers, delta_omega, t, _noiseless(draws), rule)
    return vals.max(axis=0) - vals.min(axis=0)


def amplitude_scan(
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    delta_omega: float,
    eps_rf_grid,
    points: int = 256,
    rule: QuadratureRule | None = None,
) -> ScanResult:
    """FEIT oscillation contrast Delta T against RF amplitude."""
    eps = np.asarray(eps_rf_grid, dtype=float)
    vals = [
        feit_oscillation_contrast(replace(drive, eps_rf=e), mod, medium, lasers, delta_omega, points, None, rule)[0]
        for e in eps
    ]
    return ScanResult(eps, vals, "DeltaT/FEIT")


def eit_contrast(drive, medium, lasers, draws: NoiseDraws | None = None, rule=None) -> np.ndarray:
    """T_{-1}(eps_rf) - T_{-1}(eps_rf = 0) with the control on the m = -1 EIT band.

    With two acquisitions in ``draws`` the RF-off reference takes the second.
    """
    draws = _noiseless(draws)
    if draws.acquisitions not in (1, 2):
        raise ParameterError("draws must hold one or two acquisitions")
    out = None
    for k, (d, sign) in enumerate(((drive, 1.0), (replace(drive, eps_rf=0.0), -1.0))):
        cs = eit_couplings(d, medium, lasers, (-1, -1))
        t = _locked_transmission(abs(cs[-1]) ** 2, medium, lasers, draws.acquisition(k), rule)
        out = sign * t if out is None else out + sign * t
    return out


def eit_amplitude_scan(
    drive: RfDrive, medium: AtomMedium, lasers: LaserParams, eps_rf_grid, rule: QuadratureRule | None = None
) -> ScanResult:
    eps = np.asarray(eps_rf_grid, dtype=float)
    vals = [eit_contrast(replace(drive, eps_rf=e), medium, lasers, None, rule)[0] for e in eps]
    return ScanResult(eps, vals, "DeltaT/EIT")


def invert_amplitude(scan: ScanResult, measured_contrast: float) -> float:
    """RF amplitude on the rising branch of an amplitude scan (linear interpolation)."""
    y = scan.observable
    top = int(np.argmax(y))
    x, y = scan.abscissa[: top + 1], y[: top + 1]
    if x.size < 2 or np.any(np.diff(y) <= 0):
        raise ParameterError("amplitude scan has no strictly rising branch")
    tol = 1e-12 * max(1.0, abs(y[-1] - y[0]))
    if not y[0] - tol <= measured_contrast <= y[-1] + tol:
        raise OutOfRangeError(f"contrast {measured_contrast:.6g} outside rising branch")
    return float(np.interp(measured_contrast, y, x))


# -- accuracy estimators -----------------------------------------------------------


@dataclass
class DerivativeCheck:
    """Central difference at step h against its Richardson extrapolation with h/2."""

    derivative: float
    richardson: float

    @property
    def relative_gap(self) -> float:
        if self.richardson == 0:
            return math.inf if self.derivative else 0.0
        return abs(self.derivative - self.richardson) / abs(self.richardson)


def _central_difference(func: Callable[[float], float], x: float, h: float) -> DerivativeCheck:
    d1 = (func(x + h) - func(x - h)) / (2 * h)
    d2 = (func(x + h / 2) - func(x - h / 2)) / h
    return DerivativeCheck(d1, (4 * d2 - d1) / 3)


def _accuracy(std: float, deriv: float) -> float:
    if abs(deriv) < MIN_DERIVATIVE:
        return math.inf
    return std / abs(deriv)


@dataclass
class AccuracyResult(ScanResult):
    derivative_checks: list = field(default_factory=list)


def phase_accuracy(
    phi_grid,
    noise: NoiseModel,
    drive: RfDrive,
    mod: ControlModulation,
    medium: AtomMedium,
    lasers: LaserParams,
    threads: int | None = None,
    step: float = PHASE_STEP,
    rule: QuadratureRule | None = None,
) -> AccuracyResult:
    """delta phi_s = std(T_{-1} - T_{1}) / |d(T_{-1} - T_{1}) / d phi_s|."""
    phi = np.asarray(phi_grid, dtype=float)
    acc, sig, checks = [], [], []
    for p in phi:
        d = replace(drive, phi_s=p)
        _, std = monte_carlo_observable(lambda dr: phase_contrast(d, mod, medium, lasers, dr, rule), noise, threads)

        def noiseless(x):
            return float(phase_contrast(replace(drive, phi_s=x), mod, medium, lasers, None, rule)[0])

        chk = _central_difference(noiseless, float(p), step)
        acc.append(_accuracy(std, chk.derivative))
        sig.append(std)
        checks.append(chk)
    return AccuracyResult(phi, acc, "delta_phi_s/FEIT", sig, checks)


def amplitude_accuracy(
    eps_grid,
    noise: NoiseModel,
    drive: RfDrive,
    mod: ControlModulation | None,
    medium: AtomMedium,
    lasers: LaserParams,
    scheme: str = "FEIT",
    delta_omega: float = 0.005 * MHZ,
    points: int = 256,
    threads: int | None = None,
    step: float = EPS_RF_STEP,
    rule: QuadratureRule | None = None,
) -> AccuracyResult:
    """delta eps_rf = std(Delta T) / |d Delta T / d eps_rf| for the FEIT or EIT contrast.

    Every spectrum acquisition draws its own noise: ``points`` per FEIT period
    and two (RF on, RF off) for EIT.
    """
    scheme = scheme.upper()
    if scheme == "FEIT":
        if mod is None:
            raise ParameterError("FEIT scheme needs a control modulation")

        def observable(d, draws=None):
            return feit_oscillation_contrast(d, mod, medium, lasers, delta_omega, points, draws, rule)

        acquisitions = points
    elif scheme == "EIT":

        def observable(d, draws=None):
            return eit_contrast(d, medium, lasers, draws, rule)

        acquisitions = 2
    else:
        raise ParameterError(f"unknown scheme {scheme!r}")

    eps = np.asarray(eps_grid, dtype=float)
    acc, sig, checks = [], [], []
    for e in eps:
        d = replace(drive, eps_rf=e)
        _, std = monte_carlo_observable(lambda dr: observable(d, dr), noise, threads, acquisitions)

        def noiseless(x):
            # both contrasts are even in eps_rf (a sign flip is a pi phase shift)
            return float(observable(replace(drive, eps_rf=abs(x)))[0])

        chk = _central_difference(noiseless, float(e), step)
        acc.append(_accuracy(std, chk.derivative))
        sig.append(std)
        checks.append(chk)
    return AccuracyResult(eps, acc, f"delta_eps_rf/{scheme}", sig, checks)

"""Floquet EIT simulator for phase-sensitive Rydberg-atom RF interferometry."""

from .errors import (
    AmbiguityError,
    CalibrationError,
    CommensurabilityError,
    DomainError,
    FeitsimError,
    OutOfRangeError,
    ParameterError,
)
from .floquet import (
    MHZ,
    AtomMedium,
    ControlModulation,
    CouplingSet,
    LaserParams,
    RfDrive,
    calibrate_alpha,
    check_rwa,
    commensurability,
    eit_couplings,
    feit_couplings,
    feit_couplings_detuned,
    sideband_coefficient,
    sideband_coefficients,
    stark_shift,
)
from .protocols import (
    NoiseModel,
    ScanResult,
    amplitude_accuracy,
    amplitude_scan,
    disambiguate_phase,
    eit_amplitude_scan,
    invert_amplitude,
    invert_phase,
    monte_carlo_observable,
    phase_accuracy,
    phase_scan,
    time_trace,
)
from .special import QuadratureRule, bessel_j, gauss_hermite
from .spectroscopy import (
    SpectrumResult,
    band_peak_transmission,
    band_transmission,
    susceptibility,
    sweep_spectrum,
)

__version__ = "0.1.0"

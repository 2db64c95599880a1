"""Line-oriented ``section.key = value`` run configuration.

Units are part of the key name: ``_mhz`` keys are ordinary frequencies in MHz
(converted to rad/s internally), ``_v_per_cm`` field strengths, ``_rad``
phases, ``_k`` temperatures, ``_m`` lengths. ``#`` starts a comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from typing import Any

import numpy as np
from scipy.constants import c as C_LIGHT

from .errors import FeitsimError, ParameterError
from .floquet import (
    DEFAULT_ALPHA,
    MHZ,
    TWO_PI,
    AtomMedium,
    ControlModulation,
    LaserParams,
    RfDrive,
    commensurability,
)
from .protocols import NoiseModel
from .special import QuadratureRule, gauss_hermite
from .spectroscopy import DEFAULT_GRID_HALF_SPAN, DEFAULT_GRID_POINTS, default_detuning_grid


class ConfigError(FeitsimError, ValueError):
    """Problem in a configuration file; ``line`` and ``col`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}" + (f", col {col}" if col is not None else "") + ": "
        super().__init__(where + message)
        self.message = message


# unit suffixes, longest first so that e.g. `_mhz_cm2_per_v2` wins over `_mhz`
UNITS = (
    "_mhz_cm2_per_v2",
    "_v_per_cm",
    "_per_m3",
    "_c_m",
    "_mhz",
    "_rad",
    "_kg",
    "_k",
    "_m",
)

MODULATION_KINDS = ("cosine", "constant")
SCHEMES = ("EIT", "FEIT")
ACCURACY_KINDS = ("phase", "amplitude")


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a run, stored in config-file units."""

    # RF drive
    rf_eps_dc_v_per_cm: float = 3.0
    rf_eps_rf_v_per_cm: float = 0.5
    rf_omega_s_mhz: float = 30.0
    rf_phi_s_rad: float = 0.0
    # control modulation
    mod_kind: str = "cosine"
    mod_omega_g_mhz: float = 30.0
    mod_phi_g_rad: float = 0.0
    mod_delta_omega_mhz: float = 0.005
    # medium
    atom_alpha_mhz_cm2_per_v2: float = DEFAULT_ALPHA / MHZ
    atom_lambda_21_m: float = 780e-9
    atom_lambda_32_m: float = 480e-9
    atom_gamma1_mhz: float = 3.0
    atom_gamma2_mhz: float = 0.1
    atom_mu12_c_m: float = 1.0e-29
    atom_n0_per_m3: float = 4.5e16
    atom_t0_k: float = 300.0
    atom_mass_kg: float = 1.41e-25
    atom_length_m: float = 0.05
    # lasers
    laser_omega_p_mhz: float = 0.1
    laser_omega_c_mhz: float = 1.0
    laser_delta_p_mhz: float = 0.0
    laser_delta_c_mhz: float = 0.0
    laser_lambda_p_m: float = 780e-9
    laser_lambda_c_m: float = 480e-9
    laser_control_doppler_sign: int = -1
    # noise
    noise_omega_c_rel_sigma: float = 0.01
    noise_laser_freq_sigma_mhz: float = 0.1
    noise_laser_freq_correlation: float = 0.0
    noise_samples: int = 10_000
    noise_seed: int = 0
    # grids
    grid_detuning_points: int = DEFAULT_GRID_POINTS
    grid_detuning_half_span_mhz: float = DEFAULT_GRID_HALF_SPAN / MHZ
    grid_phase_points: int = 201
    grid_eps_rf_min_v_per_cm: float = 0.0
    grid_eps_rf_max_v_per_cm: float = 2.0
    grid_eps_rf_points: int = 41
    grid_time_points: int = 256
    grid_time_periods: float = 1.0
    # run
    run_scheme: str = "FEIT"
    run_band_min: int = -2
    run_band_max: int = 2
    run_quadrature_order: int = 0
    run_accuracy: str = "phase"
    run_threads: int = 0
    run_out: str = "out"
    calibrate_target_stark_shift_mhz: float = -51.6

    def __post_init__(self):
        # coerce numeric types so equality after a round trip is exact
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type == "float":
                object.__setattr__(self, f.name, float(value))
            elif f.type == "int":
                object.__setattr__(self, f.name, int(value))

    # -- physics objects -----------------------------------------------------

    @property
    def drive(self) -> RfDrive:
        return RfDrive(
            self.rf_eps_dc_v_per_cm, self.rf_eps_rf_v_per_cm, self.rf_omega_s_mhz * MHZ, self.rf_phi_s_rad
        )

    @property
    def modulation(self) -> ControlModulation | None:
        if self.run_scheme == "EIT":
            return None
        build = ControlModulation.cosine if self.mod_kind == "cosine" else ControlModulation.constant
        return build(self.mod_omega_g_mhz * MHZ, self.mod_phi_g_rad)

    @property
    def medium(self) -> AtomMedium:
        return AtomMedium(
            alpha=self.atom_alpha_mhz_cm2_per_v2 * MHZ,
            omega_21=TWO_PI * C_LIGHT / self.atom_lambda_21_m,
            omega_32=TWO_PI * C_LIGHT / self.atom_lambda_32_m,
            gamma1=self.atom_gamma1_mhz * MHZ,
            gamma2=self.atom_gamma2_mhz * MHZ,
            mu12=self.atom_mu12_c_m,
            n0=self.atom_n0_per_m3,
            t0=self.atom_t0_k,
            mass=self.atom_mass_kg,
            length=self.atom_length_m,
        )

    @property
    def lasers(self) -> LaserParams:
        return LaserParams(
            omega_p_rabi=self.laser_omega_p_mhz * MHZ,
            omega_c_rabi=self.laser_omega_c_mhz * MHZ,
            delta_p=self.laser_delta_p_mhz * MHZ,
            delta_c=self.laser_delta_c_mhz * MHZ,
            lambda_p=self.laser_lambda_p_m,
            lambda_c=self.laser_lambda_c_m,
            control_doppler_sign=self.laser_control_doppler_sign,
        )

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(
            omega_c_rabi_rel_sigma=self.noise_omega_c_rel_sigma,
            laser_freq_sigma=self.noise_laser_freq_sigma_mhz * MHZ,
            samples=self.noise_samples,
            seed=self.noise_seed,
            laser_freq_correlation=self.noise_laser_freq_correlation,
        )

    @property
    def delta_omega(self) -> float:
        return self.mod_delta_omega_mhz * MHZ

    @property
    def band_range(self) -> tuple[int, int]:
        return (self.run_band_min, self.run_band_max)

    @property
    def rule(self) -> QuadratureRule | None:
        """Gauss-Hermite rule, or None for the closed-form velocity integral."""
        return None if self.run_quadrature_order == 0 else gauss_hermite(self.run_quadrature_order)

    @property
    def threads(self) -> int | None:
        return None if self.run_threads == 0 else self.run_threads

    def phase_grid(self) -> np.ndarray:
        return TWO_PI * np.arange(self.grid_phase_points) / self.grid_phase_points

    def eps_rf_grid(self) -> np.ndarray:
        return np.linspace(self.grid_eps_rf_min_v_per_cm, self.grid_eps_rf_max_v_per_cm, self.grid_eps_rf_points)

    def time_grid(self) -> np.ndarray:
        period = TWO_PI / abs(self.delta_omega)
        n = self.grid_time_points
        return self.grid_time_periods * period * np.arange(n) / n

    def detuning_grid(self) -> np.ndarray:
        return default_detuning_grid(
            self.drive, self.medium, self.grid_detuning_points, self.grid_detuning_half_span_mhz * MHZ
        )

    def updated(self, **changes) -> "RunConfig":
        out = dict(as_items(self))
        out.update(changes)
        cfg = RunConfig(**out)
        validate(cfg)
        return cfg


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _split_field(name: str) -> tuple[str, str]:
    section, _, key = name.partition("_")
    return section, key


def as_items(cfg: RunConfig) -> list[tuple[str, Any]]:
    return [(f.name, getattr(cfg, f.name)) for f in fields(cfg)]


def _key_to_field(key: str) -> str:
    section, _, name = key.partition(".")
    return f"{section}_{name}"


def _field_to_key(name: str) -> str:
    section, key = _split_field(name)
    return f"{section}.{key}"


def _strip_unit(key: str) -> tuple[str, str]:
    for unit in UNITS:
        if key.endswith(unit):
            return key[: -len(unit)], unit
    return key, ""


_STEMS = {}
for _name in _FIELDS:
    _stem, _unit = _strip_unit(_field_to_key(_name))
    _STEMS[_stem] = _unit

_KEY_RE = re.compile(r"[a-z][a-z0-9_]*\.[a-z][a-z0-9_]*\Z")


def _parse_value(raw: str, ftype: str, line: int, col: int):
    if ftype == "str":
        if not raw or any(ch.isspace() for ch in raw):
            raise ConfigError(f"expected a single word, got {raw!r}", line, col)
        return raw
    try:
        if ftype == "int":
            return int(raw, 10)
        value = float(raw)
    except ValueError:
        raise ConfigError(f"expected {ftype}, got {raw!r}", line, col) from None
    if not math.isfinite(value):
        raise ConfigError(f"value must be finite, got {raw!r}", line, col)
    return value


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; unspecified keys take their defaults."""
    values: dict[str, Any] = {}
    where: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected 'section.key = value'", lineno, col)
        lhs, rhs = body.split("=", 1)
        key = lhs.strip()
        key_col = len(lhs) - len(lhs.lstrip()) + 1
        val_col = len(lhs) + 2 + (len(rhs) - len(rhs.lstrip()))
        if not _KEY_RE.match(key):
            raise ConfigError(f"malformed key {key!r}", lineno, key_col)
        raw = rhs.strip()
        if not raw:
            raise ConfigError(f"missing value for {key}", lineno, val_col)
        name = _key_to_field(key)
        if name not in _FIELDS:
            stem, unit = _strip_unit(key)
            if stem in _STEMS:
                want = _STEMS[stem] or "no unit suffix"
                got = unit or "no unit suffix"
                raise ConfigError(f"unit mismatch for {key}: expected {want}, got {got}", lineno, key_col)
            raise ConfigError(f"unknown key {key}", lineno, key_col)
        if name in values:
            raise ConfigError(f"duplicate key {key} (first on line {where[name]})", lineno, key_col)
        values[name] = _parse_value(raw, _FIELDS[name].type, lineno, val_col)
        where[name] = lineno
    try:
        cfg = RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg, where)
    return cfg


def validate(cfg: RunConfig, where: dict[str, int] | None = None) -> None:
    """Re-check every physical invariant; errors name the offending line when known."""
    where = where or {}

    def fail(message, *names):
        lines = [where[n] for n in names if n in where]
        raise ConfigError(message, min(lines) if lines else None)

    if cfg.mod_kind not in MODULATION_KINDS:
        fail(f"mod.kind must be one of {', '.join(MODULATION_KINDS)}", "mod_kind")
    if cfg.run_scheme not in SCHEMES:
        fail(f"run.scheme must be one of {', '.join(SCHEMES)}", "run_scheme")
    if cfg.run_accuracy not in ACCURACY_KINDS:
        fail(f"run.accuracy must be one of {', '.join(ACCURACY_KINDS)}", "run_accuracy")
    if cfg.run_band_min > cfg.run_band_max:
        fail("run.band_min exceeds run.band_max", "run_band_min", "run_band_max")
    if cfg.run_quadrature_order != 0 and not 2 <= cfg.run_quadrature_order <= 256:
        fail("run.quadrature_order must be 0 (closed form) or in [2, 256]", "run_quadrature_order")
    if cfg.run_threads < 0:
        fail("run.threads must be non-negative", "run_threads")
    for name in ("grid_detuning_points", "grid_phase_points", "grid_eps_rf_points", "grid_time_points"):
        if getattr(cfg, name) < 2:
            fail(f"{_field_to_key(name)} must be at least 2", name)
    if cfg.grid_detuning_half_span_mhz <= 0:
        fail("grid.detuning_half_span_mhz must be positive", "grid_detuning_half_span_mhz")
    if cfg.grid_time_periods <= 0:
        fail("grid.time_periods must be positive", "grid_time_periods")
    if not 0 <= cfg.grid_eps_rf_min_v_per_cm < cfg.grid_eps_rf_max_v_per_cm:
        fail("need 0 <= grid.eps_rf_min_v_per_cm < grid.eps_rf_max_v_per_cm",
             "grid_eps_rf_min_v_per_cm", "grid_eps_rf_max_v_per_cm")
    if cfg.mod_delta_omega_mhz == 0:
        fail("mod.delta_omega_mhz must be non-zero", "mod_delta_omega_mhz")
    if cfg.laser_control_doppler_sign not in (-1, 1):
        fail("laser.control_doppler_sign must be +1 or -1", "laser_control_doppler_sign")
    for name in ("atom_lambda_21_m", "atom_lambda_32_m"):
        if getattr(cfg, name) <= 0:
            fail(f"{_field_to_key(name)} must be positive", name)

    groups = (
        ("drive", ("rf_",)),
        ("medium", ("atom_",)),
        ("lasers", ("laser_",)),
        ("noise", ("noise_",)),
    )
    for attr, prefixes in groups:
        try:
            getattr(cfg, attr)
        except ParameterError as exc:
            names = [n for n in where if n.startswith(prefixes)]
            fail(str(exc), *names)
    try:
        mod = ControlModulation.cosine(cfg.mod_omega_g_mhz * MHZ, cfg.mod_phi_g_rad)
    except ParameterError as exc:
        fail(str(exc), "mod_omega_g_mhz", "mod_phi_g_rad")
    if cfg.run_scheme == "FEIT":
        try:
            commensurability(cfg.drive, mod)
        except ParameterError as exc:
            fail(str(exc), "rf_omega_s_mhz", "mod_omega_g_mhz")


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Config text that ``parse_config`` turns back into an identical RunConfig."""
    out = []
    current = None
    for name, value in as_items(cfg):
        section, _ = _split_field(name)
        if section != current:
            if current is not None:
                out.append("")
            current = section
        out.append(f"{_field_to_key(name)} = {_format_value(value)}")
    return "\n".join(out) + "\n"

import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from feitsim.errors import AmbiguityError, OutOfRangeError, ParameterError
from feitsim.floquet import MHZ, TWO_PI, AtomMedium, ControlModulation, LaserParams, RfDrive
from feitsim.protocols import (
    NoiseModel,
    ScanResult,
    amplitude_accuracy,
    amplitude_scan,
    disambiguate_phase,
    draw_noise,
    eit_amplitude_scan,
    eit_contrast,
    feit_oscillation_contrast,
    invert_amplitude,
    invert_phase,
    monte_carlo_observable,
    phase_accuracy,
    phase_contrast,
    phase_scan,
    time_trace,
)

MEDIUM = AtomMedium()
LASERS = LaserParams()
COSINE = ControlModulation.cosine(30 * MHZ)
DELTA = 0.005 * MHZ
PERIOD = TWO_PI / DELTA
QUIET = NoiseModel(0.0, 0.0, samples=4)


def mirror_grid(points=201):
    return TWO_PI * np.arange(points) / points


@pytest.mark.parametrize("eps_rf", [0.2, 0.5, 1.1])
def test_phase_scan_symmetric_and_monotone(eps_rf):
    phi = mirror_grid()
    obs = phase_scan(RfDrive(3.0, eps_rf), COSINE, MEDIUM, LASERS, phi).observable
    assert np.max(np.abs(obs[1:] - obs[1:][::-1])) <= 1e-10
    rising = phi <= np.pi
    assert np.all(np.diff(obs[rising]) > 0)
    assert np.all(np.diff(obs[~rising]) < 0)


def test_phase_scan_flat_without_rf():
    obs = phase_scan(RfDrive(3.0, 0.0), COSINE, MEDIUM, LASERS, mirror_grid(21)).observable
    assert np.ptp(obs) == 0.0


def test_phase_scan_rejects_bad_grid():
    with pytest.raises(ParameterError):
        phase_scan(RfDrive(), COSINE, MEDIUM, LASERS, [0.0, TWO_PI])
    with pytest.raises(ParameterError):
        phase_scan(RfDrive(), ControlModulation.cosine(7 * MHZ), MEDIUM, LASERS, [0.0, 1.0])


@pytest.fixture(scope="module")
def fine_scan():
    phi = np.linspace(0, TWO_PI, 2001, endpoint=False)
    return phase_scan(RfDrive(), COSINE, MEDIUM, LASERS, phi)


def test_invert_phase_at_grid_value(fine_scan):
    k = 300
    cands = invert_phase(fine_scan, fine_scan.observable[k])
    assert cands[0] == pytest.approx(fine_scan.abscissa[k], abs=1e-12)
    assert cands[1] == pytest.approx(TWO_PI - fine_scan.abscissa[k], abs=1e-12)


def test_invert_phase_at_maximum():
    phi = mirror_grid(200)  # contains pi exactly
    scan = phase_scan(RfDrive(), COSINE, MEDIUM, LASERS, phi)
    top = scan.observable[100]
    assert invert_phase(scan, top) == (pytest.approx(np.pi),)


def test_invert_phase_round_trip(fine_scan):
    target = 0.37 * np.pi
    contrast = float(phase_contrast(RfDrive(phi_s=target), COSINE, MEDIUM, LASERS)[0])
    a, b = invert_phase(fine_scan, contrast)
    assert a == pytest.approx(target, abs=1e-3)
    assert b == pytest.approx(TWO_PI - target, abs=1e-3)


def test_invert_phase_out_of_range(fine_scan):
    with pytest.raises(OutOfRangeError):
        invert_phase(fine_scan, fine_scan.observable.max() + 1e-3)


def test_invert_phase_needs_monotone_branch():
    scan = ScanResult([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 0.5, 2.0], "x")
    with pytest.raises(ParameterError):
        invert_phase(scan, 0.7)


def test_time_trace_periodic():
    t = np.linspace(0, PERIOD, 9)[:-1]
    a = time_trace(RfDrive(phi_s=0.7), COSINE, MEDIUM, LASERS, DELTA, t).observable
    b = time_trace(RfDrive(phi_s=0.7), COSINE, MEDIUM, LASERS, DELTA, t + PERIOD).observable
    assert np.max(np.abs(a - b)) <= 1e-10


def test_time_trace_reflection():
    n = 64
    t = PERIOD * np.arange(n) / n
    phi = 0.3 * np.pi
    fwd = time_trace(RfDrive(phi_s=phi), COSINE, MEDIUM, LASERS, DELTA, t).observable
    mir = time_trace(RfDrive(phi_s=TWO_PI - phi), COSINE, MEDIUM, LASERS, DELTA, t).observable
    reversed_idx = (-np.arange(n)) % n
    assert np.max(np.abs(mir - fwd[reversed_idx])) <= 1e-10


def test_mirror_phases_split_after_quarter_period():
    t = np.array([0.0, np.pi / (2 * DELTA)])
    a = time_trace(RfDrive(phi_s=0.2 * np.pi), COSINE, MEDIUM, LASERS, DELTA, t).observable
    b = time_trace(RfDrive(phi_s=1.8 * np.pi), COSINE, MEDIUM, LASERS, DELTA, t).observable
    assert a[0] == pytest.approx(b[0], abs=1e-12)
    assert abs(a[1] - b[1]) > 1e-4


def test_time_trace_sign_is_first_minus_minus_first():
    drive = RfDrive(phi_s=1.1)
    tr = time_trace(drive, COSINE, MEDIUM, LASERS, DELTA, [0.0])
    assert tr.observable[0] == pytest.approx(-phase_contrast(drive, COSINE, MEDIUM, LASERS)[0], abs=1e-15)
    assert tr.tag == "T1-T-1/FEIT"


def _trace(phi, n=64):
    t = PERIOD * np.arange(n) / n
    return time_trace(RfDrive(phi_s=phi), COSINE, MEDIUM, LASERS, DELTA, t)


def test_disambiguation_picks_true_phase():
    measured = _trace(0.2 * np.pi)
    got = disambiguate_phase((0.2 * np.pi, 1.8 * np.pi), measured, RfDrive(), COSINE, MEDIUM, LASERS, DELTA)
    assert got == pytest.approx(0.2 * np.pi)
    measured = _trace(1.8 * np.pi)
    got = disambiguate_phase((0.2 * np.pi, 1.8 * np.pi), measured, RfDrive(), COSINE, MEDIUM, LASERS, DELTA)
    assert got == pytest.approx(1.8 * np.pi)


def test_disambiguation_single_candidate():
    measured = _trace(np.pi)
    assert disambiguate_phase((np.pi,), measured, RfDrive(), COSINE, MEDIUM, LASERS, DELTA) == np.pi


def test_disambiguation_without_detuning_is_ambiguous():
    t = np.linspace(0, 1e-3, 16)
    measured = time_trace(RfDrive(phi_s=1.0), COSINE, MEDIUM, LASERS, 0.0, t)
    with pytest.raises(AmbiguityError):
        disambiguate_phase((1.0, TWO_PI - 1.0), measured, RfDrive(), COSINE, MEDIUM, LASERS, 0.0)


def test_closed_loop_recovery():
    rng = np.random.default_rng(2024)
    eps_table = np.linspace(0.0, 1.1, 221)
    amp_table = amplitude_scan(RfDrive(), COSINE, MEDIUM, LASERS, DELTA, eps_table, points=64)
    phi_grid = np.linspace(0, TWO_PI, 2001, endpoint=False)
    n = 64
    t = PERIOD * np.arange(n) / n
    for _ in range(50):
        phi = rng.uniform(0, TWO_PI)
        eps = rng.uniform(0.1, 1.0)
        drive = RfDrive(3.0, eps, phi_s=phi)
        scan = phase_scan(drive, COSINE, MEDIUM, LASERS, phi_grid)
        cands = invert_phase(scan, float(phase_contrast(drive, COSINE, MEDIUM, LASERS)[0]))
        measured = time_trace(drive, COSINE, MEDIUM, LASERS, DELTA, t)
        got = disambiguate_phase(cands, measured, drive, COSINE, MEDIUM, LASERS, DELTA)
        err = abs(got - phi) % TWO_PI
        assert min(err, TWO_PI - err) <= 2e-3
        contrast = feit_oscillation_contrast(drive, COSINE, MEDIUM, LASERS, DELTA, 64)[0]
        assert invert_amplitude(amp_table, contrast) == pytest.approx(eps, abs=2e-3)


def test_amplitude_contrasts_vanish_without_rf():
    drive = RfDrive(3.0, 0.0)
    assert feit_oscillation_contrast(drive, COSINE, MEDIUM, LASERS, DELTA)[0] == 0.0
    assert eit_contrast(drive, MEDIUM, LASERS)[0] == 0.0


def test_oscillation_contrast_needs_detuning():
    with pytest.raises(ParameterError):
        feit_oscillation_contrast(RfDrive(), COSINE, MEDIUM, LASERS, 0.0)


def test_eit_contrast_ignores_phase():
    a = eit_contrast(RfDrive(phi_s=0.0), MEDIUM, LASERS)[0]
    b = eit_contrast(RfDrive(phi_s=2.0), MEDIUM, LASERS)[0]
    assert a == b


@pytest.mark.parametrize("eps_dc, turnover", [(3.0, 1.7), (1.0, 4.6)])
def test_eit_turnover(eps_dc, turnover):
    eps = np.arange(0.0, 1.5 * turnover, 0.05)
    obs = eit_amplitude_scan(RfDrive(eps_dc, 0.5), MEDIUM, LASERS, eps).observable
    top = int(np.argmax(obs))
    assert np.all(np.diff(obs[: top + 1]) > 0)
    assert abs(eps[top] / turnover - 1) <= 0.2


def test_invert_amplitude_out_of_range():
    table = eit_amplitude_scan(RfDrive(), MEDIUM, LASERS, np.linspace(0, 1, 11))
    with pytest.raises(OutOfRangeError):
        invert_amplitude(table, table.observable.max() * 1.5)


# -- Monte Carlo ------------------------------------------------------------------


def test_noiseless_monte_carlo():
    drive = RfDrive(phi_s=1.0)
    mean, std = monte_carlo_observable(lambda d: phase_contrast(drive, COSINE, MEDIUM, LASERS, d), QUIET)
    assert std == 0.0
    assert mean == phase_contrast(drive, COSINE, MEDIUM, LASERS)[0]


def test_std_scales_linearly_with_rabi_noise():
    drive = RfDrive(phi_s=1.0)

    def std(sigma):
        noise = NoiseModel(sigma, 0.0, samples=4000, seed=3)
        return monte_carlo_observable(lambda d: phase_contrast(drive, COSINE, MEDIUM, LASERS, d), noise)[1]

    assert std(0.01) / std(0.005) == pytest.approx(2.0, rel=0.1)


def test_equal_seeds_are_bitwise_equal_for_any_thread_count():
    drive = RfDrive(phi_s=1.0)
    noise = NoiseModel(samples=3000, seed=99)

    def run(threads):
        return monte_carlo_observable(lambda d: phase_contrast(drive, COSINE, MEDIUM, LASERS, d), noise, threads)

    ref = run(1)
    assert run(1) == ref
    assert run(3) == ref
    assert run(8) == ref
    assert monte_carlo_observable(
        lambda d: phase_contrast(drive, COSINE, MEDIUM, LASERS, d), replace(noise, seed=100)
    ) != ref


def test_thread_count_from_environment(monkeypatch):
    drive = RfDrive(phi_s=1.0)
    noise = NoiseModel(samples=2100, seed=5)
    ref = monte_carlo_observable(lambda d: phase_contrast(drive, COSINE, MEDIUM, LASERS, d), noise, 1)
    monkeypatch.setenv("FEITSIM_THREADS", "4")
    assert monte_carlo_observable(lambda d: phase_contrast(drive, COSINE, MEDIUM, LASERS, d), noise) == ref


def test_noise_draw_statistics():
    draws = draw_noise(NoiseModel(samples=20000, seed=1))
    assert np.std(draws.omega_c_scale) == pytest.approx(0.01, rel=0.03)
    assert np.std(draws.delta_p_shift) == pytest.approx(0.1 * MHZ, rel=0.03)
    assert abs(np.corrcoef(draws.delta_p_shift, draws.delta_c_shift)[0, 1]) < 0.03
    tied = draw_noise(NoiseModel(samples=50, seed=1, laser_freq_correlation=1.0))
    np.testing.assert_allclose(tied.delta_p_shift, tied.delta_c_shift, rtol=1e-15)


def test_acquisitions_extend_each_sample_stream():
    noise = NoiseModel(samples=40, seed=8)
    one = draw_noise(noise)
    many = draw_noise(noise, 5)
    assert many.omega_c_scale.shape == (5, 40)
    assert np.array_equal(many.omega_c_scale[0], one.omega_c_scale)
    assert not np.array_equal(many.omega_c_scale[1], one.omega_c_scale)


@pytest.mark.parametrize(
    "kwargs", [dict(samples=1), dict(omega_c_rabi_rel_sigma=-0.1), dict(laser_freq_correlation=1.5)]
)
def test_noise_model_validation(kwargs):
    with pytest.raises(ParameterError):
        NoiseModel(**kwargs)


def test_phase_accuracy_noiseless_and_divergent_at_pi():
    phi = np.array([0.5, 1.5, 2.5])
    res = phase_accuracy(phi, QUIET, RfDrive(), COSINE, MEDIUM, LASERS)
    assert np.all(res.observable == 0.0)
    assert all(chk.relative_gap < 0.01 for chk in res.derivative_checks)
    noisy = phase_accuracy([1.5, np.pi - 0.05, np.pi - 0.005], NoiseModel(samples=500), RfDrive(), COSINE, MEDIUM, LASERS)
    assert noisy.observable[0] < noisy.observable[1] < noisy.observable[2]
    at_pi = phase_accuracy([np.pi], NoiseModel(samples=200), RfDrive(), COSINE, MEDIUM, LASERS)
    assert at_pi.observable[0] > 100 * noisy.observable[0]


def test_amplitude_accuracy_noiseless():
    res = amplitude_accuracy([0.3, 0.6], QUIET, RfDrive(), COSINE, MEDIUM, LASERS, "FEIT", points=64)
    assert np.all(res.observable == 0.0)
    res = amplitude_accuracy([0.3, 0.6], QUIET, RfDrive(), None, MEDIUM, LASERS, "EIT")
    assert np.all(res.observable == 0.0)
    with pytest.raises(ParameterError):
        amplitude_accuracy([0.3], QUIET, RfDrive(), None, MEDIUM, LASERS, "FEIT")


def test_eit_accuracy_diverges_at_turnover():
    eps = np.arange(1.4, 2.0, 0.02)
    obs = eit_amplitude_scan(RfDrive(), MEDIUM, LASERS, eps).observable
    top = eps[int(np.argmax(obs))]
    acc = amplitude_accuracy([0.8, top], NoiseModel(samples=500), RfDrive(), None, MEDIUM, LASERS, "EIT")
    assert acc.observable[1] > 10 * acc.observable[0]


def test_scan_csv(tmp_path):
    res = ScanResult([0.0, 0.5], [1.0, 2.0], "T-1-T1/FEIT", sigma=[0.1, 0.2])
    path = res.to_csv(tmp_path / "scan.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# tag: T-1-T1/FEIT"
    rows = list(csv.reader(lines[1:], strict=True))
    assert rows[0] == ["abscissa", "observable", "sigma"]
    assert [float(v) for v in rows[2]] == [0.5, 2.0, 0.2]


def test_scan_result_validation():
    with pytest.raises(ParameterError):
        ScanResult([0.0, 0.0], [1.0, 2.0], "x")
    with pytest.raises(ParameterError):
        ScanResult([0.0, 1.0], [1.0], "x")

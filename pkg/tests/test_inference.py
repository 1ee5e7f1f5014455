import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atdipole.angular import HyperfineTransition, SelectionRuleError
from atdipole.constants import AU_DIPOLE, mhz_to_rad, rad_to_mhz
from atdipole.inference import (
    MHZ,
    DipoleEstimate,
    FitError,
    InsufficientContrastError,
    InsufficientDataError,
    MissingPredictionError,
    NoSignalError,
    PowerSeriesPoint,
    absorption_image,
    chi_squared_compare,
    dipole_from_gradient,
    estimate_noise,
    fit_at_spectrum,
    fit_beam_waists,
    fit_power_series,
    fit_two_level,
    to_reduced,
    two_level_trace,
)
from atdipole.lineshape import (
    BeamGeometry,
    QuadratureConfig,
    SpectrumTrace,
    add_noise,
    apply_instrument,
    paper_system,
    rabi_max_from_power,
    simulate_spectrum,
)
from atdipole.species import DomainError

W_MAJ, W_MIN = 240e-6, 172e-6
Q16 = QuadratureConfig(16, 16)


def at_trace(sweep, cloud, inst, rabi_mhz, quad, coupling_detuning_mhz=0.0):
    sys = paper_system(coupling_detuning=mhz_to_rad(coupling_detuning_mhz))
    beam = BeamGeometry(W_MAJ, W_MIN, mhz_to_rad(rabi_mhz))
    trace = simulate_spectrum(sweep, sys, beam, cloud, quad)
    return (apply_instrument(trace, inst) if inst is not None else trace), sys, beam


# -- noise estimate ---------------------------------------------------------------------


def test_estimate_noise_recovers_white_noise(rng):
    x = np.linspace(0, 1, 2000)
    y = 0.9 - 0.2 * np.exp(-((x - 0.5) ** 2) / 0.01) + rng.normal(0, 0.003, x.size)
    assert estimate_noise(y) == pytest.approx(0.003, rel=0.1)


# -- two-level width --------------------------------------------------------------------


def test_two_level_recovers_natural_width_with_instrument(coarse_sweep, cloud, inst):
    region = BeamGeometry(W_MAJ, W_MIN, 0.0)
    trace = two_level_trace(coarse_sweep, cloud, region, inst, quad=Q16)
    fit = fit_two_level(trace, cloud, region, inst=inst, quad=Q16)
    assert fit.converged
    assert rad_to_mhz(fit.gamma) == pytest.approx(6.065, rel=1e-4)


def test_two_level_noiseless_round_trip(coarse_sweep, cloud):
    region = BeamGeometry(W_MAJ, W_MIN, 0.0)
    trace = two_level_trace(coarse_sweep, cloud, region, None, quad=Q16)
    fit = fit_two_level(trace, cloud, region, quad=Q16)
    assert rad_to_mhz(fit.gamma) == pytest.approx(6.065, rel=1e-3)
    assert abs(fit.center) < 1e-6 * MHZ


def test_two_level_without_instrument_is_broadened(coarse_sweep, cloud, inst):
    region = BeamGeometry(W_MAJ, W_MIN, 0.0)
    trace = two_level_trace(coarse_sweep, cloud, region, inst, quad=Q16)
    fit = fit_two_level(trace, cloud, region, quad=Q16)
    assert 8.5 < rad_to_mhz(fit.gamma) < 9.5
    # the detector delay moves the apparent line centre forward along the sweep
    assert rad_to_mhz(fit.center) > 1.0


def test_two_level_flat_trace_raises(coarse_sweep, cloud):
    flat = SpectrumTrace(coarse_sweep, np.ones(coarse_sweep.size))
    with pytest.raises(NoSignalError):
        fit_two_level(flat, cloud, BeamGeometry(W_MAJ, W_MIN, 0.0), quad=Q16)


# -- AT fits ---------------------------------------------------------------------------------


@pytest.mark.parametrize("rabi_mhz", [10.0, 25.0, 60.0])
def test_at_noiseless_round_trip(coarse_sweep, cloud, inst, rabi_mhz):
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, rabi_mhz, Q16)
    res = fit_at_spectrum(trace, sys.gamma, beam, cloud, inst, quad=Q16)
    assert res.converged and res.mode == "instrument"
    assert res.rabi_max / beam.rabi_max == pytest.approx(1.0, abs=1e-6)
    assert res.gamma3 == pytest.approx(sys.gamma3, rel=1e-4)
    assert res.amplitude == pytest.approx(1.0, abs=1e-6)


def test_at_recovers_coupling_detuning(coarse_sweep, cloud, inst):
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, 30.0, Q16, coupling_detuning_mhz=5.0)
    res = fit_at_spectrum(trace, sys.gamma, beam, cloud, inst, quad=Q16)
    assert rad_to_mhz(res.coupling_detuning) == pytest.approx(5.0, abs=1e-4)
    assert res.rabi_max / beam.rabi_max == pytest.approx(1.0, abs=1e-5)


def test_at_zero_coupling_is_flagged(coarse_sweep, cloud, inst):
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, 0.0, Q16)
    res = fit_at_spectrum(trace, sys.gamma, replace(beam, rabi_max=10 * MHZ), cloud, inst, quad=Q16)
    assert "rabi_max_at_lower_bound" in res.flags
    assert res.rabi_max < 0.01 * MHZ
    # the reported error is a finite one-sided limit rather than zero
    assert 0 < res.errors["rabi_max"] < 20 * MHZ


def test_at_error_scales_with_noise(coarse_sweep, cloud, inst):
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, 30.0, Q16)
    errs = []
    for level in (0.005, 0.02):
        noisy = add_noise(trace, level, seed=11)
        res = fit_at_spectrum(noisy, sys.gamma, beam, cloud, inst, quad=Q16, sigma=level * np.abs(noisy.value))
        errs.append(res.errors["rabi_max"])
    assert errs[1] / errs[0] == pytest.approx(4.0, rel=0.25)


def test_at_fit_result_serializes(coarse_sweep, cloud, inst):
    import json

    from atdipole.io import dumps_json

    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, 30.0, Q16)
    res = fit_at_spectrum(trace, sys.gamma, beam, cloud, inst, quad=Q16)
    data = json.loads(dumps_json(res.to_dict()))
    assert data["mode"] == "instrument"


def test_at_iteration_cap_raises(coarse_sweep, cloud, inst):
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, 30.0, Q16)
    noisy = add_noise(trace, 0.01, seed=2)
    with pytest.raises(FitError) as info:
        fit_at_spectrum(noisy, sys.gamma, beam, cloud, inst, quad=Q16, max_iter=1)
    assert info.value.result is not None


@pytest.mark.slow
def test_at_pull_distribution(coarse_sweep, cloud, inst):
    """Normalized residuals (fit - truth) / error over 200 seeds are standard normal."""
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, 30.0, Q16)
    pulls = []
    for seed in range(200):
        noisy = add_noise(trace, 0.01, seed=[seed, 77])
        res = fit_at_spectrum(noisy, sys.gamma, beam, cloud, inst, quad=Q16, sigma=0.01 * np.abs(noisy.value))
        pulls.append((res.rabi_max - beam.rabi_max) / res.errors["rabi_max"])
    pulls = np.array(pulls)
    assert abs(pulls.mean()) < 0.2
    assert 0.8 <= pulls.std() <= 1.3


@pytest.mark.xfail(
    strict=True,
    reason="the broadened-width model cannot mimic a low-pass filter: each AT component "
    "is widened by the full instrument response but a larger Gamma widens it by only "
    "about half, which biases Omega low by several percent",
)
@pytest.mark.parametrize("rabi_mhz", [20.0, 45.0])
def test_broadened_mode_agrees_with_instrument_mode(coarse_sweep, cloud, inst, rabi_mhz):
    trace, sys, beam = at_trace(coarse_sweep, cloud, inst, rabi_mhz, Q16)
    region = replace(beam, rabi_max=0.0)
    ref = fit_two_level(two_level_trace(coarse_sweep, cloud, region, inst, quad=Q16), cloud, region, quad=Q16)
    full = fit_at_spectrum(trace, sys.gamma, beam, cloud, inst, quad=Q16)
    approx = fit_at_spectrum(trace, ref.gamma, beam, cloud, None, quad=Q16, probe_offset=ref.center)
    assert approx.rabi_max / full.rabi_max == pytest.approx(1.0, abs=0.01)


# -- waists --------------------------------------------------------------------------------


def _image(cloud, w_maj, w_min, rabi, noise, seed, shape=(81, 81), pixel=20e-6):
    sys = paper_system()
    beam = BeamGeometry(w_maj, w_min, rabi)
    img = absorption_image(shape, pixel, sys, beam, cloud)
    rng = np.random.default_rng(seed)
    return img * (1 + noise * rng.standard_normal(shape)), sys, beam, pixel


@pytest.mark.parametrize("power_mw", [80.0, 50.0])
def test_waist_fit_recovers_elliptical_beam(cloud, power_mw):
    mu = 0.02 * AU_DIPOLE
    rabi = rabi_max_from_power(power_mw * 1e-3, W_MAJ, W_MIN, mu)
    img, sys, beam, pixel = _image(cloud, W_MAJ, W_MIN, rabi, 0.01, 5)
    prior = BeamGeometry(200e-6, 200e-6, rabi)
    fit = fit_beam_waists(img, pixel, sys, cloud, prior)
    assert fit.w_maj == pytest.approx(W_MAJ, abs=3e-6)
    assert fit.w_min == pytest.approx(W_MIN, abs=3e-6)
    assert fit.w_maj_err < 5e-6


def test_waist_fit_circular_beam(cloud):
    img, sys, beam, pixel = _image(cloud, 200e-6, 200e-6, 30 * MHZ, 0.0, 0)
    fit = fit_beam_waists(img, pixel, sys, cloud, BeamGeometry(250e-6, 160e-6, 20 * MHZ))
    assert fit.w_maj == pytest.approx(fit.w_min, rel=1e-6)
    assert fit.w_maj == pytest.approx(200e-6, rel=1e-6)


def test_waist_fit_without_coupling_raises(cloud):
    img, sys, beam, pixel = _image(cloud, W_MAJ, W_MIN, 0.0, 0.01, 1)
    with pytest.raises(InsufficientContrastError):
        fit_beam_waists(img, pixel, sys, cloud, BeamGeometry(W_MAJ, W_MIN, 10 * MHZ))


# -- Omega versus sqrt(P) ----------------------------------------------------------------------

powers = st.lists(st.floats(1e-3, 0.1), min_size=3, max_size=8, unique=True)


def _points(ps, g, b=0.0, rel=0.02):
    return [PowerSeriesPoint(p, g * math.sqrt(p) + b, rel * g * math.sqrt(p) + 1e3) for p in ps]


@given(powers, st.floats(1e8, 1e10))
def test_power_series_exact_line(ps, g):
    fit = fit_power_series(_points(ps, g))
    assert fit.gradient == pytest.approx(g, rel=1e-7)
    assert abs(fit.intercept) < 1e-6 * g
    assert fit.intercept_consistent


@given(powers, st.floats(1e8, 1e10), st.randoms(use_true_random=False))
def test_power_series_order_invariant(ps, g, rnd):
    pts = _points(ps, g, b=1e6)
    pts = [replace(p, rabi=p.rabi * (1 + 0.01 * (-1) ** i)) for i, p in enumerate(pts)]
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    a, b = fit_power_series(pts), fit_power_series(shuffled)
    assert a.gradient == pytest.approx(b.gradient, rel=1e-10)
    assert a.gradient_err == pytest.approx(b.gradient_err, rel=1e-10)


@given(powers, st.floats(0.1, 10.0))
def test_power_series_sigma_scaling(ps, k):
    pts = _points(ps, 1e9)
    pts = [replace(p, rabi=p.rabi * (1 + 0.01 * (-1) ** i)) for i, p in enumerate(pts)]
    a = fit_power_series(pts)
    b = fit_power_series([replace(p, rabi_err=k * p.rabi_err) for p in pts])
    assert b.gradient == pytest.approx(a.gradient, rel=1e-9)
    assert b.gradient_err == pytest.approx(k * a.gradient_err, rel=1e-9)
    assert b.chi2 == pytest.approx(a.chi2 / k**2, rel=1e-9)


def test_power_series_needs_data():
    with pytest.raises(InsufficientDataError):
        fit_power_series(_points([0.01, 0.02], 1e9))
    with pytest.raises(InsufficientDataError):
        fit_power_series([PowerSeriesPoint(0.01, 1e8, 1e6)] * 3)
    with pytest.raises(DomainError):
        PowerSeriesPoint(0.01, 1e8, 0.0)


# -- dipoles ----------------------------------------------------------------------------------------


@given(st.floats(1e-3, 0.5), st.floats(100e-6, 400e-6), st.floats(100e-6, 400e-6))
def test_dipole_inverts_rabi_formula(mu_au, w1, w2):
    mu = mu_au * AU_DIPOLE
    pts = [PowerSeriesPoint(p, rabi_max_from_power(p, w1, w2, mu), 1e5) for p in (0.005, 0.02, 0.08)]
    fit = fit_power_series(pts)
    est = dipole_from_gradient(fit.gradient, 0.0, w1, w2)
    assert est.mu == pytest.approx(mu, rel=1e-8)


def test_dipole_error_budget():
    est = dipole_from_gradient(1e9, 2e7, 240e-6, 172e-6)
    comps = est.rel_components
    assert comps["gradient"] == pytest.approx(0.02)
    assert comps["power"] == pytest.approx(0.025)
    assert comps["w_maj"] == pytest.approx(10 / 480)
    assert comps["w_min"] == pytest.approx(10 / 344)
    assert est.rel_err == pytest.approx(math.sqrt(sum(v * v for v in comps.values())))
    assert est.rel_err < 0.10
    with pytest.raises(DomainError):
        dipole_from_gradient(-1.0, 0.0, 240e-6, 172e-6)


def test_to_reduced_divides_by_stretched_factor():
    est = DipoleEstimate(0.03 * AU_DIPOLE, 0.003 * AU_DIPOLE)
    red = to_reduced(est)
    assert red.reduced_au == pytest.approx(0.03 / math.sqrt(2 / 3), rel=1e-12)
    assert red.reduced_err_au == pytest.approx(0.003 / math.sqrt(2 / 3), rel=1e-12)
    with pytest.raises(SelectionRuleError):
        to_reduced(est, HyperfineTransition(1.5, 2, 2, 2.5, 4, 3, 1, 1.5))


# -- model comparison -----------------------------------------------------------------------------


def _meas(n, value, err):
    return DipoleEstimate(1.0, 0.1, n=n, reduced_au=value, reduced_err_au=err)


def test_chi_squared_hand_example():
    measured = [_meas(22, 0.10, 0.01), _meas(32, 0.05, 0.005)]
    models = {"A": {22: -0.10, 32: -0.05}, "B": {22: 0.11, 32: 0.06}}
    cmp = chi_squared_compare(measured, models)
    assert cmp.chi2["A"] == pytest.approx(0.0, abs=1e-20)
    assert cmp.chi2["B"] == pytest.approx(1.0 + 4.0)
    assert cmp.ranking == ["A", "B"]
    assert cmp.n_points == 2


def test_chi_squared_ties_break_by_name():
    cmp = chi_squared_compare([_meas(22, 0.1, 0.01)], {"Z": {22: 0.1}, "A": {22: 0.1}})
    assert cmp.ranking == ["A", "Z"]


def test_chi_squared_missing_prediction():
    with pytest.raises(MissingPredictionError):
        chi_squared_compare([_meas(22, 0.1, 0.01)], {"A": {32: 0.1}})

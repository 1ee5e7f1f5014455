"""Inverse pipeline: spectra -> Rabi frequencies -> dipole moments -> model ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.signal import find_peaks

from .angular import HyperfineTransition, SelectionRuleError, stretched_hyperfine_factor
from .constants import (
    AU_DIPOLE,
    EPSILON_0,
    GAMMA_RB_D2_HZ,
    HBAR,
    SPEED_OF_LIGHT,
    TWO_PI,
    mhz_to_rad,
)
from .lineshape import (
    BeamGeometry,
    CloudModel,
    InstrumentModel,
    LadderSystem,
    QuadratureConfig,
    SpectrumTrace,
    apply_instrument,
    column_density,
    probe_cross_section,
    rabi_profile,
    simulate_spectrum,
    transmission_signal,
)
from .lm import ConvergenceError, levenberg_marquardt
from .species import DomainError

MHZ = mhz_to_rad(1.0)
GAMMA3_FLOOR = mhz_to_rad(2.5)


def _exp(u: float) -> float:
    """exp() of a log-parameter, clamped so trial steps cannot overflow."""
    return math.exp(min(max(u, -60.0), 60.0))


class NoSignalError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class InsufficientContrastError(ValueError):
    pass


class FitError(ConvergenceError):
    pass


class MissingPredictionError(KeyError):
    pass


def estimate_noise(y: np.ndarray) -> float:
    """Robust white-noise level from second differences."""
    if y.size < 3:
        return 0.0
    d2 = np.diff(y, 2)
    return float(1.4826 * np.median(np.abs(d2 - np.median(d2))) / math.sqrt(6))


def _edge_baseline(y: np.ndarray) -> float:
    k = max(y.size // 20, 1)
    return float(np.median(np.concatenate([y[:k], y[-k:]])))


def _weights(sigma, n):
    if sigma is None:
        return None
    w = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    if np.any(w <= 0):
        raise DomainError("sigma must be positive")
    return w


def _affine_lsq(shape: np.ndarray, y: np.ndarray, w=None):
    """Best baseline b and amplitude a for y ~ b + a * (shape - 1)."""
    X = np.column_stack([np.ones_like(shape), shape - 1.0])
    if w is not None:
        X, y = X / w[:, None], y / w
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = X @ coef - y
    return coef[0], coef[1], float(resid @ resid)


# -- two-level width ----------------------------------------------------------


@dataclass
class TwoLevelFit:
    gamma: float
    gamma_err: float
    center: float
    amplitude: float
    baseline: float
    chi2_reduced: float
    converged: bool
    n_iter: int

    def to_dict(self) -> dict:
        return {
            "gamma_rad_s": self.gamma,
            "gamma_err_rad_s": self.gamma_err,
            "center_rad_s": self.center,
            "amplitude": self.amplitude,
            "baseline": self.baseline,
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def fit_two_level(
    trace: SpectrumTrace,
    cloud: CloudModel,
    region: BeamGeometry,
    *,
    sigma0: float | None = None,
    inst: InstrumentModel | None = None,
    quad: QuadratureConfig = QuadratureConfig(),
    sigma=None,
) -> TwoLevelFit:
    """Fit the coupling-free line; returns the width parameter of the model.

    Without ``inst`` the fitted width absorbs any instrument broadening;
    with it the instrument is forward-modelled and the natural width comes
    back. ``region`` only fixes the imaged area (its Rabi frequency is
    ignored).
    """
    d, y = trace.detuning, trace.value
    base0 = _edge_baseline(y)
    depth = base0 - float(y.min())
    noise = estimate_noise(y)
    if depth <= 3 * noise or depth <= 1e-9 * abs(base0):
        raise NoSignalError(f"no absorption dip: depth {depth:.3g}, noise {noise:.3g}")
    w = _weights(sigma, y.size)
    region = replace(region, rabi_max=0.0)
    template = LadderSystem(gamma=MHZ, gamma3=0.0) if sigma0 is None else LadderSystem(MHZ, 0.0, sigma0)

    center0 = float(d[np.argmin(y)])
    half = y <= base0 - depth / 2
    width0 = float(np.ptp(d[half])) if half.sum() > 1 else 6 * MHZ
    gamma0 = max(width0 / 1.5, 0.5 * MHZ)

    def model(theta):
        g = _exp(theta[0]) * MHZ
        sys = replace(template, gamma=g)
        t = transmission_signal(d - theta[1] * MHZ, sys, region, cloud, quad)
        if inst is not None:
            t = apply_instrument(SpectrumTrace(d, t), inst).value
        return theta[3] + theta[2] * (t - 1.0)

    def resid(theta):
        r = model(theta) - y
        return r / w if w is not None else r

    theta0 = np.array([math.log(gamma0 / MHZ), center0 / MHZ, 1.0, base0])
    res = levenberg_marquardt(resid, theta0)
    if not res.converged:
        raise FitError(f"two-level fit did not converge: {res.message}", res)
    dof = max(y.size - theta0.size, 1)
    chi2 = 2 * res.cost / dof
    cov = res.covariance(1.0 if w is not None else chi2)
    g = _exp(res.x[0]) * MHZ
    return TwoLevelFit(
        gamma=g,
        gamma_err=g * math.sqrt(max(cov[0, 0], 0.0)),
        center=res.x[1] * MHZ,
        amplitude=res.x[2],
        baseline=res.x[3],
        chi2_reduced=chi2,
        converged=res.converged,
        n_iter=res.n_iter,
    )


# -- Autler-Townes spectra ----------------------------------------------------

AT_PARAMS = ("rabi_max", "gamma3", "coupling_detuning", "amplitude", "baseline")
AT_MAX_STEP = np.array([1.0, 1.0, 5.0, 0.5, 0.5])


@dataclass
class FitResult:
    rabi_max: float
    gamma3: float
    coupling_detuning: float
    amplitude: float
    baseline: float
    errors: dict
    covariance: np.ndarray
    chi2_reduced: float
    converged: bool
    n_iter: int
    message: str
    gamma: float
    mode: str
    probe_offset: float = 0.0
    flags: tuple = ()
    trace_length: int = 0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "parameters": {
                "rabi_max_rad_s": self.rabi_max,
                "gamma3_rad_s": self.gamma3,
                "coupling_detuning_rad_s": self.coupling_detuning,
                "amplitude": self.amplitude,
                "baseline": self.baseline,
                "gamma_fixed_rad_s": self.gamma,
                "probe_offset_fixed_rad_s": self.probe_offset,
            },
            "errors": {f"{k}": v for k, v in self.errors.items()},
            "covariance": {
                "order": list(AT_PARAMS),
                "matrix": [[float(v) for v in row] for row in self.covariance],
            },
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
            "flags": list(self.flags),
            "convergence_trace_length": self.trace_length,
        }


def _find_dips(d, y, noise):
    depth = _edge_baseline(y) - y.min()
    prom = max(5 * noise, 0.2 * depth)
    idx, props = find_peaks(-y, prominence=prom)
    if idx.size == 0:
        return []
    order = np.argsort(props["prominences"])[::-1][:2]
    return sorted(float(d[i]) for i in idx[order])


@dataclass(frozen=True)
class ATModel:
    """Forward model of an AT trace for given fixed ingredients."""

    detuning: np.ndarray
    gamma: float
    beam: BeamGeometry
    cloud: CloudModel
    inst: InstrumentModel | None = None
    quad: QuadratureConfig = QuadratureConfig()
    sigma0: float | None = None

    def shape(self, rabi, gamma3, delta_c, probe_offset=0.0) -> np.ndarray:
        sys = LadderSystem(self.gamma, gamma3, coupling_detuning=delta_c)
        if self.sigma0 is not None:
            sys = replace(sys, sigma0=self.sigma0)
        beam = replace(self.beam, rabi_max=rabi)
        t = transmission_signal(self.detuning - probe_offset, sys, beam, self.cloud, self.quad)
        if self.inst is not None:
            t = apply_instrument(SpectrumTrace(self.detuning, t), self.inst).value
        return t

    def __call__(self, rabi, gamma3, delta_c, amplitude=1.0, baseline=1.0, probe_offset=0.0):
        return baseline + amplitude * (self.shape(rabi, gamma3, delta_c, probe_offset) - 1.0)


def _seed_at(model: ATModel, y, w, gamma, offset=0.0):
    """Coarse search over Omega_max (and Delta) with linear amplitude/baseline."""
    d = model.detuning
    dips = _find_dips(d, y, estimate_noise(y))
    rabis = list(np.geomspace(0.1, 20.0, 14) * gamma)
    deltas = [0.0]
    if len(dips) == 2:
        delta0 = 2 * offset - (dips[0] + dips[1])
        sep = dips[1] - dips[0]
        eff = math.sqrt(max(sep**2 - delta0**2, 0.25 * sep**2))
        rabis = [eff, 1.3 * eff, 1.6 * eff] + rabis
        deltas.append(delta0)
    best = None
    for delta in deltas:
        for rabi in rabis:
            base, amp, cost = _affine_lsq(model.shape(rabi, GAMMA3_FLOOR, delta, offset), y, w)
            if best is None or cost < best[0]:
                best = (cost, rabi, delta, amp, base)
    _, rabi, delta, amp, base = best
    return np.array(
        [math.log(rabi / MHZ), math.log(GAMMA3_FLOOR / MHZ), delta / MHZ, amp, base]
    )


def _rabi_upper_limit(resid, x, cost, scale, gamma) -> float:
    def excess(u):
        t = x.copy()
        t[0] = u
        r = resid(t)
        return (float(r @ r) - 2 * cost) / scale - 1.0

    hi = math.log(100 * gamma / MHZ)
    if excess(hi) < 0:
        return _exp(hi) * MHZ
    lo = x[0]
    return _exp(brentq(excess, lo, hi, xtol=1e-6)) * MHZ


def fit_at_spectrum(
    trace: SpectrumTrace,
    gamma: float,
    beam: BeamGeometry,
    cloud: CloudModel,
    inst: InstrumentModel | None = None,
    *,
    quad: QuadratureConfig = QuadratureConfig(),
    sigma=None,
    initial: dict | None = None,
    sigma0: float | None = None,
    probe_offset: float = 0.0,
    max_iter: int = 200,
) -> FitResult:
    """Fit Omega_max, gamma3, Delta, amplitude and baseline to an AT trace.

    ``gamma`` is held fixed: the natural width when ``inst`` is given (full
    instrument forward model), or the broadened width from
    :func:`fit_two_level` when ``inst`` is None. In the latter case pass the
    two-level line centre as ``probe_offset``, since the detector filter
    delays the whole line along the sweep. Omega_max and gamma3 are
    optimized as logarithms so both stay positive. Delta is mapped through
    ``D tanh(u / D)`` with D the half-width of the sweep, so a coupling
    detuning that pushes one AT component out of the window stops at the
    edge (and is flagged) instead of running off along a flat valley.
    """
    y = trace.value
    w = _weights(sigma, y.size)
    model = ATModel(trace.detuning, gamma, beam, cloud, inst, quad, sigma0)
    dmax = 0.5 * float(np.ptp(trace.detuning)) / MHZ

    def delta_of(u):
        return dmax * math.tanh(u / dmax)

    def u_of(delta_mhz):
        return dmax * math.atanh(max(min(delta_mhz / dmax, 0.999), -0.999))
    if initial:
        theta0 = np.array(
            [
                math.log(initial.get("rabi_max", 10 * MHZ) / MHZ),
                math.log(initial.get("gamma3", GAMMA3_FLOOR) / MHZ),
                u_of(initial.get("coupling_detuning", 0.0) / MHZ),
                initial.get("amplitude", 1.0),
                initial.get("baseline", _edge_baseline(y)),
            ]
        )
    else:
        theta0 = _seed_at(model, y, w, gamma, probe_offset)
        theta0[2] = u_of(theta0[2])

    def resid(theta):
        r = model(
            _exp(theta[0]) * MHZ,
            _exp(theta[1]) * MHZ,
            delta_of(theta[2]) * MHZ,
            theta[3],
            theta[4],
            probe_offset,
        ) - y
        return r / w if w is not None else r

    # at most a factor e in Omega or gamma3, 5 MHz in u per trial step
    res = levenberg_marquardt(resid, theta0, max_iter=max_iter, max_step=AT_MAX_STEP)
    dof = max(y.size - theta0.size, 1)
    chi2 = 2 * res.cost / dof
    cov_t = res.covariance(1.0 if w is not None else chi2)
    rabi = _exp(res.x[0]) * MHZ
    g3 = _exp(res.x[1]) * MHZ
    delta_mhz = delta_of(res.x[2])
    # covariance in physical units: d(param)/d(theta)
    jac = np.diag([rabi, g3, MHZ * (1 - (delta_mhz / dmax) ** 2), 1.0, 1.0])
    cov = jac @ cov_t @ jac
    errs = {name: float(math.sqrt(max(cov[i, i], 0.0))) for i, name in enumerate(AT_PARAMS)}
    flags = []
    if rabi < 1e-3 * gamma:
        flags.append("rabi_max_at_lower_bound")
        # the log-parameter error collapses at the bound; report instead the
        # one-sided limit where chi^2 has risen by one unit
        errs["rabi_max"] = _rabi_upper_limit(resid, res.x, res.cost, 1.0 if w is not None else chi2, gamma)
    if g3 < 1e-3 * gamma:
        flags.append("gamma3_at_lower_bound")
    if abs(delta_mhz) > 0.99 * dmax:
        flags.append("coupling_detuning_at_bound")
    result = FitResult(
        rabi_max=rabi,
        gamma3=g3,
        coupling_detuning=delta_mhz * MHZ,
        amplitude=float(res.x[3]),
        baseline=float(res.x[4]),
        errors=errs,
        covariance=cov,
        chi2_reduced=chi2,
        converged=res.converged,
        n_iter=res.n_iter,
        message=res.message,
        gamma=gamma,
        probe_offset=probe_offset,
        mode="instrument" if inst is not None else "broadened",
        flags=tuple(flags),
        trace_length=len(res.trace),
    )
    if not res.converged:
        raise FitError(f"AT fit did not converge: {res.message}", result)
    return result


# -- absorption image ---------------------------------------------------------


@dataclass
class WaistFit:
    w_maj: float
    w_min: float
    w_maj_err: float
    w_min_err: float
    rabi_max: float
    center: tuple
    chi2_reduced: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "w_maj_m": self.w_maj,
            "w_min_m": self.w_min,
            "w_maj_err_m": self.w_maj_err,
            "w_min_err_m": self.w_min_err,
            "rabi_max_rad_s": self.rabi_max,
            "center_m": list(self.center),
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
        }


def image_coordinates(shape, pixel: float):
    ny, nx = shape
    x = (np.arange(nx) - (nx - 1) / 2) * pixel
    y = (np.arange(ny) - (ny - 1) / 2) * pixel
    return np.meshgrid(x, y)


def absorption_image(
    shape, pixel: float, sys: LadderSystem, beam: BeamGeometry, cloud: CloudModel,
    probe_detuning: float = 0.0, center=(0.0, 0.0),
) -> np.ndarray:
    """Probe transmission map exp(-sigma_P n_col) with the coupling beam on."""
    X, Y = image_coordinates(shape, pixel)
    rabi = rabi_profile(X - center[0], Y - center[1], beam)
    return np.exp(-probe_cross_section(probe_detuning, sys, rabi) * column_density(X, Y, cloud))


def fit_beam_waists(
    image: np.ndarray,
    pixel: float,
    sys: LadderSystem,
    cloud: CloudModel,
    prior: BeamGeometry,
    *,
    probe_detuning: float = 0.0,
    sigma=None,
) -> WaistFit:
    """Fit the transparency hole of an absorption image for the two waists.

    Image rows run along y (minor axis), columns along x (major axis).
    """
    image = np.asarray(image, dtype=float)
    X, Y = image_coordinates(image.shape, pixel)
    ncol = column_density(X, Y, cloud)
    um = 1e-6
    w = None if sigma is None else np.broadcast_to(np.asarray(sigma, float), image.shape).ravel()

    def model(theta):
        beam = BeamGeometry(abs(theta[0]) * um, abs(theta[1]) * um, _exp(theta[2]) * MHZ)
        rabi = rabi_profile(X - theta[3] * um, Y - theta[4] * um, beam)
        return theta[5] * np.exp(-probe_cross_section(probe_detuning, sys, rabi) * ncol)

    y = image.ravel()

    def resid(theta):
        r = model(theta).ravel() - y
        return r / w if w is not None else r

    rabi0 = prior.rabi_max if prior.rabi_max > 0 else 10 * MHZ
    theta0 = np.array(
        [prior.w_maj / um, prior.w_min / um, math.log(rabi0 / MHZ), 0.0, 0.0, float(np.max(y))]
    )
    res = levenberg_marquardt(resid, theta0)
    dof = max(y.size - theta0.size, 1)
    chi2 = 2 * res.cost / dof
    cov = res.covariance(1.0 if w is not None else chi2)
    # contrast of the hole against the residual noise
    center_on = model(res.x).reshape(image.shape)
    off = res.x.copy()
    off[2] = -50.0
    hole = float(np.max(center_on - model(off).reshape(image.shape)))
    noise = float(np.std(res.residuals if w is None else res.residuals * w))
    if hole <= 3 * noise:
        raise InsufficientContrastError(f"transparency hole {hole:.3g} below 3x noise {noise:.3g}")
    if not res.converged:
        raise FitError(f"waist fit did not converge: {res.message}", res)
    return WaistFit(
        w_maj=abs(res.x[0]) * um,
        w_min=abs(res.x[1]) * um,
        w_maj_err=math.sqrt(max(cov[0, 0], 0)) * um,
        w_min_err=math.sqrt(max(cov[1, 1], 0)) * um,
        rabi_max=_exp(res.x[2]) * MHZ,
        center=(res.x[3] * um, res.x[4] * um),
        chi2_reduced=chi2,
        converged=res.converged,
    )


# -- Omega versus sqrt(P) -----------------------------------------------------


@dataclass(frozen=True)
class PowerSeriesPoint:
    power: float
    rabi: float
    rabi_err: float

    def __post_init__(self):
        if not self.rabi_err > 0:
            raise DomainError("rabi_err must be positive")
        if self.power < 0:
            raise DomainError("power must be non-negative")

    @property
    def sqrt_power(self) -> float:
        return math.sqrt(self.power)


@dataclass
class PowerSeriesFit:
    gradient: float
    gradient_err: float
    intercept: float
    intercept_err: float
    chi2: float
    dof: int

    @property
    def intercept_consistent(self) -> bool:
        """Intercept within two standard errors of zero."""
        return abs(self.intercept) <= 2 * self.intercept_err

    def to_dict(self) -> dict:
        return {
            "gradient": self.gradient,
            "gradient_err": self.gradient_err,
            "intercept_rad_s": self.intercept,
            "intercept_err_rad_s": self.intercept_err,
            "chi2": self.chi2,
            "dof": self.dof,
            "intercept_consistent_with_zero": self.intercept_consistent,
        }


def fit_power_series(points) -> PowerSeriesFit:
    """Weighted straight line Omega = g sqrt(P) + b with free intercept."""
    points = list(points)
    if len(points) < 3 or len({p.power for p in points}) < 2:
        raise InsufficientDataError("need at least 3 points at 2 or more distinct powers")
    x = np.array([p.sqrt_power for p in points])
    y = np.array([p.rabi for p in points])
    wt = 1.0 / np.array([p.rabi_err for p in points]) ** 2
    S, Sx, Sy = wt.sum(), (wt * x).sum(), (wt * y).sum()
    Sxx, Sxy = (wt * x * x).sum(), (wt * x * y).sum()
    det = S * Sxx - Sx * Sx
    g = (S * Sxy - Sx * Sy) / det
    b = (Sxx * Sy - Sx * Sxy) / det
    chi2 = float((wt * (y - g * x - b) ** 2).sum())
    return PowerSeriesFit(
        gradient=float(g),
        gradient_err=float(math.sqrt(S / det)),
        intercept=float(b),
        intercept_err=float(math.sqrt(Sxx / det)),
        chi2=chi2,
        dof=len(points) - 2,
    )


# -- dipole moments -------------------------------------------------------


@dataclass(frozen=True)
class DipoleEstimate:
    mu: float  # C m, stretched transition
    mu_err: float
    rel_components: dict = field(default_factory=dict)
    n: int | None = None
    reduced_au: float | None = None
    reduced_err_au: float | None = None

    @property
    def mu_au(self) -> float:
        return self.mu / AU_DIPOLE

    @property
    def mu_err_au(self) -> float:
        return self.mu_err / AU_DIPOLE

    @property
    def rel_err(self) -> float:
        return self.mu_err / self.mu if self.mu else math.inf

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mu_C_m": self.mu,
            "mu_err_C_m": self.mu_err,
            "mu_au": self.mu_au,
            "mu_err_au": self.mu_err_au,
            "relative_error": self.rel_err,
            "relative_components": dict(self.rel_components),
            "reduced_au": self.reduced_au,
            "reduced_err_au": self.reduced_err_au,
        }


def dipole_from_gradient(
    gradient: float,
    gradient_err: float,
    w_maj: float,
    w_min: float,
    *,
    w_maj_err: float = 10e-6,
    w_min_err: float = 10e-6,
    power_rel_err: float = 0.05,
    n: int | None = None,
) -> DipoleEstimate:
    """Invert Omega = (2 mu / hbar) sqrt(P / (pi w_maj w_min c eps0)) for mu."""
    if gradient <= 0 or w_maj <= 0 or w_min <= 0:
        raise DomainError("gradient and waists must be positive")
    mu = gradient * HBAR / 2 * math.sqrt(math.pi * w_maj * w_min * SPEED_OF_LIGHT * EPSILON_0)
    comps = {
        "gradient": gradient_err / gradient,
        "power": power_rel_err / 2,
        "w_maj": w_maj_err / (2 * w_maj),
        "w_min": w_min_err / (2 * w_min),
    }
    rel = math.sqrt(sum(v * v for v in comps.values()))
    return DipoleEstimate(mu, mu * rel, comps, n)


PAPER_TRANSITION = HyperfineTransition(1.5, 3, 3, 2.5, 4, 4, 1, 1.5)


def to_reduced(est: DipoleEstimate, t: HyperfineTransition = PAPER_TRANSITION) -> DipoleEstimate:
    """Rescale a stretched-transition dipole to (J || d || J') in e a0."""
    c = stretched_hyperfine_factor(t)
    if c == 0:
        raise SelectionRuleError("transition has zero angular coefficient")
    c = abs(c)
    return replace(est, reduced_au=est.mu_au / c, reduced_err_au=est.mu_err_au / c)


# -- model comparison ---------------------------------------------------------


@dataclass
class ModelComparison:
    chi2: dict
    ranking: list
    n_points: int

    def to_dict(self) -> dict:
        return {"chi2": dict(self.chi2), "ranking": list(self.ranking), "n_points": self.n_points}


def chi_squared_compare(measured, models) -> ModelComparison:
    """chi^2 of each model's |reduced element| against the measurements.

    ``models`` maps model name -> {n: predicted reduced element (e a0)}.
    """
    measured = list(measured)
    chi2 = {}
    for name, table in models.items():
        total = 0.0
        for est in measured:
            if est.reduced_au is None or not est.reduced_err_au:
                raise DomainError(f"measurement n={est.n} has no reduced element or error")
            if est.n not in table:
                raise MissingPredictionError(f"model {name!r} has no prediction for n={est.n}")
            total += ((est.reduced_au - abs(table[est.n])) / est.reduced_err_au) ** 2
        chi2[name] = total
    ranking = sorted(chi2, key=lambda k: (chi2[k], k))
    return ModelComparison(chi2, ranking, len(measured))


# -- instrument calibration -------------------------------------------------


def two_level_trace(sweep, cloud, region, inst=None, gamma=None, quad=QuadratureConfig()):
    sys = LadderSystem(gamma if gamma is not None else mhz_to_rad(GAMMA_RB_D2_HZ / 1e6), 0.0)
    trace = simulate_spectrum(sweep, sys, replace(region, rabi_max=0.0), cloud, quad)
    return apply_instrument(trace, inst) if inst is not None else trace


def broadened_width(span_mhz, sweep, cloud, region, template: InstrumentModel, quad=QuadratureConfig()):
    """Fitted two-level width (rad/s) after the instrument with the given span."""
    inst = replace(template, span=mhz_to_rad(span_mhz))
    trace = two_level_trace(sweep, cloud, region, inst, quad=quad)
    return fit_two_level(trace, cloud, region, quad=quad).gamma


def calibrate_sweep_span(
    sweep,
    cloud,
    region,
    template: InstrumentModel,
    *,
    target_hz: float = 9e6,
    lo_mhz: float = 100.0,
    hi_mhz: float = 1000.0,
    quad=QuadratureConfig(),
) -> float:
    """Sweep span (MHz over the template's sweep time) giving the target width."""
    target = TWO_PI * target_hz

    def f(span):
        return broadened_width(span, sweep, cloud, region, template, quad) - target

    flo, fhi = f(lo_mhz), f(hi_mhz)
    if flo * fhi > 0:
        raise DomainError(
            f"target width not bracketed: {flo / MHZ:+.3f} / {fhi / MHZ:+.3f} MHz at the ends"
        )
    return brentq(f, lo_mhz, hi_mhz, xtol=1e-3)

"""Forward model for probe absorption in a three-level ladder.

All detunings and widths are angular frequencies (rad/s); lengths in m.
The chain is

    probe_cross_section  ->  transmission_signal (cloud + coupling beam)
    ->  simulate_spectrum  ->  apply_instrument  ->  add_noise
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from .constants import (
    EPSILON_0,
    GAMMA_RB_D2_HZ,
    HBAR,
    SIGMA0_RB_D2,
    SPEED_OF_LIGHT,
    TWO_PI,
    mhz_to_rad,
)
from .species import ConfigurationError, DomainError

# Rb D2 sigma+ cycling transition (W/m^2)
I_SAT_RB_D2 = 16.69


@dataclass(frozen=True)
class LadderSystem:
    gamma: float
    gamma3: float
    sigma0: float = SIGMA0_RB_D2
    coupling_detuning: float = 0.0
    i_sat: float = I_SAT_RB_D2

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if self.gamma3 < 0:
            raise DomainError("gamma3 must be non-negative")
        if self.sigma0 < 0:
            raise DomainError("sigma0 must be non-negative")


@dataclass(frozen=True)
class BeamGeometry:
    """Elliptical Gaussian coupling beam; waists are 1/e^2 intensity radii."""

    w_maj: float
    w_min: float
    rabi_max: float
    power: float = 0.0

    def __post_init__(self):
        if self.w_maj <= 0 or self.w_min <= 0:
            raise DomainError("beam waists must be positive")
        if self.power < 0 or self.rabi_max < 0:
            raise DomainError("power and Rabi frequency must be non-negative")

    @classmethod
    def from_power(cls, w_maj, w_min, power, dipole) -> "BeamGeometry":
        return cls(w_maj, w_min, rabi_max_from_power(power, w_maj, w_min, dipole), power)


@dataclass(frozen=True)
class CloudModel:
    """Gaussian density n0 exp(-x^2/2sx^2 - y^2/2sy^2 - z^2/2sz^2)."""

    n0: float
    sx: float
    sy: float
    sz: float

    @property
    def atom_number(self) -> float:
        return self.n0 * (TWO_PI) ** 1.5 * self.sx * self.sy * self.sz

    @classmethod
    def from_density_and_number(cls, n0, number) -> "CloudModel":
        """Isotropic cloud with peak density ``n0`` holding ``number`` atoms."""
        s = (number / (n0 * TWO_PI**1.5)) ** (1 / 3)
        return cls(n0, s, s, s)


@dataclass(frozen=True)
class InstrumentModel:
    """Linear probe sweep seen through a single-pole detector filter."""

    span: float  # rad/s swept in sweep_time
    sweep_time: float = 1e-3
    corner_hz: float = 35e3
    linewidth_hz: float = 450e3
    direction: int = 1

    def __post_init__(self):
        if self.span <= 0 or self.sweep_time <= 0 or self.corner_hz <= 0:
            raise DomainError("span, sweep time and corner frequency must be positive")
        if self.linewidth_hz < 0:
            raise DomainError("linewidth must be non-negative")
        if self.direction not in (1, -1):
            raise DomainError("direction must be +1 or -1")

    @property
    def sweep_rate(self) -> float:
        """Detuning change per second (rad/s^2)."""
        return self.span / self.sweep_time


@dataclass(frozen=True)
class QuadratureConfig:
    """Tensor-product midpoint grid over the imaged region.

    Along each principal axis the region defaults to the smaller of three
    coupling-beam waists and four rms cloud radii either side of centre.
    """

    nx: int = 64
    ny: int = 64
    half_x: float | None = None
    half_y: float | None = None

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0:
            raise ConfigurationError("quadrature resolution must be positive")
        if (self.half_x is not None and self.half_x <= 0) or (
            self.half_y is not None and self.half_y <= 0
        ):
            raise ConfigurationError("quadrature extents must be positive")


@dataclass(frozen=True)
class SpectrumTrace:
    detuning: np.ndarray
    value: np.ndarray
    kind: str = "transmission"
    stage: str = "ideal"

    def __post_init__(self):
        d = np.asarray(self.detuning, dtype=float)
        v = np.asarray(self.value, dtype=float)
        if d.shape != v.shape or d.ndim != 1:
            raise ValueError("detuning and value must be 1-D arrays of equal length")
        if d.size > 1:
            diff = np.diff(d)
            if not (np.all(diff > 0) or np.all(diff < 0)):
                raise ValueError("detunings must be strictly monotone")
        if self.kind not in ("transmission", "cross_section"):
            raise ValueError(f"unknown value kind {self.kind!r}")
        if self.stage not in ("ideal", "instrumented"):
            raise ValueError(f"unknown stage {self.stage!r}")
        object.__setattr__(self, "detuning", d)
        object.__setattr__(self, "value", v)

    def __len__(self):
        return self.detuning.size

    def with_values(self, value, **changes) -> "SpectrumTrace":
        return replace(self, value=np.asarray(value, dtype=float), **changes)


# -- paper set-up ---------------------------------------------------------


def paper_system(gamma3_mhz: float = 2.5, coupling_detuning: float = 0.0) -> LadderSystem:
    return LadderSystem(
        gamma=mhz_to_rad(GAMMA_RB_D2_HZ / 1e6),
        gamma3=mhz_to_rad(gamma3_mhz),
        coupling_detuning=coupling_detuning,
    )


def paper_cloud() -> CloudModel:
    return CloudModel.from_density_and_number(6e15, 3e6)


PAPER_W_MAJ = 240e-6
PAPER_W_MIN = 172e-6

# Sweep span that broadens the 6.065 MHz line to a fitted 9 MHz; produced by
# inference.calibrate_sweep_span() and frozen here.
CALIBRATED_SPAN_MHZ = 788.06


def paper_instrument(span_mhz: float = CALIBRATED_SPAN_MHZ) -> InstrumentModel:
    return InstrumentModel(span=mhz_to_rad(span_mhz))


def default_sweep(half_mhz: float = 80.0, step_mhz: float = 0.25) -> np.ndarray:
    n = int(round(2 * half_mhz / step_mhz))
    return mhz_to_rad(np.linspace(-half_mhz, half_mhz, n + 1))


# -- operations -------------------------------------------------------------


def probe_cross_section(delta, sys: LadderSystem, rabi) -> np.ndarray:
    """Weak-probe absorption cross-section of the ladder (m^2).

    Normalized so the two-level resonance returns ``sys.sigma0``. ``delta``
    and ``rabi`` broadcast against each other.
    """
    delta = np.asarray(delta, dtype=float)
    rabi2 = np.asarray(rabi, dtype=float) ** 2
    d3 = sys.gamma3 + 2j * (delta + sys.coupling_detuning)
    den = (sys.gamma + 2j * delta) * d3 + rabi2
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (d3 * den.conjugate()).real / (den.real**2 + den.imag**2)
    # gamma3 = 0 at two-photon resonance with no coupling: two-level limit
    two_level = sys.gamma / (sys.gamma**2 + 4 * delta**2)
    val = np.where((rabi2 == 0) & (np.abs(d3) == 0), two_level, val)
    return sys.sigma0 * sys.gamma * val


def rabi_max_from_power(power, w_maj, w_min, dipole) -> float:
    """Peak coupling Rabi frequency (rad/s) for a dipole in C m."""
    if w_maj <= 0 or w_min <= 0:
        raise DomainError("beam waists must be positive")
    if power < 0 or dipole < 0:
        raise DomainError("power and dipole must be non-negative")
    return 2 * dipole / HBAR * math.sqrt(power / (math.pi * w_maj * w_min * SPEED_OF_LIGHT * EPSILON_0))


def rabi_profile(x, y, beam: BeamGeometry):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return beam.rabi_max * np.exp(-(x**2) / beam.w_maj**2 - y**2 / beam.w_min**2)


def column_density(x, y, cloud: CloudModel):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return (
        cloud.n0
        * math.sqrt(TWO_PI)
        * cloud.sz
        * np.exp(-(x**2) / (2 * cloud.sx**2) - y**2 / (2 * cloud.sy**2))
    )


def quadrature_cells(beam: BeamGeometry, cloud: CloudModel, quad: QuadratureConfig):
    """Cell centres (x, y) of the positive quadrant and the per-cell weight.

    The integrand is even in x and y, so only one quadrant is evaluated;
    ``nx``/``ny`` count cells across the full width.
    """
    hx = quad.half_x if quad.half_x is not None else min(3 * beam.w_maj, 4 * cloud.sx)
    hy = quad.half_y if quad.half_y is not None else min(3 * beam.w_min, 4 * cloud.sy)
    mx, my = max(quad.nx // 2, 1), max(quad.ny // 2, 1)
    xs = (np.arange(mx) + 0.5) * hx / mx
    ys = (np.arange(my) + 0.5) * hy / my
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return X.ravel(), Y.ravel(), 1.0 / (mx * my)


def transmission_signal(
    delta,
    sys: LadderSystem,
    beam: BeamGeometry,
    cloud: CloudModel,
    quad: QuadratureConfig = QuadratureConfig(),
) -> np.ndarray:
    """Transmitted fraction S/I0 averaged over the imaged region."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if sys.sigma0 == 0:
        return np.ones_like(delta)
    x, y, weight = quadrature_cells(beam, cloud, quad)
    ncol = column_density(x, y, cloud)
    if beam.rabi_max == 0:
        sigma = probe_cross_section(delta, sys, 0.0)
        return np.exp(-np.outer(sigma, ncol)).sum(axis=1) * weight
    # real form of sigma0 Gamma Re[d3 / ((Gamma + 2i delta) d3 + Omega^2)]
    e = delta + sys.coupling_detuning
    p = sys.gamma * sys.gamma3 - 4 * delta * e
    q = 2 * (sys.gamma * e + delta * sys.gamma3)
    big_p = p[:, None] + (rabi_profile(x, y, beam) ** 2)[None, :]
    num = sys.gamma3 * big_p + (2 * e * q)[:, None]
    od = num / (big_p * big_p + (q * q)[:, None])
    od *= (sys.sigma0 * sys.gamma) * ncol[None, :]
    return np.exp(-od).sum(axis=1) * weight


def simulate_spectrum(
    sweep,
    sys: LadderSystem,
    beam: BeamGeometry,
    cloud: CloudModel,
    quad: QuadratureConfig = QuadratureConfig(),
) -> SpectrumTrace:
    sweep = np.asarray(sweep, dtype=float)
    return SpectrumTrace(sweep, transmission_signal(sweep, sys, beam, cloud, quad))


@lru_cache(maxsize=32)
def _lorentz_matrix(grid: bytes, hwhm: float) -> np.ndarray:
    """Linear map taking samples on a sorted grid to their Lorentzian convolution.

    The samples are joined by straight lines and continued with their edge
    values beyond the grid; the convolution of that interpolant is exact.
    """
    u = np.frombuffer(grid, dtype=float)
    rel = (u[None, :] - u[:, None]) / hwhm  # (output, node)
    at = np.arctan(rel)
    lg = np.log1p(rel**2)
    A = (at[:, 1:] - at[:, :-1]) / math.pi
    B = hwhm / (2 * math.pi) * (lg[:, 1:] - lg[:, :-1])
    C = (u[:, None] - u[None, :-1]) * A + B
    C /= np.diff(u)[None, :]
    M = np.zeros((u.size, u.size))
    M[:, :-1] += A - C
    M[:, 1:] += C
    M[:, 0] += at[:, 0] / math.pi + 0.5
    M[:, -1] += 0.5 - at[:, -1] / math.pi
    return M


def _lorentz_convolve(d: np.ndarray, v: np.ndarray, hwhm: float) -> np.ndarray:
    order = np.argsort(d)
    M = _lorentz_matrix(np.ascontiguousarray(d[order]).tobytes(), float(hwhm))
    out = np.empty_like(v, dtype=float)
    out[order] = M @ v[order]
    return out


def _lowpass(t: np.ndarray, x: np.ndarray, tau: float) -> np.ndarray:
    """Single-pole low-pass, exact for piecewise-linear input; y(t0) = x(t0)."""
    h = np.diff(t)
    if np.allclose(h, h[0], rtol=1e-9, atol=0):
        a = math.exp(-h[0] / tau)
        g = tau / h[0] * (1 - a)
        b0, b1 = 1 - g, g - a
        y, _ = lfilter([b0, b1], [1.0, -a], x, zi=[x[0] * (1 - b0)])
        return y
    y = np.empty_like(x)
    y[0] = x[0]
    for k in range(x.size - 1):
        a = math.exp(-h[k] / tau)
        g = tau / h[k] * (1 - a)
        y[k + 1] = a * y[k] + (1 - g) * x[k + 1] + (g - a) * x[k]
    return y


def apply_instrument(trace: SpectrumTrace, inst: InstrumentModel) -> SpectrumTrace:
    """Laser-linewidth Lorentzian, then the detector low-pass along the sweep."""
    d = trace.detuning
    v = trace.value.astype(float)
    if inst.linewidth_hz > 0:
        v = _lorentz_convolve(d, v, TWO_PI * inst.linewidth_hz / 2)
    tau = 1.0 / (TWO_PI * inst.corner_hz)
    order = np.argsort(d * inst.direction)
    t = (d[order] * inst.direction - d[order][0] * inst.direction) / inst.sweep_rate
    if t.size > 1 and t[-1] / tau > 1e-12:
        filtered = np.empty_like(v)
        filtered[order] = _lowpass(t, v[order], tau)
        v = filtered
    return trace.with_values(v, stage="instrumented")


def add_noise(trace: SpectrumTrace, rel_sigma: float, seed=0) -> SpectrumTrace:
    """Multiplicative Gaussian noise, reproducible for a fixed seed.

    ``seed`` is anything ``numpy.random.default_rng`` accepts, including a
    sequence of ints or an existing Generator.
    """
    if rel_sigma < 0:
        raise DomainError("noise level must be non-negative")
    if rel_sigma == 0:
        return trace
    rng = np.random.default_rng(seed)
    return trace.with_values(trace.value * (1 + rel_sigma * rng.standard_normal(len(trace))))

"""Quantum-defect energies, Numerov radial wavefunctions and dipole matrix elements.

Everything here is in atomic units. Radial functions are integrated inward on
a grid uniform in ``x = sqrt(r)``; with ``P(r) = x**0.5 * chi(x)`` the radial
equation becomes ``chi'' = k(x) chi`` with

    k(x) = 8 x^2 (U(x^2) - E) + 3 / (4 x^2)

where ``U`` includes the centrifugal term. Grid points are integer multiples
of the step so that two states always share nodes of the quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .angular import SelectionRuleError, reduced_j_factor
from .species import (
    ConfigurationError,
    DomainError,
    QuantumDefectSeries,
    RydbergState,
    SpeciesModel,
)

DEFAULT_STEP = 0.01
OVERFLOW_GUARD = 1e250


class NumericalError(RuntimeError):
    pass


class LookupError_(KeyError):
    """Requested pair is not tabulated."""


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class ModelTag:
    kind: str
    name: str = ""
    table: "ExternalTable | None" = None

    def __post_init__(self):
        if self.kind not in ("NCA", "MMP", "EXTERNAL"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "EXTERNAL" and self.table is None:
            raise ConfigurationError("EXTERNAL model needs a loaded prediction table")

    @property
    def label(self) -> str:
        return self.name or self.kind

    @classmethod
    def external(cls, table: "ExternalTable") -> "ModelTag":
        return cls("EXTERNAL", table.name, table)


NCA = ModelTag("NCA")
MMP = ModelTag("MMP")


# -- energies ---------------------------------------------------------------


def quantum_defect(series: QuantumDefectSeries, n: int) -> float:
    d0 = series.coefficients[0]
    m = n - d0
    if m <= 0:
        raise DomainError(f"n - delta0 = {m} must be positive")
    return d0 + sum(c / m ** (2 * k) for k, c in enumerate(series.coefficients[1:], 1))


def effective_n(state: RydbergState, species: SpeciesModel) -> float:
    n_eff = state.n - quantum_defect(species.series(state.l, state.j), state.n)
    if n_eff <= 0:
        raise DomainError(f"{state.label}: effective n {n_eff} is not positive")
    return n_eff


def binding_energy(state: RydbergState, species: SpeciesModel) -> float:
    """Level energy below threshold; configured anchors take precedence."""
    anchor = species.anchors_au.get((state.n, state.l, state.j))
    if anchor is not None:
        return anchor
    return -species.rydberg_au / effective_n(state, species) ** 2


def potential(r, l: int, species: SpeciesModel, model: ModelTag = NCA):
    """Effective radial potential including the centrifugal term."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("potential needs r > 0")
    centrifugal = l * (l + 1) / (2 * r * r)
    if model.kind == "NCA":
        return -1.0 / r + centrifugal
    if model.kind == "MMP":
        p = species.core(l)
        z_eff = 1.0 + (species.core_charge - 1) * np.exp(-p.a1 * r) - r * (
            p.a3 + p.a4 * r
        ) * np.exp(-p.a2 * r)
        polar = species.core_polarizability_au / (2 * r**4) * (1 - np.exp(-((r / p.rc) ** 6)))
        return -z_eff / r - polar + centrifugal
    raise ConfigurationError("EXTERNAL models carry no potential")


# -- radial wavefunctions ---------------------------------------------------


@dataclass(frozen=True)
class RadialWavefunction:
    """Reduced radial function on ``x_k = x0 + k * step``, ``r = x**2``."""

    x0: float
    step: float
    P: np.ndarray
    nodes: int
    normalized: bool = True

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.P.size) * self.step

    @property
    def r(self) -> np.ndarray:
        return self.x**2

    def norm(self) -> float:
        x = self.x
        return float(np.trapezoid(self.P**2 * 2 * x, x))


def integration_bounds(state: RydbergState, species: SpeciesModel) -> tuple[float, float]:
    r_out = 2.0 * state.n * (state.n + 15)
    r_in = max(species.core_polarizability_au ** (1 / 3), 0.05)
    return r_in, r_out


def _count_nodes(P: np.ndarray) -> int:
    big = np.abs(P) > 1e-6 * np.abs(P).max()
    s = np.sign(P[big])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def numerov_radial(
    state: RydbergState,
    species: SpeciesModel,
    model: ModelTag = NCA,
    step: float = DEFAULT_STEP,
) -> RadialWavefunction:
    if model.kind == "EXTERNAL":
        raise ConfigurationError("EXTERNAL models have no wavefunctions")
    energy = binding_energy(state, species)
    r_in, r_out = integration_bounds(state, species)
    x0 = math.sqrt(r_in)
    x = x0 + np.arange(int((math.sqrt(r_out) - x0) / step) + 1) * step
    r = x * x
    k = 8 * r * (potential(r, state.l, species, model) - energy) + 0.75 / r
    c = 1 - step * step * k / 12
    chi = np.zeros_like(x)
    chi[-1] = 1e-12
    chi[-2] = 1e-12 * (1 + step * math.sqrt(max(k[-1], 0.0)))
    c_list, k_list = c.tolist(), k.tolist()
    vals = chi.tolist()
    h2 = step * step
    for i in range(x.size - 2, 0, -1):
        v = ((2 + 10 * h2 * k_list[i] / 12) * vals[i] - c_list[i + 1] * vals[i + 1]) / c_list[i - 1]
        if abs(v) > OVERFLOW_GUARD:
            raise NumericalError(
                f"{state.label} ({model.label}): Numerov overflow at r = {r[i - 1]:.4g} a.u., "
                f"E = {energy:.6g} a.u."
            )
        vals[i - 1] = v
    chi = np.asarray(vals)
    P = np.sqrt(x) * chi

    # inside the inner turning point the inward solution can pick up the
    # irregular branch; cut at an interior minimum of |P| there
    allowed = np.nonzero(k <= 0)[0]
    turn = int(allowed[0]) if allowed.size else 0
    if turn > 2:
        cut = int(np.argmin(np.abs(P[:turn])))
        if 0 < cut < turn - 1:
            P[:cut] = 0.0

    norm = np.trapezoid(P**2 * 2 * x, x)
    if not np.isfinite(norm) or norm <= 0:
        raise NumericalError(f"{state.label}: wavefunction has zero norm")
    P = P / math.sqrt(norm)
    nodes = _count_nodes(P)
    if species.hydrogenic and nodes != state.n - state.l - 1:
        warnings.warn(
            f"{state.label}: {nodes} nodes, expected {state.n - state.l - 1}",
            RuntimeWarning,
            stacklevel=2,
        )
    return RadialWavefunction(x0, step, P, nodes)


# -- matrix elements --------------------------------------------------------


def overlap_integral(a: RadialWavefunction, b: RadialWavefunction, power: int = 0) -> float:
    """Trapezoidal integral of P_a r**power P_b dr on the shared grid."""
    if not (math.isclose(a.step, b.step) and math.isclose(a.x0, b.x0)):
        raise ValueError("wavefunctions are on different grids")
    m = min(a.P.size, b.P.size)
    pa, pb = a.P[:m], b.P[:m]
    x = a.x[:m]
    return float(np.trapezoid(pa * pb * x ** (2 * power) * 2 * x, x))


def _check_dipole_pair(a: RydbergState, b: RydbergState):
    if abs(a.l - b.l) != 1:
        raise SelectionRuleError(f"{a.label} -> {b.label}: |delta l| must be 1")


def radial_matrix_element(
    a: RydbergState,
    b: RydbergState,
    species: SpeciesModel,
    model: ModelTag = NCA,
    step: float = DEFAULT_STEP,
) -> float:
    _check_dipole_pair(a, b)
    if model.kind == "EXTERNAL":
        return model.table.radial(a, b)
    wa = numerov_radial(a, species, model, step)
    wb = numerov_radial(b, species, model, step)
    return overlap_integral(wa, wb, power=1)


def reduced_dipole(
    a: RydbergState,
    b: RydbergState,
    species: SpeciesModel,
    model: ModelTag = NCA,
    step: float = DEFAULT_STEP,
) -> float:
    """(n_a l_a j_a || d || n_b l_b j_b) in e a0, asymmetric convention."""
    _check_dipole_pair(a, b)
    if model.kind == "EXTERNAL" and model.table.quantity == "reduced":
        return model.table.lookup(a, b)
    radial = radial_matrix_element(a, b, species, model, step)
    return radial * reduced_j_factor(a.l, a.j, b.l, b.j)


# -- external prediction tables --------------------------------------------


def _key(s: RydbergState) -> tuple:
    return (s.n, s.l, float(s.j))


@dataclass(frozen=True)
class ExternalTable:
    """Tabulated predictions keyed by (lower, upper) state pairs.

    ``quantity`` is ``"radial"`` (default) or ``"reduced"``; radial entries
    are converted to reduced elements with the fine-structure factor.
    """

    name: str
    entries: dict
    quantity: str = "radial"

    def lookup(self, a: RydbergState, b: RydbergState) -> float:
        for k in ((_key(a), _key(b)), (_key(b), _key(a))):
            if k in self.entries:
                return self.entries[k]
        raise LookupError_(f"{self.name}: no entry for {a.label} -> {b.label}")

    def radial(self, a: RydbergState, b: RydbergState) -> float:
        value = self.lookup(a, b)
        if self.quantity == "reduced":
            return value / reduced_j_factor(a.l, a.j, b.l, b.j)
        return value


def parse_external_table(text: str, name: str = "external") -> ExternalTable:
    entries = {}
    quantity = "radial"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = (s.strip() for s in body.split("=", 1))
                if key == "model":
                    name = val
                elif key == "quantity":
                    if val not in ("radial", "reduced"):
                        raise ParseError(f"line {lineno}: quantity must be radial or reduced")
                    quantity = val
            continue
        fields = line.replace(",", " ").split()
        if fields[0] == "n_a":
            continue
        if len(fields) != 7:
            raise ParseError(f"line {lineno}: expected 7 columns, got {len(fields)}")
        try:
            na, la = int(fields[0]), int(fields[1])
            ja = float(Fraction(fields[2]))
            nb, lb = int(fields[3]), int(fields[4])
            jb = float(Fraction(fields[5]))
            value = float(fields[6])
            a, b = RydbergState(na, la, ja), RydbergState(nb, lb, jb)
        except (ValueError, DomainError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        key = (_key(a), _key(b))
        if key in entries or key[::-1] in entries:
            raise ParseError(f"line {lineno}: duplicate entry {a.label} -> {b.label}")
        entries[key] = value
    return ExternalTable(name, entries, quantity)


def load_external_model(path: str | Path) -> ModelTag:
    path = Path(path)
    table = parse_external_table(path.read_text(), name=path.stem)
    return ModelTag.external(table)


def format_external_table(name: str, rows, quantity: str = "radial") -> str:
    """Serialize ``[(a, b, value), ...]`` in the table format."""
    lines = [f"# model = {name}", f"# quantity = {quantity}", "n_a l_a j_a n_b l_b j_b value_au"]
    for a, b, value in rows:
        lines.append(
            f"{a.n} {a.l} {Fraction(a.j)} {b.n} {b.l} {Fraction(b.j)} {value:.10e}"
        )
    return "\n".join(lines) + "\n"

"""Atomic states and species data (quantum defects, core model potential).

Species parameters live in plain key-value files under ``atdipole/data``;
nothing numeric about a species is hard-coded here. File layout::

    name = Rb87
    rydberg_au = 0.49999684           # species-corrected Rydberg constant
    core_charge = 37
    core_polarizability_au = 9.0760
    nuclear_spin = 1.5
    ionization_limit_cm = 33690.8048
    defect.D5/2 = 1.34646572 -0.59600  # delta0 delta2 [delta4]
    defect.default = 0                 # optional fallback for every (l, j)
    potential.l2 = a1 a2 a3 a4 rc      # model potential, one line per l
    anchor.5P3/2_cm = 12816.54938993   # level energy above ground (cm^-1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .constants import HARTREE_INV_CM

L_LETTERS = "SPDFGHIKLMNOQRTUVWXYZ"


class ConfigurationError(ValueError):
    """Species or state data is missing or inconsistent."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


@dataclass(frozen=True)
class RydbergState:
    n: int
    l: int
    j: float
    F: float | None = None
    m_F: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if int(self.l) != self.l or not 0 <= self.l < self.n:
            raise DomainError(f"l must satisfy 0 <= l < n, got l={self.l}, n={self.n}")
        tj = Fraction(self.j) * 2
        if tj.denominator != 1 or tj % 2 == 0:
            raise DomainError(f"j must be a half-integer, got {self.j}")
        if abs(self.j - self.l) != 0.5:
            raise DomainError(f"j={self.j} incompatible with l={self.l}")
        if self.m_F is not None and (self.F is None or abs(self.m_F) > self.F):
            raise DomainError(f"|m_F| <= F violated: F={self.F}, m_F={self.m_F}")

    @property
    def label(self) -> str:
        return f"{self.n}{L_LETTERS[self.l]}{_frac(self.j)}"

    @classmethod
    def parse(cls, text: str) -> "RydbergState":
        """Parse labels such as ``5P3/2`` or ``44D5/2``."""
        text = text.strip()
        i = 0
        while i < len(text) and text[i].isdigit():
            i += 1
        if i == 0 or i >= len(text) or text[i].upper() not in L_LETTERS:
            raise DomainError(f"cannot parse state label {text!r}")
        n = int(text[:i])
        l = L_LETTERS.index(text[i].upper())
        j = float(Fraction(text[i + 1:]))
        return cls(n, l, j)


def _frac(x) -> str:
    f = Fraction(x).limit_denominator(2)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def channel_key(l: int, j: float) -> str:
    return f"{L_LETTERS[l]}{_frac(j)}"


@dataclass(frozen=True)
class QuantumDefectSeries:
    """Rydberg-Ritz expansion delta0 + delta2/(n-delta0)^2 + delta4/(n-delta0)^4 + ..."""

    l: int
    j: float
    coefficients: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not self.coefficients or not all(math.isfinite(c) for c in self.coefficients):
            raise ConfigurationError("quantum-defect coefficients must be finite and non-empty")


@dataclass(frozen=True)
class CorePotential:
    a1: float
    a2: float
    a3: float
    a4: float
    rc: float


@dataclass(frozen=True)
class SpeciesModel:
    name: str
    rydberg_au: float
    core_charge: int
    core_polarizability_au: float
    defects: dict = field(default_factory=dict)
    default_defect: QuantumDefectSeries | None = None
    potentials: dict = field(default_factory=dict)
    anchors_au: dict = field(default_factory=dict)
    nuclear_spin: float = 0.0

    def __post_init__(self):
        if self.rydberg_au <= 0:
            raise ConfigurationError("Rydberg constant must be positive")
        if self.core_polarizability_au < 0:
            raise ConfigurationError("core polarizability must be non-negative")
        for l, p in self.potentials.items():
            if p.rc <= 0:
                raise ConfigurationError(f"r_c must be positive (l={l})")

    def series(self, l: int, j: float) -> QuantumDefectSeries:
        key = channel_key(l, j)
        if key in self.defects:
            return self.defects[key]
        if self.default_defect is not None:
            return QuantumDefectSeries(l, j, self.default_defect.coefficients)
        raise ConfigurationError(f"{self.name}: no quantum-defect series for {key}")

    def core(self, l: int) -> CorePotential:
        if l in self.potentials:
            return self.potentials[l]
        # high-l channels see a bare ion core
        return CorePotential(0.0, 0.0, 0.0, 0.0, 1.0)

    @property
    def hydrogenic(self) -> bool:
        if self.core_charge != 1 or self.core_polarizability_au != 0:
            return False
        series = list(self.defects.values())
        if self.default_defect is not None:
            series.append(self.default_defect)
        return all(all(c == 0 for c in s.coefficients) for s in series)

    def replace(self, **changes) -> "SpeciesModel":
        from dataclasses import replace

        return replace(self, **changes)


def parse_species(text: str, source: str = "<string>") -> SpeciesModel:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = val

    def floats(key):
        try:
            return [float(v) for v in values[key].split()]
        except ValueError as exc:
            raise ConfigurationError(f"{source}: bad number in {key!r}") from exc

    try:
        name = values.pop("name", Path(source).stem)
        rydberg = float(values.pop("rydberg_au"))
        z = int(values.pop("core_charge"))
        alpha_c = float(values.pop("core_polarizability_au", "0"))
        spin = float(values.pop("nuclear_spin", "0"))
        limit = values.pop("ionization_limit_cm", None)
    except KeyError as exc:
        raise ConfigurationError(f"{source}: missing required key {exc}") from None

    defects, potentials, anchors = {}, {}, {}
    default = None
    for key in list(values):
        if key.startswith("defect."):
            chan = key[len("defect."):]
            coeffs = tuple(floats(key))
            if chan == "default":
                default = QuantumDefectSeries(-1, 0.5, coeffs)
                continue
            st = RydbergState.parse(f"99{chan}")
            defects[channel_key(st.l, st.j)] = QuantumDefectSeries(st.l, st.j, coeffs)
        elif key.startswith("potential.l"):
            coeffs = floats(key)
            if len(coeffs) != 5:
                raise ConfigurationError(f"{source}: {key} needs a1 a2 a3 a4 rc")
            potentials[int(key[len("potential.l"):])] = CorePotential(*coeffs)
        elif key.startswith("anchor.") and key.endswith("_cm"):
            if limit is None:
                raise ConfigurationError(f"{source}: anchors need ionization_limit_cm")
            st = RydbergState.parse(key[len("anchor."):-len("_cm")])
            term = floats(key)[0]
            anchors[(st.n, st.l, st.j)] = -(float(limit) - term) / HARTREE_INV_CM
        else:
            raise ConfigurationError(f"{source}: unknown key {key!r}")
    return SpeciesModel(
        name=name,
        rydberg_au=rydberg,
        core_charge=z,
        core_polarizability_au=alpha_c,
        defects=defects,
        default_defect=default,
        potentials=potentials,
        anchors_au=anchors,
        nuclear_spin=spin,
    )


def load_species(name_or_path: str | Path) -> SpeciesModel:
    """Load a bundled species (``"rb87"``, ``"hydrogen"``) or a species file path."""
    path = Path(name_or_path)
    if path.exists():
        return parse_species(path.read_text(), str(path))
    bundled = resources.files("atdipole") / "data" / f"{name_or_path}.species"
    if not bundled.is_file():
        raise ConfigurationError(f"unknown species {name_or_path!r}")
    return parse_species(bundled.read_text(), str(name_or_path))

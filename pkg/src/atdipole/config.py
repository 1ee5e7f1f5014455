"""Run configuration: flat ``section.key_unit = value`` text files.

Values are stored in the units written in the file (the suffix of each key)
and converted to internal units only when physics objects are built, so
``parse_config(format_config(c)) == c`` holds exactly.

Example::

    species.path = rb87
    beam.w_maj_um = 240
    pipeline.n_list = 22 32 44
    pipeline.powers_mW = 5 10 20 40 60 80
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .constants import mhz_to_rad
from .lineshape import (
    BeamGeometry,
    CloudModel,
    InstrumentModel,
    LadderSystem,
    QuadratureConfig,
    default_sweep,
)
from .species import ConfigurationError, QuantumDefectSeries, RydbergState, load_species


def _floats(text):
    return tuple(float(v) for v in text.split())


def _ints(text):
    return tuple(int(v) for v in text.split())


def _words(text):
    return tuple(text.split())


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text):
    return text.strip()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class SystemSection:
    gamma_MHz: float = 6.065
    gamma3_MHz: float = 2.5
    coupling_detuning_MHz: float = 0.0
    sigma0_m2: float = 2.90e-13


@dataclass(frozen=True)
class BeamSection:
    w_maj_um: float = 240.0
    w_min_um: float = 172.0
    rabi_max_MHz: float = 30.0


@dataclass(frozen=True)
class CloudSection:
    density_cm3: float = 6e9
    atom_number: float = 3e6


@dataclass(frozen=True)
class InstrumentSection:
    enabled: bool = True
    span_MHz: float = 788.06
    sweep_time_ms: float = 1.0
    corner_kHz: float = 35.0
    linewidth_kHz: float = 450.0


@dataclass(frozen=True)
class SweepSection:
    half_MHz: float = 80.0
    step_MHz: float = 0.25


@dataclass(frozen=True)
class QuadratureSection:
    nx: int = 64
    ny: int = 64


@dataclass(frozen=True)
class PipelineSection:
    n_list: tuple = (22, 32, 44)
    powers_mW: tuple = (5.0, 10.0, 20.0, 40.0, 60.0, 80.0)
    noise_rel: float = 0.01
    mode: str = "instrument"
    truth_model: str = "NCA"
    compare_models: tuple = ("NCA", "MMP")
    external_tables: tuple = ()
    perturb: bool = True
    write_spectra: bool = True
    workers: int = 1


@dataclass(frozen=True)
class UncertaintySection:
    waist_um: float = 10.0
    power_rel: float = 0.05


_PARSERS = {float: float, int: int, bool: _bool, str: _str}
_TUPLE_PARSERS = {"n_list": _ints, "powers_mW": _floats}

SECTIONS = {
    "system": SystemSection,
    "beam": BeamSection,
    "cloud": CloudSection,
    "instrument": InstrumentSection,
    "sweep": SweepSection,
    "quadrature": QuadratureSection,
    "pipeline": PipelineSection,
    "uncertainty": UncertaintySection,
}


@dataclass(frozen=True)
class RunConfig:
    species: str = "rb87"
    defect_overrides: tuple = ()  # ((channel, (d0, d2, ...)), ...)
    system: SystemSection = SystemSection()
    beam: BeamSection = BeamSection()
    cloud: CloudSection = CloudSection()
    instrument: InstrumentSection = InstrumentSection()
    sweep: SweepSection = SweepSection()
    quadrature: QuadratureSection = QuadratureSection()
    pipeline: PipelineSection = PipelineSection()
    uncertainty: UncertaintySection = UncertaintySection()
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.pipeline.mode not in ("instrument", "broadened"):
            raise ConfigurationError("pipeline.mode must be 'instrument' or 'broadened'")
        if self.pipeline.noise_rel < 0:
            raise ConfigurationError("pipeline.noise_rel must be non-negative")
        if self.pipeline.workers < 1:
            raise ConfigurationError("pipeline.workers must be >= 1")

    # -- physics objects in internal units --

    def load_species(self):
        sp = load_species(self.species)
        if self.defect_overrides:
            defects = dict(sp.defects)
            for chan, coeffs in self.defect_overrides:
                st = RydbergState.parse(f"99{chan}")
                defects[chan] = QuantumDefectSeries(st.l, st.j, tuple(coeffs))
            sp = sp.replace(defects=defects)
        return sp

    def ladder(self) -> LadderSystem:
        s = self.system
        return LadderSystem(
            gamma=mhz_to_rad(s.gamma_MHz),
            gamma3=mhz_to_rad(s.gamma3_MHz),
            sigma0=s.sigma0_m2,
            coupling_detuning=mhz_to_rad(s.coupling_detuning_MHz),
        )

    def beam_geometry(self) -> BeamGeometry:
        b = self.beam
        return BeamGeometry(b.w_maj_um * 1e-6, b.w_min_um * 1e-6, mhz_to_rad(b.rabi_max_MHz))

    def cloud_model(self) -> CloudModel:
        c = self.cloud
        return CloudModel.from_density_and_number(c.density_cm3 * 1e6, c.atom_number)

    def instrument_model(self) -> InstrumentModel | None:
        i = self.instrument
        if not i.enabled:
            return None
        return InstrumentModel(
            span=mhz_to_rad(i.span_MHz),
            sweep_time=i.sweep_time_ms * 1e-3,
            corner_hz=i.corner_kHz * 1e3,
            linewidth_hz=i.linewidth_kHz * 1e3,
        )

    def sweep_grid(self):
        return default_sweep(self.sweep.half_MHz, self.sweep.step_MHz)

    def quadrature_config(self) -> QuadratureConfig:
        return QuadratureConfig(self.quadrature.nx, self.quadrature.ny)

    def digest(self) -> str:
        return hashlib.sha256(format_config(self).encode()).hexdigest()


def _field_parser(section: str, f) -> callable:
    if f.name in _TUPLE_PARSERS:
        return _TUPLE_PARSERS[f.name]
    if isinstance(f.default, tuple):
        return _words
    return _PARSERS[type(f.default)]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text; unknown or repeated keys are errors."""
    seen = set()
    sections = {name: {} for name in SECTIONS}
    top = {}
    overrides = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            if key == "species.path":
                top["species"] = val
            elif key.startswith("species.defect."):
                chan = key[len("species.defect."):]
                RydbergState.parse(f"99{chan}")
                overrides.append((chan, _floats(val)))
            elif key == "seed":
                top["seed"] = int(val)
            elif key == "output.dir":
                top["output_dir"] = val
            else:
                sec, _, name = key.partition(".")
                if sec not in SECTIONS:
                    raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
                by_name = {f.name: f for f in fields(SECTIONS[sec])}
                if name not in by_name:
                    raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
                sections[sec][name] = _field_parser(sec, by_name[name])(val)
        except ConfigurationError:
            raise
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    built = {name: cls(**sections[name]) for name, cls in SECTIONS.items()}
    return RunConfig(defect_overrides=tuple(overrides), **top, **built)


def format_config(cfg: RunConfig) -> str:
    lines = [f"species.path = {cfg.species}"]
    for chan, coeffs in cfg.defect_overrides:
        lines.append(f"species.defect.{chan} = {_fmt(tuple(coeffs))}")
    for name in SECTIONS:
        sec = getattr(cfg, name)
        for f in fields(sec):
            lines.append(f"{name}.{f.name} = {_fmt(getattr(sec, f.name))}")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"output.dir = {cfg.output_dir}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def with_overrides(cfg: RunConfig, **top) -> RunConfig:
    return replace(cfg, **top)

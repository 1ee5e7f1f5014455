"""Batch pipeline: power series per n -> dipole moments -> model comparison.

Synthetic mode generates every spectrum from a "truth" structure model, so
the whole chain can be checked against known dipole moments. All random
draws come from ``numpy.random.default_rng`` seeded by ``(seed, n, ...)``,
which keeps each n independent of how many others are in the run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .angular import stretched_hyperfine_factor
from .config import RunConfig, format_config
from .constants import AU_DIPOLE, rad_to_mhz
from .inference import (
    PAPER_TRANSITION,
    DipoleEstimate,
    ModelComparison,
    MissingPredictionError,
    PowerSeriesPoint,
    chi_squared_compare,
    dipole_from_gradient,
    fit_at_spectrum,
    fit_power_series,
    fit_two_level,
    to_reduced,
)
from .io import atomic_write_text, dumps_json, format_spectrum_csv
from .lineshape import (
    add_noise,
    apply_instrument,
    rabi_max_from_power,
    simulate_spectrum,
)
from .structure import MMP, NCA, ModelTag, effective_n, load_external_model, reduced_dipole
from .species import ConfigurationError, RydbergState

log = logging.getLogger(__name__)

LOWER_STATE = RydbergState(5, 1, 1.5)


def upper_state(n: int) -> RydbergState:
    return RydbergState(n, 2, 2.5)


def resolve_models(names, tables=()) -> list[ModelTag]:
    builtin = {"NCA": NCA, "MMP": MMP}
    tags = []
    for name in names:
        if name not in builtin:
            raise ConfigurationError(f"unknown built-in model {name!r} (use NCA or MMP)")
        tags.append(builtin[name])
    tags.extend(load_external_model(p) for p in tables)
    return tags


def model_predictions(species, tags, n_list) -> dict:
    """{model label: {n: reduced element (e a0)}}; missing entries are skipped."""
    out = {}
    for tag in tags:
        table = {}
        for n in n_list:
            try:
                table[n] = reduced_dipole(LOWER_STATE, upper_state(n), species, tag)
            except KeyError:
                continue
        out[tag.label] = table
    return out


@dataclass
class NResult:
    n: int
    truth_mu: float | None = None
    points: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    power_fit: dict | None = None
    estimate: DipoleEstimate | None = None
    error: str | None = None
    error_category: str | None = None
    spectra: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "n": self.n,
            "truth_mu_C_m": self.truth_mu,
            "fits": self.fits,
            "power_series": self.power_fit,
            "estimate": None if self.estimate is None else self.estimate.to_dict(),
            "error": self.error,
            "error_category": self.error_category,
        }


@dataclass
class PipelineResult:
    config: RunConfig
    per_n: list
    estimates: list
    comparison: ModelComparison | None
    predictions: dict
    diagnostics: list
    two_level: dict | None = None

    def summary(self) -> dict:
        return {
            "estimates": [e.to_dict() for e in self.estimates],
            "comparison": None if self.comparison is None else self.comparison.to_dict(),
            "diagnostics": self.diagnostics,
            "two_level": self.two_level,
        }


def _perturbed_truth(cfg: RunConfig, n: int):
    """True waists and power scale differ from the nominal ones by the quoted errors."""
    beam = cfg.beam_geometry()
    if not cfg.pipeline.perturb:
        return beam, 1.0
    rng_w = np.random.default_rng([cfg.seed, 0])
    dw = rng_w.normal(0.0, cfg.uncertainty.waist_um * 1e-6, size=2)
    rng_p = np.random.default_rng([cfg.seed, n, 1])
    scale = 1.0 + rng_p.normal(0.0, cfg.uncertainty.power_rel)
    return replace(beam, w_maj=beam.w_maj + dw[0], w_min=beam.w_min + dw[1]), scale


def broadened_reference(cfg: RunConfig):
    """Two-level fit without the instrument model: (gamma_eff, line centre, report)."""
    sweep = cfg.sweep_grid()
    cloud, inst = cfg.cloud_model(), cfg.instrument_model()
    beam = replace(cfg.beam_geometry(), rabi_max=0.0)
    sys = replace(cfg.ladder(), coupling_detuning=0.0)
    trace = simulate_spectrum(sweep, sys, beam, cloud, cfg.quadrature_config())
    if inst is not None:
        trace = apply_instrument(trace, inst)
    trace = add_noise(trace, cfg.pipeline.noise_rel, np.random.default_rng([cfg.seed, 0, 3]))
    sigma = cfg.pipeline.noise_rel * np.abs(trace.value) if cfg.pipeline.noise_rel else None
    res = fit_two_level(trace, cloud, beam, sigma0=sys.sigma0, quad=cfg.quadrature_config(), sigma=sigma)
    return res.gamma, res.center, res.to_dict()


def process_n(cfg: RunConfig, n: int, truth_reduced: float, broadened=None) -> NResult:
    """Simulate, fit and regress one Rydberg level."""
    out = NResult(n)
    try:
        coeff = abs(stretched_hyperfine_factor(PAPER_TRANSITION))
        mu = abs(truth_reduced) * coeff * AU_DIPOLE
        out.truth_mu = mu
        true_beam, p_scale = _perturbed_truth(cfg, n)
        meas_beam = cfg.beam_geometry()
        sys = cfg.ladder()
        cloud, inst, quad = cfg.cloud_model(), cfg.instrument_model(), cfg.quadrature_config()
        sweep = cfg.sweep_grid()
        if cfg.pipeline.mode == "broadened":
            gamma, offset = broadened
            fit_inst = None
        else:
            gamma, offset, fit_inst = sys.gamma, 0.0, inst
        for k, p_mw in enumerate(cfg.pipeline.powers_mW):
            p_nom = p_mw * 1e-3
            rabi = rabi_max_from_power(p_nom * p_scale, true_beam.w_maj, true_beam.w_min, mu)
            trace = simulate_spectrum(sweep, sys, replace(true_beam, rabi_max=rabi), cloud, quad)
            if inst is not None:
                trace = apply_instrument(trace, inst)
            rng = np.random.default_rng([cfg.seed, n, 2, k])
            trace = add_noise(trace, cfg.pipeline.noise_rel, rng)
            if cfg.pipeline.write_spectra:
                out.spectra[f"spectra/n{n}_P{p_mw:g}mW.csv"] = format_spectrum_csv(trace, "MHz")
            sigma = cfg.pipeline.noise_rel * np.abs(trace.value) if cfg.pipeline.noise_rel else None
            fit = fit_at_spectrum(
                trace, gamma, meas_beam, cloud, fit_inst,
                quad=quad, sigma=sigma, sigma0=sys.sigma0, probe_offset=offset,
            )
            report = fit.to_dict()
            report["power_mW"] = p_mw
            report["truth_rabi_max_rad_s"] = rabi
            out.fits.append(report)
            err = fit.errors["rabi_max"]
            if not err > 0:
                err = max(1e-6 * fit.rabi_max, 1.0)
            out.points.append(PowerSeriesPoint(p_nom, fit.rabi_max, err))
        ps = fit_power_series(out.points)
        out.power_fit = ps.to_dict()
        est = dipole_from_gradient(
            ps.gradient, ps.gradient_err, meas_beam.w_maj, meas_beam.w_min,
            w_maj_err=cfg.uncertainty.waist_um * 1e-6,
            w_min_err=cfg.uncertainty.waist_um * 1e-6,
            power_rel_err=cfg.uncertainty.power_rel,
            n=n,
        )
        out.estimate = to_reduced(est)
    except Exception as exc:  # noqa: BLE001 - every stage error is recorded per n
        out.error = f"{type(exc).__name__}: {exc}"
        out.error_category = error_category(exc)
        log.warning("n=%d aborted: %s", n, out.error)
    return out


def error_category(exc: BaseException) -> str:
    from .angular import SelectionRuleError
    from .inference import (
        FitError,
        InsufficientContrastError,
        InsufficientDataError,
        NoSignalError,
    )
    from .species import DomainError
    from .structure import NumericalError, ParseError

    table = [
        (FileNotFoundError, "file-not-found"),
        (ParseError, "parse-error"),
        (ConfigurationError, "configuration-error"),
        (SelectionRuleError, "selection-rule"),
        (DomainError, "domain-error"),
        (NumericalError, "numerical-error"),
        (NoSignalError, "no-signal"),
        (InsufficientDataError, "insufficient-data"),
        (InsufficientContrastError, "insufficient-contrast"),
        (FitError, "convergence"),
        (KeyError, "lookup-error"),
    ]
    for cls, name in table:
        if isinstance(exc, cls):
            return name
    return "internal-error"


def _process_task(args):
    return process_n(*args)


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """Run every n in the config; failures are recorded per n and skipped."""
    n_list = list(cfg.pipeline.n_list)
    if not n_list:
        log.warning("empty n list: nothing to do")
        return PipelineResult(cfg, [], [], None, {}, ["empty n list: nothing to do"])
    species = cfg.load_species()
    tags = resolve_models(cfg.pipeline.compare_models, cfg.pipeline.external_tables)
    predictions = model_predictions(species, tags, n_list)
    truth_tag = resolve_models([cfg.pipeline.truth_model])[0]
    truth = model_predictions(species, [truth_tag], n_list)[truth_tag.label]

    two_level = None
    broadened = None
    if cfg.pipeline.mode == "broadened":
        gamma, center, two_level = broadened_reference(cfg)
        broadened = (gamma, center)

    tasks = [(cfg, n, truth[n], broadened) for n in n_list]
    if cfg.pipeline.workers > 1:
        with ProcessPoolExecutor(cfg.pipeline.workers) as pool:
            per_n = list(pool.map(_process_task, tasks))
    else:
        per_n = [_process_task(t) for t in tasks]

    diagnostics = [f"n={r.n}: [{r.error_category}] {r.error}" for r in per_n if r.error]
    estimates = [r.estimate for r in per_n if r.estimate is not None]
    comparison = None
    models = {k: v for k, v in predictions.items()}
    while estimates and models:
        try:
            comparison = chi_squared_compare(estimates, models)
            break
        except MissingPredictionError as exc:
            diagnostics.append(f"comparison: {exc.args[0]}; model dropped")
            bad = [m for m in models if f"{m!r}" in exc.args[0]]
            for m in bad or list(models)[:1]:
                models.pop(m)
    return PipelineResult(cfg, per_n, estimates, comparison, predictions, diagnostics, two_level)


# -- plot data ------------------------------------------------------------


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def plot_tables(result: PipelineResult) -> dict:
    """{relative path: CSV text} for the Omega-vs-sqrt(P) and mu-vs-n plots."""
    files = {}
    for r in result.per_n:
        if r.estimate is None or r.power_fit is None:
            continue
        g, b = r.power_fit["gradient"], r.power_fit["intercept_rad_s"]
        rows = []
        for p in r.points:
            rows.append(
                (
                    p.power * 1e3,
                    p.sqrt_power,
                    rad_to_mhz(p.rabi),
                    rad_to_mhz(p.rabi_err),
                    rad_to_mhz(g * p.sqrt_power + b),
                )
            )
        files[f"plot/omega_vs_sqrtP_n{r.n}.csv"] = _csv(
            ["power_mW", "sqrt_power_W0.5", "rabi_MHz", "rabi_err_MHz", "linear_fit_MHz"], rows
        )
    species = result.config.load_species()
    models = list(result.predictions)
    rows = []
    for est in result.estimates:
        n_star = effective_n(upper_state(est.n), species)
        row = [est.n, n_star, est.reduced_au, est.reduced_err_au]
        row += [abs(result.predictions[m][est.n]) if est.n in result.predictions[m] else None for m in models]
        rows.append(row)
    files["plot/reduced_vs_n.csv"] = _csv(
        ["n", "n_star", "reduced_au", "reduced_err_au"] + [f"model_{m}_au" for m in models], rows
    )
    return files


def emit_plot_data(result: PipelineResult, out_dir) -> dict:
    """Write plot-ready CSV files; returns {relative path: sha256}."""
    out_dir = Path(out_dir)
    digests = {}
    for rel, text in plot_tables(result).items():
        atomic_write_text(out_dir / rel, text)
        digests[rel] = _sha(text)
    return digests


# -- persistence ----------------------------------------------------------


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def result_files(result: PipelineResult) -> dict:
    cfg = result.config
    files = {"config.txt": format_config(cfg)}
    for r in result.per_n:
        files[f"fits/n{r.n}.json"] = dumps_json(r.report())
        files.update(r.spectra)
    files["dipoles.json"] = dumps_json([e.to_dict() for e in result.estimates])
    files["comparison.json"] = dumps_json(
        {
            "comparison": None if result.comparison is None else result.comparison.to_dict(),
            "predictions_au": {m: {str(n): v for n, v in t.items()} for m, t in result.predictions.items()},
        }
    )
    files["diagnostics.json"] = dumps_json(
        {"diagnostics": result.diagnostics, "two_level": result.two_level}
    )
    files.update(plot_tables(result))
    return files


def outputs_digest(digests: dict) -> str:
    body = "\n".join(f"{k}:{digests[k]}" for k in sorted(digests))
    return hashlib.sha256(body.encode()).hexdigest()


class ResultLedger:
    """Append-only JSON-lines record of runs."""

    def __init__(self, path):
        self.path = Path(path)

    def append(self, command: str, config_hash: str, outputs: dict) -> dict:
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "command": command,
            "config_hash": config_hash,
            "outputs": dict(sorted(outputs.items())),
            "outputs_digest": outputs_digest(outputs),
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record

    def records(self) -> list:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text().splitlines() if line.strip()]


def write_results(result: PipelineResult, out_dir, command: str = "pipeline") -> dict:
    """Write every artifact atomically and append a ledger record."""
    out_dir = Path(out_dir)
    digests = {}
    for rel, text in result_files(result).items():
        atomic_write_text(out_dir / rel, text)
        digests[rel] = _sha(text)
    return ResultLedger(out_dir / "ledger.jsonl").append(command, result.config.digest(), digests)

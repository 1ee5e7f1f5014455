"""Command-line interface: ``atdipole <subcommand> [--config F] [--out P] [--seed N]``.

Results go to ``--out`` (or stdout as JSON). On failure the exit status is
nonzero and stderr carries one JSON line ``{"error": <category>, ...}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_config
from .constants import HARTREE_INV_CM, mhz_to_rad, rad_to_mhz
from .inference import (
    DipoleEstimate,
    chi_squared_compare,
    fit_at_spectrum,
    fit_beam_waists,
    fit_two_level,
)
from .io import (
    dumps_json,
    parse_spectrum_csv,
    read_image,
    read_json,
    write_image,
    write_json,
    write_spectrum_csv,
)
from .lineshape import add_noise, apply_instrument, simulate_spectrum
from .pipeline import (
    broadened_reference,
    error_category,
    model_predictions,
    resolve_models,
    run_pipeline,
    write_results,
)
from .species import RydbergState
from .structure import (
    MMP,
    NCA,
    binding_energy,
    effective_n,
    load_external_model,
    quantum_defect,
    radial_matrix_element,
    reduced_dipole,
)

EXIT_CODES = {
    "usage": 2,
    "file-not-found": 3,
    "parse-error": 4,
    "configuration-error": 5,
    "domain-error": 6,
    "selection-rule": 6,
    "numerical-error": 7,
    "no-signal": 8,
    "insufficient-data": 8,
    "insufficient-contrast": 8,
    "convergence": 9,
    "lookup-error": 10,
    "internal-error": 1,
}


def _model(name: str):
    if name.upper() == "NCA":
        return NCA
    if name.upper() == "MMP":
        return MMP
    return load_external_model(name)


def _emit(args, payload):
    text = dumps_json(payload)
    if args.out:
        write_json(args.out, payload)
    else:
        sys.stdout.write(text)


def _cfg(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


# -- subcommands ----------------------------------------------------------


def cmd_qdefect(args):
    species = _cfg(args).load_species()
    rows = []
    for label in args.state:
        st = RydbergState.parse(label)
        e = binding_energy(st, species)
        rows.append(
            {
                "state": st.label,
                "quantum_defect": quantum_defect(species.series(st.l, st.j), st.n),
                "n_star": effective_n(st, species),
                "energy_au": e,
                "energy_cm-1": e * HARTREE_INV_CM,
                "energy_source": "anchor"
                if (st.n, st.l, st.j) in species.anchors_au
                else "quantum_defect",
            }
        )
    _emit(args, rows)


def _pair_values(args, fn):
    species = _cfg(args).load_species()
    model = _model(args.model)
    lower = RydbergState.parse(args.lower)
    out = []
    for label in args.upper:
        upper = RydbergState.parse(label)
        out.append(
            {"lower": lower.label, "upper": upper.label, "model": model.label,
             "value_au": fn(lower, upper, species, model)}
        )
    return out


def cmd_radial(args):
    _emit(args, _pair_values(args, radial_matrix_element))


def cmd_reduced(args):
    _emit(args, _pair_values(args, reduced_dipole))


def cmd_simulate(args):
    cfg = _cfg(args)
    beam = cfg.beam_geometry()
    if args.rabi_MHz is not None:
        beam = replace(beam, rabi_max=mhz_to_rad(args.rabi_MHz))
    trace = simulate_spectrum(cfg.sweep_grid(), cfg.ladder(), beam, cfg.cloud_model(), cfg.quadrature_config())
    inst = cfg.instrument_model()
    if inst is not None:
        trace = apply_instrument(trace, inst)
    noise = cfg.pipeline.noise_rel if args.noise is None else args.noise
    trace = add_noise(trace, noise, np.random.default_rng([cfg.seed, 9]))
    if args.out:
        write_spectrum_csv(args.out, trace, unit=args.unit)
    else:
        from .io import format_spectrum_csv

        sys.stdout.write(format_spectrum_csv(trace, args.unit))


def cmd_fit(args):
    cfg = _cfg(args)
    trace = parse_spectrum_csv(args.trace)
    cloud, quad = cfg.cloud_model(), cfg.quadrature_config()
    beam = cfg.beam_geometry()
    mode = args.mode or cfg.pipeline.mode
    sigma = args.sigma * np.abs(trace.value) if args.sigma else None
    payload = {"trace": str(args.trace)}
    if mode == "broadened":
        if args.two_level:
            ref = fit_two_level(parse_spectrum_csv(args.two_level), cloud, beam, quad=quad)
            gamma, offset, payload["two_level"] = ref.gamma, ref.center, ref.to_dict()
        else:
            gamma, offset, payload["two_level"] = broadened_reference(cfg)
        inst = None
    else:
        gamma, offset, inst = cfg.ladder().gamma, 0.0, cfg.instrument_model()
    if args.gamma_MHz is not None:
        gamma = mhz_to_rad(args.gamma_MHz)
    res = fit_at_spectrum(
        trace, gamma, beam, cloud, inst, quad=quad, sigma=sigma,
        sigma0=cfg.system.sigma0_m2, probe_offset=offset,
    )
    payload["fit"] = res.to_dict()
    payload["rabi_max_MHz"] = rad_to_mhz(res.rabi_max)
    payload["rabi_max_err_MHz"] = rad_to_mhz(res.errors["rabi_max"])
    _emit(args, payload)


def cmd_fit_waist(args):
    cfg = _cfg(args)
    image, pixel = read_image(args.image)
    res = fit_beam_waists(image, pixel, cfg.ladder(), cfg.cloud_model(), cfg.beam_geometry())
    payload = res.to_dict()
    payload.update(w_maj_um=res.w_maj * 1e6, w_min_um=res.w_min * 1e6,
                   w_maj_err_um=res.w_maj_err * 1e6, w_min_err_um=res.w_min_err * 1e6)
    _emit(args, payload)


def cmd_simulate_image(args):
    from .inference import absorption_image

    cfg = _cfg(args)
    shape = (args.pixels, args.pixels)
    img = absorption_image(shape, args.pixel_um * 1e-6, cfg.ladder(), cfg.beam_geometry(), cfg.cloud_model())
    noise = cfg.pipeline.noise_rel if args.noise is None else args.noise
    rng = np.random.default_rng([cfg.seed, 8])
    img = img * (1 + noise * rng.standard_normal(shape))
    if not args.out:
        raise ValueError("simulate-image needs --out")
    write_image(args.out, img, args.pixel_um)


def cmd_pipeline(args):
    cfg = _cfg(args)
    if args.out:
        cfg = replace(cfg, output_dir=str(args.out))
    result = run_pipeline(cfg)
    record = write_results(result, cfg.output_dir)
    summary = {
        "output_dir": cfg.output_dir,
        "outputs_digest": record["outputs_digest"],
        "estimates": [e.to_dict() for e in result.estimates],
        "comparison": None if result.comparison is None else result.comparison.to_dict(),
        "diagnostics": result.diagnostics,
    }
    sys.stdout.write(dumps_json(summary))


def cmd_compare(args):
    cfg = _cfg(args)
    data = read_json(args.measured)
    estimates = []
    for d in data:
        estimates.append(
            DipoleEstimate(
                mu=d["mu_C_m"], mu_err=d["mu_err_C_m"], n=d["n"],
                reduced_au=d["reduced_au"], reduced_err_au=d["reduced_err_au"],
            )
        )
    names = args.models if args.models is not None else list(cfg.pipeline.compare_models)
    tags = resolve_models(names, args.table or cfg.pipeline.external_tables)
    preds = model_predictions(cfg.load_species(), tags, [e.n for e in estimates])
    _emit(args, chi_squared_compare(estimates, preds).to_dict())


# -- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration file")
    common.add_argument("--out", type=Path, help="output file (directory for pipeline)")
    common.add_argument("--seed", type=int, help="override the config seed")

    p = argparse.ArgumentParser(prog="atdipole", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("qdefect", parents=[common], help="quantum defects, n* and energies")
    s.add_argument("state", nargs="+", help="state labels such as 44D5/2")
    s.set_defaults(func=cmd_qdefect)

    for name, func, what in (
        ("radial-me", cmd_radial, "radial matrix elements <a|r|b> (a.u.)"),
        ("reduced-me", cmd_reduced, "reduced dipole elements (J||d||J') (e a0)"),
    ):
        s = sub.add_parser(name, parents=[common], help=what)
        s.add_argument("--lower", default="5P3/2")
        s.add_argument("upper", nargs="+", help="upper state labels")
        s.add_argument("--model", default="NCA", help="NCA, MMP or a prediction-table path")
        s.set_defaults(func=func)

    s = sub.add_parser("simulate", parents=[common], help="simulate a spectrum to CSV")
    s.add_argument("--rabi-MHz", type=float, dest="rabi_MHz")
    s.add_argument("--noise", type=float, help="relative noise (default: pipeline.noise_rel)")
    s.add_argument("--unit", choices=["MHz", "rad/s"], default="MHz")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", parents=[common], help="fit an AT spectrum file")
    s.add_argument("trace", type=Path)
    s.add_argument("--mode", choices=["instrument", "broadened"])
    s.add_argument("--two-level", type=Path, dest="two_level", help="coupling-free trace")
    s.add_argument("--gamma-MHz", type=float, dest="gamma_MHz")
    s.add_argument("--sigma", type=float, help="relative noise level of the trace")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("fit-waist", parents=[common], help="fit waists from an absorption image")
    s.add_argument("image", type=Path)
    s.set_defaults(func=cmd_fit_waist)

    s = sub.add_parser("simulate-image", parents=[common], help="synthetic absorption image")
    s.add_argument("--pixels", type=int, default=121)
    s.add_argument("--pixel-um", type=float, default=20.0, dest="pixel_um")
    s.add_argument("--noise", type=float)
    s.set_defaults(func=cmd_simulate_image)

    s = sub.add_parser("pipeline", parents=[common], help="run the batch pipeline")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("compare-models", parents=[common], help="chi-squared model ranking")
    s.add_argument("measured", type=Path, help="dipoles.json from a pipeline run")
    s.add_argument("--models", nargs="*", help="built-in models (NCA, MMP)")
    s.add_argument("--table", nargs="*", type=Path, help="external prediction tables")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit category
        category = error_category(exc)
        sys.stderr.write(json.dumps({"error": category, "type": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_CODES.get(category, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Regenerate the golden synthetic dataset under ``golden/``.

Contents:
  config.txt                 default run configuration
  pipeline/                  full pipeline output for that configuration
  spectra/at_<R>MHz.csv      noiseless instrumented AT traces, Omega_max = R MHz
  spectra/two_level.csv      noiseless instrumented coupling-free trace
  images/waist_80mW.pgm      absorption image, 1% noise, Omega_max(80 mW, n=32)
  MANIFEST.json              sha256 of every file plus the expected fit values

Usage: python scripts/make_golden.py [--out golden]
"""

import argparse
import hashlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from atdipole.config import RunConfig, format_config
from atdipole.constants import AU_DIPOLE, mhz_to_rad, rad_to_mhz
from atdipole.angular import stretched_hyperfine_factor
from atdipole.inference import (
    PAPER_TRANSITION,
    absorption_image,
    fit_at_spectrum,
    fit_two_level,
    two_level_trace,
)
from atdipole.io import atomic_write_text, write_image, write_json, write_spectrum_csv
from atdipole.lineshape import apply_instrument, rabi_max_from_power, simulate_spectrum
from atdipole.pipeline import LOWER_STATE, run_pipeline, upper_state, write_results
from atdipole.structure import reduced_dipole

AT_RABI_MHZ = (10.0, 20.0, 30.0, 45.0, 60.0)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "golden")
    args = p.parse_args(argv)
    out = args.out
    cfg = RunConfig(output_dir="pipeline")
    atomic_write_text(out / "config.txt", format_config(cfg))

    expected = {}
    sys, cloud, inst, quad = cfg.ladder(), cfg.cloud_model(), cfg.instrument_model(), cfg.quadrature_config()
    beam, sweep = cfg.beam_geometry(), cfg.sweep_grid()
    for rabi in AT_RABI_MHZ:
        trace = apply_instrument(
            simulate_spectrum(sweep, sys, replace(beam, rabi_max=mhz_to_rad(rabi)), cloud, quad), inst
        )
        write_spectrum_csv(out / "spectra" / f"at_{rabi:g}MHz.csv", trace, unit="MHz")
        fit = fit_at_spectrum(trace, sys.gamma, beam, cloud, inst, quad=quad)
        expected[f"at_{rabi:g}MHz_rabi_MHz"] = rad_to_mhz(fit.rabi_max)

    region = replace(beam, rabi_max=0.0)
    two = two_level_trace(sweep, cloud, region, inst, quad=quad)
    write_spectrum_csv(out / "spectra" / "two_level.csv", two, unit="MHz")
    expected["two_level_width_MHz"] = rad_to_mhz(fit_two_level(two, cloud, region, quad=quad).gamma)

    species = cfg.load_species()
    mu = abs(reduced_dipole(LOWER_STATE, upper_state(32), species)) * abs(
        stretched_hyperfine_factor(PAPER_TRANSITION)
    ) * AU_DIPOLE
    rabi80 = rabi_max_from_power(0.08, beam.w_maj, beam.w_min, mu)
    img = absorption_image((101, 101), 20e-6, sys, replace(beam, rabi_max=rabi80), cloud)
    img = img * (1 + 0.01 * np.random.default_rng([cfg.seed, 8]).standard_normal(img.shape))
    write_image(out / "images" / "waist_80mW.pgm", img, 20.0)

    result = run_pipeline(cfg)
    record = write_results(result, out / "pipeline", command="make_golden")
    # the run ledger is timestamped; the manifest carries the digest instead
    (out / "pipeline" / "ledger.jsonl").unlink()
    expected["pipeline_outputs_digest"] = record["outputs_digest"]
    expected["pipeline_reduced_au"] = {str(e.n): e.reduced_au for e in result.estimates}

    files = sorted(
        f for f in out.rglob("*") if f.is_file() and f.name != "MANIFEST.json"
    )
    manifest = {
        "files": {str(f.relative_to(out)): hashlib.sha256(f.read_bytes()).hexdigest() for f in files},
        "expected": expected,
    }
    write_json(out / "MANIFEST.json", manifest)
    print(f"wrote {len(files)} files under {out}")


if __name__ == "__main__":
    main()

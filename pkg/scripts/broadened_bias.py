"""Bias of the broadened-width shortcut against the full instrument model.

Noiseless AT traces are generated with the instrument, then fitted two
ways: with the instrument forward model and the natural width, and with no
instrument but the width (and line centre) from a coupling-free fit.

Usage: python scripts/broadened_bias.py [--rabi-MHz 10 20 30 45 60]
"""

import argparse
from dataclasses import replace

from atdipole.config import RunConfig
from atdipole.constants import mhz_to_rad, rad_to_mhz
from atdipole.inference import fit_at_spectrum, fit_two_level, two_level_trace
from atdipole.lineshape import apply_instrument, simulate_spectrum


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rabi-MHz", type=float, nargs="+", default=[10, 20, 30, 45, 60], dest="rabi")
    args = p.parse_args(argv)
    cfg = RunConfig()
    sys, cloud, inst, quad = cfg.ladder(), cfg.cloud_model(), cfg.instrument_model(), cfg.quadrature_config()
    beam, sweep = cfg.beam_geometry(), cfg.sweep_grid()
    region = replace(beam, rabi_max=0.0)
    ref = fit_two_level(two_level_trace(sweep, cloud, region, inst, quad=quad), cloud, region, quad=quad)
    print(f"broadened width {rad_to_mhz(ref.gamma):.3f} MHz, centre {rad_to_mhz(ref.center):+.3f} MHz")
    print("Omega_true_MHz  instrument_fit  broadened_fit  broadened_bias")
    for rabi in args.rabi:
        b = replace(beam, rabi_max=mhz_to_rad(rabi))
        trace = apply_instrument(simulate_spectrum(sweep, sys, b, cloud, quad), inst)
        full = fit_at_spectrum(trace, sys.gamma, b, cloud, inst, quad=quad)
        approx = fit_at_spectrum(trace, ref.gamma, b, cloud, None, quad=quad, probe_offset=ref.center)
        print(
            f"{rabi:14g}  {rad_to_mhz(full.rabi_max):14.3f}  {rad_to_mhz(approx.rabi_max):13.3f}  "
            f"{approx.rabi_max / full.rabi_max - 1:+14.3f}"
        )


if __name__ == "__main__":
    main()

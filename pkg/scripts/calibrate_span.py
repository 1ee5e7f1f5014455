"""Find the probe sweep span that broadens the 6.065 MHz line to 9 MHz.

The detector low-pass and laser linewidth are fixed; the sweep span over
the sweep time is the free instrument parameter. The span is chosen so a
Lorentzian fit without the instrument model returns the target width. The
result is the ``CALIBRATED_SPAN_MHZ`` constant.

Usage: python scripts/calibrate_span.py [--target-MHz 9.0] [--grid 64]
"""

import argparse

from atdipole.constants import rad_to_mhz
from atdipole.inference import broadened_width, calibrate_sweep_span
from atdipole.lineshape import (
    PAPER_W_MAJ,
    PAPER_W_MIN,
    BeamGeometry,
    QuadratureConfig,
    default_sweep,
    paper_cloud,
    paper_instrument,
)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--target-MHz", type=float, default=9.0, dest="target")
    p.add_argument("--grid", type=int, default=64)
    args = p.parse_args(argv)
    quad = QuadratureConfig(args.grid, args.grid)
    sweep, cloud, template = default_sweep(), paper_cloud(), paper_instrument()
    region = BeamGeometry(PAPER_W_MAJ, PAPER_W_MIN, 0.0)
    span = calibrate_sweep_span(sweep, cloud, region, template, target_hz=args.target * 1e6, quad=quad)
    width = rad_to_mhz(broadened_width(span, sweep, cloud, region, template, quad))
    print(f"span = {span:.2f} MHz per {template.sweep_time * 1e3:g} ms -> fitted width {width:.4f} MHz")


if __name__ == "__main__":
    main()

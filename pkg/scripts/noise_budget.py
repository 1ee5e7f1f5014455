"""Expected Omega-vs-sqrt(P) gradient error from Fisher information alone.

For each Rydberg level the script evaluates the AT forward model at the
true parameters for every coupling power, forms the Fisher matrix of the
five fit parameters under white relative noise, and propagates the
resulting Omega_max errors through the weighted straight-line fit. No
noise is drawn, so the numbers are the best any unbiased fit can do.

Usage: python scripts/noise_budget.py [--noise 0.01 0.003] [--waists 3 1]
"""

import argparse
import math
from dataclasses import replace

import numpy as np

from atdipole.angular import stretched_hyperfine_factor
from atdipole.config import RunConfig
from atdipole.constants import AU_DIPOLE, rad_to_mhz
from atdipole.inference import MHZ, PAPER_TRANSITION, ATModel, PowerSeriesPoint, fit_power_series
from atdipole.lineshape import QuadratureConfig, rabi_max_from_power
from atdipole.pipeline import LOWER_STATE, upper_state
from atdipole.structure import reduced_dipole


def omega_error(model: ATModel, rabi, gamma3, rel_noise):
    """Cramer-Rao bound on Omega_max for parameters (ln Omega, ln g3, Delta, amp, base)."""
    theta = np.array([math.log(rabi / MHZ), math.log(gamma3 / MHZ), 0.0, 1.0, 1.0])

    def f(t):
        return model(math.exp(t[0]) * MHZ, math.exp(t[1]) * MHZ, t[2] * MHZ, t[3], t[4])

    y0 = f(theta)
    J = np.empty((y0.size, theta.size))
    for i in range(theta.size):
        h = 1e-6 * max(abs(theta[i]), 1.0)
        tp = theta.copy()
        tp[i] += h
        J[:, i] = (f(tp) - y0) / h
    J /= (rel_noise * np.abs(y0))[:, None]
    cov = np.linalg.pinv(J.T @ J)
    return rabi * math.sqrt(cov[0, 0])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--noise", type=float, nargs="+", default=[0.01, 0.003])
    p.add_argument("--waists", type=float, nargs="+", default=[3.0, 1.0], help="region half-width in waists")
    args = p.parse_args(argv)

    cfg = RunConfig()
    species = cfg.load_species()
    sys, cloud, inst, beam = cfg.ladder(), cfg.cloud_model(), cfg.instrument_model(), cfg.beam_geometry()
    coeff = abs(stretched_hyperfine_factor(PAPER_TRANSITION))
    print("region_waists noise n  Omega_range_MHz  gradient_rel_err")
    for k in args.waists:
        quad = QuadratureConfig(64, 64, half_x=k * beam.w_maj, half_y=k * beam.w_min)
        model = ATModel(cfg.sweep_grid(), sys.gamma, beam, cloud, inst, quad)
        for noise in args.noise:
            for n in cfg.pipeline.n_list:
                mu = abs(reduced_dipole(LOWER_STATE, upper_state(n), species)) * coeff * AU_DIPOLE
                pts = []
                for p_mw in cfg.pipeline.powers_mW:
                    rabi = rabi_max_from_power(p_mw * 1e-3, beam.w_maj, beam.w_min, mu)
                    model_n = replace(model, beam=replace(beam, rabi_max=rabi))
                    pts.append(PowerSeriesPoint(p_mw * 1e-3, rabi, omega_error(model_n, rabi, sys.gamma3, noise)))
                fit = fit_power_series(pts)
                lo, hi = rad_to_mhz(pts[0].rabi), rad_to_mhz(pts[-1].rabi)
                print(f"{k:13g} {noise:5g} {n:2d}  {lo:5.1f}-{hi:5.1f}        {fit.gradient_err / fit.gradient:.3f}")


if __name__ == "__main__":
    main()

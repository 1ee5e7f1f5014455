"""Physical constants (CODATA, via scipy.constants) and unit helpers.

Every other module imports its constants from here so that no value is
defined twice.
"""

from math import pi

from scipy.constants import c, e, epsilon_0, hbar, physical_constants

BOHR_RADIUS = physical_constants["Bohr radius"][0]
HARTREE_INV_CM = physical_constants["hartree-inverse meter relationship"][0] / 100.0
AU_DIPOLE = e * BOHR_RADIUS  # C m per (e a0)

SPEED_OF_LIGHT = c
EPSILON_0 = epsilon_0
HBAR = hbar
ELEMENTARY_CHARGE = e

TWO_PI = 2.0 * pi

# Resonant cross-section of 5S1/2 F=2 -> 5P3/2 F=3, sigma+ cycling (m^2).
SIGMA0_RB_D2 = 2.90e-13
# Natural width of Rb 5P3/2 (Hz, ordinary frequency FWHM).
GAMMA_RB_D2_HZ = 6.065e6


def mhz_to_rad(value):
    """Ordinary frequency in MHz to angular frequency in rad/s."""
    return value * TWO_PI * 1e6


def rad_to_mhz(value):
    """Angular frequency in rad/s to ordinary frequency in MHz."""
    return value / (TWO_PI * 1e6)


def au_to_si_dipole(value):
    return value * AU_DIPOLE


def si_to_au_dipole(value):
    return value / AU_DIPOLE

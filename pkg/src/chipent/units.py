"""Unit conversions used throughout (nm, GHz, MHz, dB)."""

import numpy as np

C_M_S = 299_792_458.0
# c expressed in nm * GHz, so nu[GHz] = C_NM_GHZ / lambda[nm]
C_NM_GHZ = C_M_S


def nm_to_ghz(wavelength_nm):
    return C_NM_GHZ / np.asarray(wavelength_nm, dtype=float)


def ghz_to_nm(freq_ghz):
    return C_NM_GHZ / np.asarray(freq_ghz, dtype=float)


def linewidth_mhz(center_nm, fwhm_pm):
    """Frequency linewidth from a wavelength FWHM, dnu = c * dlambda / lambda**2."""
    return C_M_S * (fwhm_pm * 1e-12) / (center_nm * 1e-9) ** 2 / 1e6


def db_to_linear(db):
    return 10.0 ** (-np.asarray(db, dtype=float) / 10.0)


def linear_to_db(t):
    return -10.0 * np.log10(np.asarray(t, dtype=float))

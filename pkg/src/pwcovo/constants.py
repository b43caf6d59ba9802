"""Physical constants and unit conversions (atomic units internally)."""

import numpy as np

TWO_PI = 2.0 * np.pi

# CODATA 2018
BOHR_ANGSTROM = 0.529177210903      # 1 bohr in Angstrom
ANGSTROM_BOHR = 1.0 / BOHR_ANGSTROM

HARTREE_RY = 2.0                    # 1 Hartree = 2 Rydberg
RY_HARTREE = 0.5

HARTREE_KCALMOL = 627.5094740631    # 1 Hartree in kcal/mol

# simple-cubic Madelung constant, used in the optional net-charge correction
MADELUNG_SC = 2.8372974794


def angstrom_to_bohr(x):
    return np.asarray(x, dtype=float) * ANGSTROM_BOHR


def bohr_to_angstrom(x):
    return np.asarray(x, dtype=float) * BOHR_ANGSTROM


def ry_to_hartree(e):
    return float(e) * RY_HARTREE


def hartree_to_kcalmol(e):
    return float(e) * HARTREE_KCALMOL

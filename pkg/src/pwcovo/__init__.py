"""Gamma-point plane-wave select-CI engine.

Pipeline: restricted ground-state orbitals -> correlation-optimized virtual
orbitals from a 3x3 select-CI problem -> compact second-quantized Hamiltonian
-> exact diagonalization and a simulated shot-based VQE with readout-error
mitigation.
"""

from .constants import (
    ANGSTROM_BOHR,
    BOHR_ANGSTROM,
    HARTREE_KCALMOL,
    angstrom_to_bohr,
    hartree_to_kcalmol,
)
from .lattice import Cell, PwBasis, build_basis, build_cell, cubic_cell

__all__ = [
    "ANGSTROM_BOHR",
    "BOHR_ANGSTROM",
    "HARTREE_KCALMOL",
    "angstrom_to_bohr",
    "hartree_to_kcalmol",
    "Cell",
    "PwBasis",
    "build_basis",
    "build_cell",
    "cubic_cell",
]

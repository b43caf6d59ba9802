"""Assembled computational context: cell + basis + potentials + kernels.

A :class:`System` fixes everything the integral and solver layers need:
the plane-wave basis, the local-potential Fourier coefficients on the density
mesh, the separable nonlocal table, the Hartree and screening kernels for the
chosen boundary condition, and the constant ion-ion energy shift.
"""

from dataclasses import dataclass, field

import numpy as np

from .atoms import Structure
from .constants import MADELUNG_SC
from .ewald import charge_correction, ewald_energy, freespace_ion_energy
from .kernels import CoulombKernel, filtered_kernel, freespace_kernel, make_bare
from .lattice import Cell, PwBasis, build_basis
from .pseudo import NonlocalTable, builtin_spec, load_spec, local_potential_mesh


@dataclass
class System:
    basis: PwBasis
    structure: Structure
    pseudos: dict
    boundary: str                    # "periodic" | "aperiodic"
    vloc_g: np.ndarray               # local potential coefficients, density mesh
    nl: NonlocalTable
    kern_hartree: CoulombKernel      # bare periodic (G=0 dropped) or truncated free
    kern_screen: CoulombKernel       # cutoff kernel or truncated free
    eshift: float                    # ion-ion energy (+ net-charge correction)
    n_electrons: int
    sigma_c: float
    kernel_n: int
    rcut: float

    @property
    def cell(self) -> Cell:
        return self.basis.cell

    @property
    def omega(self) -> float:
        return self.basis.cell.omega

    @property
    def branched(self) -> bool:
        """Periodic two-electron integrals use the Hartree/screened branch rule."""
        return self.boundary == "periodic"

    @property
    def vloc_field(self) -> np.ndarray:
        if not hasattr(self, "_vloc_field"):
            from .lattice import mesh_ifft
            self._vloc_field = mesh_ifft(self.vloc_g)
        return self._vloc_field


def resolve_pseudos(species, sources=None):
    """Map species labels to radial data: file paths or built-in names."""
    sources = sources or {}
    out = {}
    for s in set(species):
        src = sources.get(s, "builtin")
        out[s] = builtin_spec(s) if src == "builtin" else load_spec(src)
    return out


def build_system(cell: Cell, ecut_ry: float, structure: Structure,
                 pseudos=None, boundary: str = "periodic",
                 kernel_n: int = 8, rcut=None, sigma_c: float = 1.0,
                 n_electrons=None, madelung: float = MADELUNG_SC,
                 pad_factor: float = 1.0) -> System:
    """Build the full computational context for one geometry.

    ``rcut`` defaults to the smallest cell half-width (L/2 for cubic cells) and
    doubles as the free-space truncation radius in aperiodic mode.
    ``pad_factor`` > 1 enlarges the cell for aperiodic runs that need more
    clearance between the density and the truncation sphere.
    """
    if boundary not in ("periodic", "aperiodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    if boundary == "aperiodic" and pad_factor != 1.0:
        cart = structure.cart(cell)
        big = Cell.__new__(Cell)  # rebuild via constructor helper below
        from .lattice import build_cell
        big = build_cell(*(cell.avec * pad_factor))
        shift = 0.5 * (big.avec.sum(axis=0) - cell.avec.sum(axis=0))
        structure = Structure(structure.species,
                              (cart + shift) @ np.linalg.inv(big.avec))
        cell = big
    basis = build_basis(cell, ecut_ry)

    if pseudos is None:
        pseudos = resolve_pseudos(structure.species)
    charges = structure.charges(pseudos)
    if n_electrons is None:
        n_electrons = int(round(charges.sum()))

    if rcut is None:
        rcut = float(np.min(cell.half_widths))

    if boundary == "periodic":
        vloc_g = local_potential_mesh(pseudos, structure, basis, sigma_c, "periodic")
        kern_h = make_bare(basis)
        kern_s = filtered_kernel(basis, kernel_n, rcut)
        eshift = ewald_energy(cell, charges, structure.frac)
        eshift += charge_correction(charges.sum() - n_electrons, cell.omega, madelung)
    else:
        vloc_g = local_potential_mesh(pseudos, structure, basis, sigma_c,
                                      "aperiodic", rc_free=rcut)
        kern = freespace_kernel(basis, rcut)
        kern_h = kern_s = kern
        eshift = freespace_ion_energy(cell, charges, structure.frac)

    nl = NonlocalTable(pseudos, structure, basis)
    return System(basis=basis, structure=structure, pseudos=pseudos,
                  boundary=boundary, vloc_g=vloc_g, nl=nl,
                  kern_hartree=kern_h, kern_screen=kern_s, eshift=float(eshift),
                  n_electrons=n_electrons, sigma_c=sigma_c,
                  kernel_n=kernel_n, rcut=float(rcut))

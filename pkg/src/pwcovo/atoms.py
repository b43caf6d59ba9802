"""Atomic structure: species labels and fractional coordinates."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Structure:
    """Atoms in the cell, fractional coordinates wrapped to [0, 1)."""

    species: list
    frac: np.ndarray   # (natoms, 3)

    def __post_init__(self):
        self.frac = np.atleast_2d(np.asarray(self.frac, dtype=float)) % 1.0

    @property
    def natoms(self) -> int:
        return len(self.species)

    def cart(self, cell):
        return self.frac @ cell.avec

    def charges(self, pseudos):
        return np.array([pseudos[s].zval for s in self.species])


def load_structure(path) -> Structure:
    species, frac = [], []
    with open(path) as fh:
        for line in fh:
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"bad structure line: {line!r}")
            species.append(parts[0])
            frac.append([float(x) for x in parts[1:]])
    if not species:
        raise ValueError(f"no atoms in {path}")
    return Structure(species, np.array(frac))


def save_structure(structure: Structure, path):
    with open(path, "w") as fh:
        fh.write("# species  fx  fy  fz\n")
        for s, f in zip(structure.species, structure.frac):
            fh.write(f"{s}  {f[0]:.12f}  {f[1]:.12f}  {f[2]:.12f}\n")


def diatomic_along_x(species_a: str, species_b: str, r_bohr: float, cell) -> Structure:
    """Place two atoms centered in the cell, separated by r along x."""
    center = np.array([0.5, 0.5, 0.5]) @ cell.avec
    pa = center - np.array([0.5 * r_bohr, 0.0, 0.0])
    pb = center + np.array([0.5 * r_bohr, 0.0, 0.0])
    frac = np.vstack([pa, pb]) @ np.linalg.inv(cell.avec)
    return Structure([species_a, species_b], frac)

"""Periodic cell, plane-wave basis, and FFT-mesh transforms.

Conventions used throughout the package:

  - An orbital is a complex coefficient vector ``c`` over the basis G-vectors
    with ``sum_G |c(G)|^2 = 1``.  Its real-space amplitude is
    ``psi(r) = (1/sqrt(Omega)) * sum_G c(G) exp(i G.r)``, so the 1/sqrt(Omega)
    is absorbed by the coefficients and never appears in stored arrays.
  - A "field" is the array ``f(r) = sum_G x(G) exp(i G.r)`` sampled on the FFT
    mesh.  :func:`mesh_fft` / :func:`mesh_ifft` convert between full-mesh
    coefficient arrays and fields under that normalization, so Parseval reads
    ``(1/N) sum_r |f(r)|^2 = sum_G |x(G)|^2``.
  - The FFT mesh is sized so that pointwise products of two basis-limited
    fields (densities, with twice the wavefunction G-extent per axis) are
    alias-free.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len

from .constants import TWO_PI

MAX_MESH_DIM = 640


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    """Simulation cell: real and reciprocal lattice vectors (rows), in bohr."""

    avec: np.ndarray   # (3,3), rows a1,a2,a3
    bvec: np.ndarray   # (3,3), rows b1,b2,b3; b_i . a_j = 2 pi delta_ij
    omega: float       # cell volume, bohr^3
    v_bz: float        # Brillouin-zone volume (2 pi)^3 / omega

    def frac_to_cart(self, frac):
        return np.asarray(frac, dtype=float) @ self.avec

    def cart_to_frac(self, cart):
        return np.asarray(cart, dtype=float) @ np.linalg.inv(self.avec)

    @property
    def half_widths(self):
        """Perpendicular half-widths of the cell along each lattice direction."""
        cross = np.stack([
            np.cross(self.avec[1], self.avec[2]),
            np.cross(self.avec[2], self.avec[0]),
            np.cross(self.avec[0], self.avec[1]),
        ])
        return 0.5 * self.omega / np.linalg.norm(cross, axis=1)


def build_cell(a1, a2, a3) -> Cell:
    """Build a :class:`Cell` from three lattice vectors (bohr).

    The vectors must be linearly independent and right-handed.
    """
    a = np.array([a1, a2, a3], dtype=float)
    if a.shape != (3, 3):
        raise LatticeError("lattice vectors must be three 3-vectors")
    omega = float(np.linalg.det(a))
    if omega <= 1e-12:
        raise LatticeError("lattice vectors must be linearly independent and right-handed")
    b = TWO_PI * np.linalg.inv(a).T
    a.setflags(write=False)
    b.setflags(write=False)
    return Cell(avec=a, bvec=b, omega=omega, v_bz=TWO_PI**3 / omega)


def cubic_cell(l_bohr: float) -> Cell:
    return build_cell([l_bohr, 0, 0], [0, l_bohr, 0], [0, 0, l_bohr])


def mesh_fft(field):
    """Field values on the mesh -> full-mesh coefficient array."""
    return fftn(field) / field.size


def mesh_ifft(coeffs):
    """Full-mesh coefficient array -> field values on the mesh."""
    return ifftn(coeffs) * coeffs.size


def fft_forward(field):
    """Alias of :func:`mesh_fft` with a shape sanity check."""
    field = np.asarray(field)
    if field.ndim != 3:
        raise LatticeError("expected a 3-d mesh field")
    return mesh_fft(field)


def fft_inverse(coeffs):
    coeffs = np.asarray(coeffs)
    if coeffs.ndim != 3:
        raise LatticeError("expected a 3-d mesh coefficient array")
    return mesh_ifft(coeffs)


def flip_mesh(arr):
    """Map a full-mesh array x(G) to x(-G)."""
    return np.roll(arr[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))


class PwBasis:
    """Plane-wave basis under an energy cutoff, with its alias-free FFT mesh.

    G-vectors are all integer combinations of the reciprocal vectors with
    kinetic energy strictly below the cutoff, ordered by (|G|^2, h, k, l);
    G=0 sits at index 0 and the set is closed under negation.

    Attributes:
        cell: the :class:`Cell`
        ecut: wavefunction cutoff in Hartree (constructor takes Rydberg)
        miller: (nb, 3) integer triples
        gcart: (nb, 3) Cartesian G-vectors (1/bohr)
        g2: (nb,) |G|^2
        mesh: FFT dimensions (n1, n2, n3)
    """

    def __init__(self, cell: Cell, ecut_ry: float, max_mesh_dim: int = MAX_MESH_DIM):
        if ecut_ry <= 0:
            raise LatticeError("cutoff must be positive")
        self.cell = cell
        self.ecut = 0.5 * float(ecut_ry)   # Hartree
        gmax = np.sqrt(2.0 * self.ecut)

        # |n_i| = |G . a_i| / 2 pi <= |G| |a_i| / 2 pi
        nmax = np.floor(gmax * np.linalg.norm(cell.avec, axis=1) / TWO_PI).astype(int)
        rng = [np.arange(-n, n + 1) for n in nmax]
        h, k, l = np.meshgrid(*rng, indexing="ij")
        miller = np.stack([h.ravel(), k.ravel(), l.ravel()], axis=1)
        gcart = miller @ cell.bvec
        g2 = np.einsum("ij,ij->i", gcart, gcart)
        keep = 0.5 * g2 < self.ecut
        miller, gcart, g2 = miller[keep], gcart[keep], g2[keep]

        order = np.lexsort((miller[:, 2], miller[:, 1], miller[:, 0], np.round(g2, 9)))
        self.miller = miller[order]
        self.gcart = gcart[order]
        self.g2 = g2[order]
        if not np.all(self.miller[0] == 0):
            raise LatticeError("G=0 missing from basis")

        dims = []
        for ax in range(3):
            m = int(np.max(np.abs(self.miller[:, ax])))
            dims.append(next_fast_len(4 * m + 1))
        self.mesh = tuple(dims)
        if max(self.mesh) > max_mesh_dim:
            raise LatticeError(
                f"FFT mesh {self.mesh} exceeds the configured maximum dimension {max_mesh_dim}")

        self._scatter = np.ravel_multi_index(
            (self.miller % np.array(self.mesh)).T, self.mesh)

        # Cartesian G and |G|^2 for every mesh point
        mg = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n).astype(int) for n in self.mesh],
                         indexing="ij")
        mesh_miller = np.stack([m.ravel() for m in mg], axis=1)
        gm = mesh_miller @ cell.bvec
        self.mesh_miller = mesh_miller
        self.mesh_gcart = gm
        self.mesh_g2 = np.einsum("ij,ij->i", gm, gm).reshape(self.mesh)

    @property
    def nb(self) -> int:
        return len(self.g2)

    @property
    def size(self) -> int:
        return int(np.prod(self.mesh))

    def to_mesh(self, coeffs):
        """Scatter basis coefficients onto a full-mesh coefficient array."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (self.nb,):
            raise LatticeError("coefficient vector does not match the basis")
        grid = np.zeros(self.size, dtype=complex)
        grid[self._scatter] = coeffs
        return grid.reshape(self.mesh)

    def from_mesh(self, grid):
        """Gather basis coefficients from a full-mesh coefficient array."""
        if grid.shape != self.mesh:
            raise LatticeError("mesh array does not match the FFT mesh")
        return grid.reshape(-1)[self._scatter]

    def field(self, coeffs):
        """Real-space field sum_G c(G) exp(i G.r) of a basis coefficient vector."""
        return mesh_ifft(self.to_mesh(coeffs))

    def mesh_index(self, miller):
        """Flat mesh index of arbitrary integer triples (used for G-G' lookups)."""
        miller = np.asarray(miller)
        return np.ravel_multi_index((miller.T % np.array(self.mesh)[:, None]), self.mesh)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.cell.avec).tobytes())
        h.update(np.float64(self.ecut).tobytes())
        h.update(np.ascontiguousarray(self.miller).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        return f"PwBasis(nb={self.nb}, ecut={self.ecut:.3f} Ha, mesh={self.mesh})"


def build_basis(cell: Cell, ecut_ry: float, **kw) -> PwBasis:
    """All G with |G|^2/2 strictly below the cutoff (given in Rydberg)."""
    return PwBasis(cell, ecut_ry, **kw)

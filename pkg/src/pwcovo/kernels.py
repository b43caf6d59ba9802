"""Coulomb interaction kernels on the density mesh.

All kernels are stored in the 4 pi / |G|^2 scale: a pair interaction reads
(1/Omega) sum_G rho_a(-G) K(G) rho_b(G) with the dimensionless convolution
pair densities of :mod:`pwcovo.integrals`.

Three kinds:
  - ``periodic_bare``: 4 pi / |G|^2 with the G=0 term removed (compensating
    background; used for the Hartree-type terms of periodic systems).
  - ``filtered``: reciprocal form of the real-space cutoff kernel
    V_f(R) = [1 - (1 - exp(-(R/R_cut)^(N+2)))^N] / R, which suppresses
    interactions with periodic images of localized orbital products while
    folding the Brillouin-zone integration into the G sum; finite at G=0.
  - ``aperiodic_freespace``: spherically truncated Coulomb
    4 pi (1 - cos(|G| R_c)) / |G|^2, exact free-space interactions for charge
    confined to a ball of radius R_c.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .lattice import mesh_fft

FOUR_PI = 4.0 * np.pi


class KernelError(ValueError):
    pass


@dataclass
class CoulombKernel:
    kind: str
    values: np.ndarray          # on the density mesh, Ha bohr^3 scale
    n_exp: int = 0
    rcut: float = 0.0


def cutoff_coulomb_r(r, rcut, n_exp=8):
    """Real-space cutoff kernel V_f(R); ~1/R well inside rcut, ~0 outside."""
    r = np.asarray(r, dtype=float)
    x = np.clip(r / rcut, 0.0, 50.0)
    w = 1.0 - (1.0 - np.exp(-(x ** (n_exp + 2)))) ** n_exp
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, w / np.where(r > 0, r, 1.0), np.inf)
    return out


def cutoff_kernel_radial(gmag, rcut, n_exp=8, points_per_rcut=4000):
    """Reciprocal cutoff kernel by 1-d sine transform.

    V_f(G) = (4 pi / G) Integral[W(R) sin(GR) dR],  W(R) = V_f(R) R,
    with W smooth on [0, ~1.5 rcut] and exactly 0 beyond; the G=0 limit is
    4 pi Integral[R W(R) dR].
    """
    gmag = np.atleast_1d(np.asarray(gmag, dtype=float))
    rmax = 2.0 * rcut
    nr = 2 * int(points_per_rcut * rmax / rcut / 2)    # even interval count
    r = np.linspace(0.0, rmax, nr + 1)
    x = r / rcut
    w = 1.0 - (1.0 - np.exp(-(x ** (n_exp + 2)))) ** n_exp

    out = np.empty(len(gmag))
    zero = gmag < 1e-12
    if np.any(zero):
        out[zero] = FOUR_PI * simpson(r * w, x=r)
    nz = ~zero
    if np.any(nz):
        g = gmag[nz]
        chunk = 512
        vals = np.empty(len(g))
        for i0 in range(0, len(g), chunk):
            gg = g[i0:i0 + chunk]
            integ = w * np.sin(np.outer(gg, r))
            vals[i0:i0 + chunk] = simpson(integ, x=r, axis=1)
        out[nz] = FOUR_PI * vals / g
    return out


def _check_rcut(basis, rcut):
    hw = float(np.min(basis.cell.half_widths))
    if rcut > hw * (1.0 + 1e-9):
        raise KernelError(
            f"cutoff radius {rcut:.3f} exceeds the cell half-width {hw:.3f}")


def make_bare(basis) -> CoulombKernel:
    g2 = basis.mesh_g2
    vals = np.zeros_like(g2)
    nz = g2 > 1e-12
    vals[nz] = FOUR_PI / g2[nz]
    return CoulombKernel("periodic_bare", vals)


def filtered_kernel(basis, n_exp=8, rcut=None) -> CoulombKernel:
    """Cutoff kernel on the density mesh via the radial sine transform."""
    if rcut is None:
        rcut = float(np.min(basis.cell.half_widths))
    _check_rcut(basis, rcut)
    g2 = basis.mesh_g2.reshape(-1)
    g2u, inv = np.unique(np.round(g2, 9), return_inverse=True)
    vals = cutoff_kernel_radial(np.sqrt(np.abs(g2u)), rcut, n_exp)
    return CoulombKernel("filtered", vals[inv].reshape(basis.mesh), n_exp, rcut)


def minimum_image_distances(cell, mesh):
    """|r| to the nearest lattice image, for every point of the given mesh."""
    mesh = np.array(mesh)
    fracs = [np.arange(n) / n for n in mesh]
    f = np.stack(np.meshgrid(*fracs, indexing="ij"), axis=-1).reshape(-1, 3)
    shifts = np.array([[i, j, k] for i in (-1, 0, 1)
                       for j in (-1, 0, 1) for k in (-1, 0, 1)])
    best = None
    for s in shifts:
        cart = (f + s) @ cell.avec
        d2 = np.einsum("ij,ij->i", cart, cart)
        best = d2 if best is None else np.minimum(best, d2)
    return np.sqrt(best).reshape(tuple(mesh))


def filtered_kernel_mesh(basis, n_exp=8, rcut=None, oversample=4) -> CoulombKernel:
    """Cutoff kernel by sampling V_f at minimum-image distances and FFT-ing.

    Cross-check route for :func:`filtered_kernel`.  The 1/R core needs a mesh
    finer than the density mesh, so the kernel is sampled on an oversampled
    grid and its Fourier coefficients are gathered at the density-mesh
    G-vectors; the origin voxel gets the volume average of 1/R over an
    equal-volume sphere.
    """
    if rcut is None:
        rcut = float(np.min(basis.cell.half_widths))
    _check_rcut(basis, rcut)
    fine = tuple(int(oversample * n) for n in basis.mesh)
    r = minimum_image_distances(basis.cell, fine)
    vals = cutoff_coulomb_r(r, rcut, n_exp)
    voxel = basis.cell.omega / np.prod(fine)
    a_eq = (3.0 * voxel / FOUR_PI) ** (1.0 / 3.0)
    vals[0, 0, 0] = 1.5 / a_eq            # (1/V) Integral_ball[1/R] = 3/(2a)
    coeff = basis.cell.omega * mesh_fft(vals).real
    # gather the density-mesh G entries from the fine grid
    take = [np.fft.fftfreq(n, 1.0 / n).astype(int) for n in basis.mesh]
    kern = coeff[np.ix_(*[t % f for t, f in zip(take, fine)])]
    return CoulombKernel("filtered", kern, n_exp, rcut)


def freespace_kernel(basis, rc=None) -> CoulombKernel:
    """Spherically truncated Coulomb kernel (free-space interactions)."""
    if rc is None:
        rc = float(np.min(basis.cell.half_widths))
    g2 = basis.mesh_g2
    vals = np.empty_like(g2)
    nz = g2 > 1e-12
    g = np.sqrt(g2[nz])
    vals[nz] = FOUR_PI * (1.0 - np.cos(g * rc)) / g2[nz]
    vals[~nz] = 2.0 * np.pi * rc**2
    return CoulombKernel("aperiodic_freespace", vals, rcut=rc)

"""Ion-ion electrostatics: Ewald sum (periodic) and direct sum (free space)."""

import numpy as np
from scipy.special import erfc

from .constants import MADELUNG_SC, TWO_PI

FOUR_PI = 2.0 * TWO_PI

MAX_RECIP_SHELL = 220
MAX_REAL_SHELL = 12


class EwaldError(RuntimeError):
    pass


def ewald_energy(cell, charges, frac, epsilon=2.0, tol=1e-14):
    """Periodic ion-ion energy by Ewald decomposition.

    Reciprocal sum with Gaussian screens exp(-|G|^2 / 4 eps^2), real-space
    erfc sum over lattice images, self term -(eps/sqrt(pi)) sum Z^2, and the
    neutralizing-background term -(pi / 2 eps^2 Omega)(sum Z)^2.  The result
    is independent of eps.
    """
    charges = np.asarray(charges, dtype=float)
    frac = np.atleast_2d(np.asarray(frac, dtype=float))
    pos = frac @ cell.avec
    omega = cell.omega

    # reciprocal part
    gcut = 2.0 * epsilon * np.sqrt(max(-np.log(tol), 1.0))
    nmax = np.ceil(gcut * np.linalg.norm(cell.avec, axis=1) / TWO_PI).astype(int)
    if np.any(nmax > MAX_RECIP_SHELL):
        raise EwaldError(f"reciprocal sum needs {nmax} shells; raise epsilon")
    e_recip = 0.0
    h_range = np.arange(-nmax[0], nmax[0] + 1)
    kl = np.stack(np.meshgrid(np.arange(-nmax[1], nmax[1] + 1),
                              np.arange(-nmax[2], nmax[2] + 1),
                              indexing="ij"), axis=-1).reshape(-1, 2)
    for h in h_range:
        miller = np.concatenate(
            [np.full((len(kl), 1), h), kl], axis=1)
        if h == 0:
            miller = miller[~np.all(miller == 0, axis=1)]
        g = miller @ cell.bvec
        g2 = np.einsum("ij,ij->i", g, g)
        keep = g2 <= gcut**2
        g, g2 = g[keep], g2[keep]
        if len(g2) == 0:
            continue
        sfac = np.abs(charges @ np.exp(1j * g @ pos.T).T) ** 2
        e_recip += np.sum(FOUR_PI / g2 * np.exp(-g2 / (4.0 * epsilon**2)) * sfac)
    e_recip /= 2.0 * omega

    # real-space part
    rcut = np.sqrt(max(-np.log(tol), 1.0)) / epsilon * 1.2
    nreal = np.ceil(rcut / (2.0 * cell.half_widths)).astype(int) + 1
    if np.any(nreal > MAX_REAL_SHELL):
        raise EwaldError(f"real-space sum needs {nreal} image shells; raise epsilon")
    shifts = np.stack(np.meshgrid(*[np.arange(-n, n + 1) for n in nreal],
                                  indexing="ij"), axis=-1).reshape(-1, 3) @ cell.avec
    e_real = 0.0
    for i in range(len(charges)):
        for j in range(len(charges)):
            d = pos[i] - pos[j] + shifts
            r = np.linalg.norm(d, axis=1)
            r = r[r > 1e-10]
            r = r[r < rcut]
            e_real += 0.5 * charges[i] * charges[j] * np.sum(erfc(epsilon * r) / r)

    e_self = -epsilon / np.sqrt(np.pi) * np.sum(charges**2)
    e_bg = -np.pi / (2.0 * epsilon**2 * omega) * np.sum(charges) ** 2
    return e_recip + e_real + e_self + e_bg


def freespace_ion_energy(cell, charges, frac):
    """Direct pairwise ion-ion energy with no periodic images."""
    charges = np.asarray(charges, dtype=float)
    pos = np.atleast_2d(frac) @ cell.avec
    e = 0.0
    for i in range(len(charges)):
        for j in range(i + 1, len(charges)):
            e += charges[i] * charges[j] / np.linalg.norm(pos[i] - pos[j])
    return e


def charge_correction(q_net, omega, madelung=MADELUNG_SC, r_s=None):
    """Net-charge correction Q^2 M / (2 r_s); zero for neutral cells."""
    if r_s is None:
        r_s = (3.0 * omega / FOUR_PI) ** (1.0 / 3.0)
    return q_net**2 * madelung / (2.0 * r_s)

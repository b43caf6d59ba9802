"""Periodic one- and two-electron integrals over plane-wave orbitals.

Pair densities follow the convolution convention
``rho_pq(G) = sum_G' conj(c_p(G')) c_q(G'+G)`` (dimensionless,
``rho_pp(0) = 1`` for a normalized orbital), and every pair interaction is

    (pq|rs)_K = (1/Omega) sum_G rho_pq(-G) K(G) rho_rs(G)

with kernels in the 4 pi / |G|^2 scale.  Periodic two-electron integrals
follow the branch rule: if an index pair is diagonal (p = q or r = s), the
integral is the bare periodic Hartree term (G != 0) plus the screened
image-exchange correction with the exchange pairing (ps, rq); otherwise the
transition densities interact through the Brillouin-zone-folding cutoff
kernel alone.  Aperiodic systems use the truncated free-space kernel for
everything.
"""

from dataclasses import dataclass

import numpy as np

from .lattice import flip_mesh, mesh_fft, mesh_ifft


class IntegralError(ValueError):
    pass


# ---------------------------------------------------------------------------
# pair densities and primitive contractions

def pair_density(basis, c_p, c_q):
    """rho_pq on the density mesh via real-space products."""
    fp = basis.field(c_p)
    fq = basis.field(c_q)
    return mesh_fft(np.conj(fp) * fq)


def pair_coulomb(omega, kern_values, rho_pq, rho_rs):
    """(1/Omega) sum_G rho_pq(-G) K(G) rho_rs(G)."""
    return np.sum(flip_mesh(rho_pq) * kern_values * rho_rs) / omega


def apply_minus(basis, a_mesh, c):
    """(sum_G A(G) c(G_a - G)) over the basis, i.e. multiply by A's field."""
    prod = mesh_ifft(a_mesh) * basis.field(c)
    return basis.from_mesh(mesh_fft(prod))


def h_apply(sys, c):
    """One-electron operator action: kinetic + local + nonlocal."""
    out = 0.5 * sys.basis.g2 * c
    out = out + apply_minus(sys.basis, sys.vloc_g, c)
    out = out + sys.nl.apply(c)
    return out


def one_electron(sys, c_p, c_q, rho=None):
    """h_pq = kinetic + local-potential + nonlocal matrix element."""
    kin = np.sum(np.conj(c_p) * 0.5 * sys.basis.g2 * c_q)
    if rho is None:
        rho = pair_density(sys.basis, c_p, c_q)
    loc = np.vdot(sys.vloc_g, rho)
    return kin + loc + sys.nl.energy(c_p, c_q)


def h1_dense(sys):
    """Dense one-electron matrix over the basis (small bases only)."""
    nb = sys.basis.nb
    if nb > 3000:
        raise IntegralError("dense one-electron matrix limited to small bases")
    ham = np.diag(0.5 * sys.basis.g2).astype(complex)
    # V(G - G') gathered from the mesh coefficients
    diff = sys.basis.miller[:, None, :] - sys.basis.miller[None, :, :]
    idx = sys.basis.mesh_index(diff.reshape(-1, 3))
    ham += sys.vloc_g.reshape(-1)[idx].reshape(nb, nb)
    for sl, hblk in sys.nl.blocks:
        p = sys.nl.pi[sl]
        ham += p.T @ hblk @ np.conj(p)
    return ham


# ---------------------------------------------------------------------------
# two-electron integrals

class PairCache:
    """Pair densities for a fixed orbital set, computed once per (p, q)."""

    def __init__(self, sys, orbitals):
        self.basis = sys.basis
        self.orbitals = np.asarray(orbitals)
        self._store = {}

    def rho(self, p, q):
        if (p, q) not in self._store:
            if (q, p) in self._store:
                self._store[(p, q)] = np.conj(flip_mesh(self._store[(q, p)]))
            else:
                self._store[(p, q)] = pair_density(
                    self.basis, self.orbitals[p], self.orbitals[q])
        return self._store[(p, q)]


def eri(sys, cache, p, q, r, s):
    """Two-electron integral (pq|rs) under the boundary's branch rule."""
    if sys.branched:
        if p == q or r == s:
            hart = pair_coulomb(sys.omega, sys.kern_hartree.values,
                                cache.rho(p, q), cache.rho(r, s))
            exch = pair_coulomb(sys.omega, sys.kern_screen.values,
                                cache.rho(p, s), cache.rho(r, q))
            return hart - exch
        return pair_coulomb(sys.omega, sys.kern_screen.values,
                            cache.rho(p, q), cache.rho(r, s))
    return pair_coulomb(sys.omega, sys.kern_hartree.values,
                        cache.rho(p, q), cache.rho(r, s))


def two_electron(sys, c_p, c_q, c_r, c_s):
    """One-shot (pq|rs) for four explicit orbitals."""
    cache = PairCache(sys, np.array([c_p, c_q, c_r, c_s]))
    return eri(sys, cache, 0, 1, 2, 3)


# ---------------------------------------------------------------------------
# downfolded Hamiltonian

@dataclass
class SQHamiltonian:
    """Compact second-quantized Hamiltonian over a small orbital set.

    H = sum_pq h1[p,q] a+_p a_q + 1/2 sum_pqrs h2[p,q,r,s] a+_p a+_r a_s a_q
    (spatial orbitals, chemists' index order h2[p,q,r,s] = (pq|rs)), plus the
    scalar ion-ion shift.
    """

    norb: int
    h1: np.ndarray
    h2: np.ndarray
    eshift: float

    def check(self, tol1=1e-10, tol2=1e-9):
        if not np.allclose(self.h1, np.conj(self.h1.T), atol=tol1):
            raise IntegralError("one-electron matrix is not hermitian")
        if not np.allclose(self.h2, np.conj(np.transpose(self.h2, (1, 0, 3, 2))),
                           atol=tol2):
            raise IntegralError("two-electron tensor breaks conjugation symmetry")
        if not np.allclose(self.h2, np.transpose(self.h2, (2, 3, 0, 1)), atol=tol2):
            raise IntegralError("two-electron tensor breaks pair-swap symmetry")
        return self


def build_sq_hamiltonian(sys, orbitals) -> SQHamiltonian:
    """h1/h2 tensors over an orthonormal orbital list, plus the energy shift."""
    orbitals = np.asarray(orbitals)
    n = len(orbitals)
    ovl = orbitals.conj() @ orbitals.T
    if not np.allclose(ovl, np.eye(n), atol=1e-8):
        raise IntegralError("orbitals must be orthonormal to 1e-8")

    cache = PairCache(sys, orbitals)
    h1 = np.zeros((n, n), dtype=complex)
    for p in range(n):
        for q in range(p, n):
            v = one_electron(sys, orbitals[p], orbitals[q], rho=cache.rho(p, q))
            h1[p, q] = v
            h1[q, p] = np.conj(v)

    h2 = np.zeros((n, n, n, n), dtype=complex)
    done = np.zeros((n, n, n, n), dtype=bool)
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    if done[p, q, r, s]:
                        continue
                    v = eri(sys, cache, p, q, r, s)
                    for (a, b, c, d), val in (((p, q, r, s), v),
                                              ((r, s, p, q), v),
                                              ((q, p, s, r), np.conj(v)),
                                              ((s, r, q, p), np.conj(v))):
                        h2[a, b, c, d] = val
                        done[a, b, c, d] = True
    return SQHamiltonian(norb=n, h1=h1, h2=h2, eshift=sys.eshift).check()


# ---------------------------------------------------------------------------
# text dump (value i j k l records, 1-based; i j 0 0 for h1, 0 0 0 0 shift)

def save_sq_hamiltonian(ham: SQHamiltonian, path):
    if np.max(np.abs(ham.h1.imag)) > 1e-12 or np.max(np.abs(ham.h2.imag)) > 1e-12:
        raise IntegralError("text dump supports real integrals only")
    with open(path, "w") as fh:
        fh.write(f"&FCI NORB={ham.norb} MS2=0\n")
        for p in range(ham.norb):
            for q in range(ham.norb):
                for r in range(ham.norb):
                    for s in range(ham.norb):
                        v = ham.h2[p, q, r, s].real
                        if v != 0.0:
                            fh.write(f"{float(v)!r} {p+1} {q+1} {r+1} {s+1}\n")
        for p in range(ham.norb):
            for q in range(ham.norb):
                v = ham.h1[p, q].real
                if v != 0.0:
                    fh.write(f"{float(v)!r} {p+1} {q+1} 0 0\n")
        fh.write(f"{float(ham.eshift)!r} 0 0 0 0\n")


def load_sq_hamiltonian(path) -> SQHamiltonian:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("&FCI"):
            raise IntegralError(f"{path}: not an integral dump")
        norb = int(header.split("NORB=")[1].split()[0])
        h1 = np.zeros((norb, norb), dtype=complex)
        h2 = np.zeros((norb, norb, norb, norb), dtype=complex)
        eshift = 0.0
        for line in fh:
            parts = line.split()
            v = float(parts[0])
            i, j, k, l = (int(x) for x in parts[1:5])
            if i == 0:
                eshift = v
            elif k == 0:
                h1[i - 1, j - 1] = v
            else:
                h2[i - 1, j - 1, k - 1, l - 1] = v
    return SQHamiltonian(norb=norb, h1=h1, h2=h2, eshift=eshift)

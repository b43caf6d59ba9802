"""Radial pseudopotentials and their reciprocal-space representation.

Each species carries a local radial channel (tending to -zval/r) plus
separable Kleinman-Bylander projectors for the remaining angular channels.
The long-range Coulomb tail is split off with an erf screen of width
``sigma_c`` and transformed analytically; the residual short-range bracket is
Bessel-transformed numerically on the stored radial grid.

Scale conventions (see :mod:`pwcovo.lattice` for the orbital convention):

  - ``local_potential_mesh`` returns the true Fourier coefficients v(G) of the
    total local potential, V(r) = sum_G v(G) exp(i G.r), on the density mesh.
  - ``vlocal_recip`` returns the same information for one atom on the basis
    G-vectors in the sqrt(Omega)-scaled form
    (4 pi / sqrt(Omega)) e^{i G.R} Integral[V(r) j0(|G|r) r^2], i.e.
    sqrt(Omega) * conj(v_I(G)).
  - ``projectors_recip`` returns projector transforms scaled by 4 pi / Omega;
    :class:`NonlocalTable` stores the bracket vectors pi_a(G) such that
    <psi|chi_a> = sum_G conj(c(G)) pi_a(G) directly.
"""

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import erf, spherical_jn

from .constants import TWO_PI

FOUR_PI = 2.0 * TWO_PI
SQRT_FOUR_PI = np.sqrt(FOUR_PI)


class PseudoError(ValueError):
    pass


# ---------------------------------------------------------------------------
# radial quadrature

def _filon_sin(phi, r, g):
    """Integral of phi(r) sin(g r) dr with phi piecewise linear, uniform grid."""
    a, b = r[:-1], r[1:]
    h = r[1] - r[0]
    pa, pb = phi[:-1], phi[1:]
    i0 = (np.cos(g * a) - np.cos(g * b)) / g
    i1 = (np.sin(g * b) - np.sin(g * a)) / g**2 - h * np.cos(g * b) / g
    return np.sum(pa * i0 + (pb - pa) / h * i1)


def _filon_cos(phi, r, g):
    a, b = r[:-1], r[1:]
    h = r[1] - r[0]
    pa, pb = phi[:-1], phi[1:]
    j0 = (np.sin(g * b) - np.sin(g * a)) / g
    j1 = (np.cos(g * b) - np.cos(g * a)) / g**2 + h * np.sin(g * b) / g
    return np.sum(pa * j0 + (pb - pa) / h * j1)


def bessel_transform(f_r, rgrid, l, gmag):
    """Integral[f(r) j_l(|G| r) r^2 dr] for each |G| in ``gmag``.

    Simpson product integration; switches to a Filon-type rule (exact in the
    oscillation, linear in f) once the grid undersamples sin(Gr).
    """
    f_r = np.asarray(f_r, dtype=float)
    r = np.asarray(rgrid, dtype=float)
    gmag = np.atleast_1d(np.asarray(gmag, dtype=float))
    dr = np.diff(r)
    uniform = np.allclose(dr, dr[0], rtol=1e-8)
    h = dr[0]

    # the integrand f j_l r^2 vanishes at r=0; grids starting one step in get
    # the exact origin sample prepended (also evens out the Simpson intervals)
    prepend = uniform and abs(r[0] - h) < 1e-9 * h

    out = np.empty(len(gmag))
    zero = gmag < 1e-12
    if np.any(zero):
        mom_integrand = f_r * r**2
        if prepend:
            moment = simpson(np.concatenate([[0.0], mom_integrand]), dx=h)
        elif uniform:
            moment = simpson(mom_integrand, x=r)
        else:
            moment = np.trapz(mom_integrand, r)
        out[zero] = moment if l == 0 else 0.0

    osc = (~zero) & (gmag * h > 0.5)
    smooth = (~zero) & ~osc
    if np.any(osc) and not uniform:
        raise PseudoError(
            "radial quadrature does not converge: grid undersamples the "
            f"oscillation at |G|={gmag[osc].max():.2f} and is not uniform")

    if np.any(smooth):
        gs = gmag[smooth]
        vals = np.empty(len(gs))
        chunk = 256
        for i0 in range(0, len(gs), chunk):
            g = gs[i0:i0 + chunk]
            jl = spherical_jn(l, np.outer(g, r))
            integ = jl * (f_r * r**2)
            if prepend:
                integ = np.concatenate([np.zeros((len(g), 1)), integ], axis=1)
                vals[i0:i0 + chunk] = simpson(integ, dx=h, axis=1)
            elif uniform:
                vals[i0:i0 + chunk] = simpson(integ, dx=h, axis=1)
            else:
                vals[i0:i0 + chunk] = np.trapz(integ, r, axis=1)
        out[smooth] = vals

    if np.any(osc):
        if prepend:
            rf = np.concatenate([[0.0], r])
            ff = np.concatenate([[f_r[0]], f_r])   # value at 0 irrelevant under r-weights
        else:
            rf, ff = r, f_r
        rs = np.where(rf > 0, rf, 1.0)
        for i in np.nonzero(osc)[0]:
            g = gmag[i]
            if l == 0:
                out[i] = _filon_sin(ff * rf, rf, g) / g
            elif l == 1:
                out[i] = _filon_sin(ff, rf, g) / g**2 - _filon_cos(ff * rf, rf, g) / g
            elif l == 2:
                out[i] = (3.0 * _filon_sin(ff / rs, rf, g) / g**3
                          - 3.0 * _filon_cos(ff, rf, g) / g**2
                          - _filon_sin(ff * rf, rf, g) / g)
            else:
                raise PseudoError(f"angular momentum l={l} not supported")
    return out


def transform_on_shells(f_r, rgrid, l, g2_flat):
    """Radial transform evaluated once per unique |G| shell."""
    g2u, inv = np.unique(np.round(g2_flat, 9), return_inverse=True)
    vals = bessel_transform(f_r, rgrid, l, np.sqrt(np.abs(g2u)))
    return vals[inv]


# ---------------------------------------------------------------------------
# tesseral (real spherical) harmonics, l <= 2

def tesseral(l, m, gcart):
    """Real spherical harmonic on the unit direction of each G.

    G=0 rows follow the convention T_lm(0) = delta_l0 / sqrt(4 pi).
    """
    g = np.atleast_2d(np.asarray(gcart, dtype=float))
    norm = np.linalg.norm(g, axis=1)
    small = norm < 1e-12
    safe = np.where(small, 1.0, norm)
    x, y, z = (g[:, i] / safe for i in range(3))

    if l == 0:
        t = np.full(len(g), 1.0 / SQRT_FOUR_PI)
        return t
    if l == 1:
        c = np.sqrt(3.0 / FOUR_PI)
        t = c * {-1: y, 0: z, 1: x}[m]
    elif l == 2:
        if m == -2:
            t = np.sqrt(15.0 / FOUR_PI) * x * y
        elif m == -1:
            t = np.sqrt(15.0 / FOUR_PI) * y * z
        elif m == 0:
            t = np.sqrt(5.0 / (4.0 * FOUR_PI)) * (3.0 * z**2 - 1.0)
        elif m == 1:
            t = np.sqrt(15.0 / FOUR_PI) * x * z
        else:
            t = np.sqrt(15.0 / (4.0 * FOUR_PI)) * (x**2 - y**2)
    else:
        raise PseudoError(f"angular momentum l={l} not supported")
    t = np.where(small, 0.0, t)
    return t


# ---------------------------------------------------------------------------
# radial atoms (used to build and to cross-check the shipped potentials)

def radial_eigenvalues(v_r, rgrid, l=0, nev=1):
    """Lowest eigenvalues of the radial problem on a uniform grid.

    Solves -u''/2 + (v + l(l+1)/2r^2) u = e u with u(0)=u(rmax)=0 by
    second-order finite differences.
    """
    r = np.asarray(rgrid, dtype=float)
    h = r[1] - r[0]
    diag = 1.0 / h**2 + np.asarray(v_r, dtype=float) + l * (l + 1) / (2.0 * r**2)
    off = np.full(len(r) - 1, -0.5 / h**2)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, nev - 1))
    v = v / np.sqrt(h)   # normalize integral of u^2
    return w, v


def radial_ground_extrapolated(v_of_r, rmax, n, l=0):
    """Richardson-extrapolated ground eigenvalue (h^2 -> 0) of a radial potential."""
    out = []
    for nn in (n, 2 * n):
        r = (np.arange(nn) + 1.0) * (rmax / nn)
        w, _ = radial_eigenvalues(v_of_r(r), r, l=l)
        out.append(w[0])
    return (4.0 * out[1] - out[0]) / 3.0


def radial_ground_with_projector(vloc_r, proj_r, hcoef, rgrid, l, nev=3):
    """Lowest eigenvalues of local + one separable projector (dense solve).

    Used to verify that the separable form reproduces the target channel
    eigenvalue and introduces no spurious state below it.
    """
    r = np.asarray(rgrid, dtype=float)
    h = r[1] - r[0]
    n = len(r)
    ham = np.zeros((n, n))
    idx = np.arange(n)
    ham[idx, idx] = 1.0 / h**2 + vloc_r + l * (l + 1) / (2.0 * r**2)
    ham[idx[:-1], idx[:-1] + 1] = -0.5 / h**2
    ham[idx[:-1] + 1, idx[:-1]] = -0.5 / h**2
    chi_u = proj_r * r          # reduced projector
    ham += hcoef * h * np.outer(chi_u, chi_u)
    w = eigh(ham, eigvals_only=True, subset_by_index=(0, nev - 1))
    return w


# ---------------------------------------------------------------------------
# species data

@dataclass
class Projector:
    n: int
    l: int
    p_r: np.ndarray     # radial function (R-type, multiplies T_lm)


@dataclass
class PseudoSpec:
    """Radial data for one species: local channel plus KB projectors."""

    species: str
    zval: float
    rgrid: np.ndarray
    vloc_r: np.ndarray
    projectors: list = field(default_factory=list)
    hblocks: dict = field(default_factory=dict)     # l -> (nproj_l, nproj_l)
    core_radii: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.rgrid = np.asarray(self.rgrid, dtype=float)
        self.vloc_r = np.asarray(self.vloc_r, dtype=float)
        if np.any(np.diff(self.rgrid) <= 0) or self.rgrid[0] < 0:
            raise PseudoError("radial grid must start >= 0 and increase strictly")
        for l, blk in self.hblocks.items():
            blk = np.atleast_2d(np.asarray(blk, dtype=float))
            if not np.allclose(blk, blk.T, atol=1e-12):
                raise PseudoError(f"coupling block for l={l} is not symmetric")
            self.hblocks[l] = blk
        r_end = self.rgrid[-1]
        tail = self.vloc_r[-1] + self.zval / r_end
        if abs(tail) > 0.01 * self.zval / r_end:
            raise PseudoError(
                f"{self.species}: local channel does not approach -zval/r "
                f"(residual {tail:.3e} at r={r_end:.1f})")

    @property
    def lmax(self):
        return max((p.l for p in self.projectors), default=-1)


# ---------------------------------------------------------------------------
# file format

def _fmt(x):
    return repr(float(x))    # shortest exact float64 representation


def save_spec(spec: PseudoSpec, path):
    with open(path, "w") as fh:
        fh.write("pwcovo-psp 1\n")
        fh.write(f"species {spec.species}\n")
        fh.write(f"zval {_fmt(spec.zval)}\n")
        fh.write(f"core_radii {_fmt(spec.core_radii[0])} {_fmt(spec.core_radii[1])}\n")
        fh.write(f"projectors {len(spec.projectors)}\n")
        for p in spec.projectors:
            fh.write(f"proj n={p.n} l={p.l}\n")
        for l in sorted(spec.hblocks):
            flat = " ".join(_fmt(x) for x in np.ravel(spec.hblocks[l]))
            fh.write(f"hblock l={l} {spec.hblocks[l].shape[0]} {flat}\n")
        fh.write(f"points {len(spec.rgrid)}\n")
        fh.write("DATA\n")
        cols = [spec.rgrid, spec.vloc_r] + [p.p_r for p in spec.projectors]
        for row in zip(*cols):
            fh.write(" ".join(_fmt(x) for x in row) + "\n")


def load_spec(path) -> PseudoSpec:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("pwcovo-psp"):
        raise PseudoError(f"{path}: not a pseudopotential file")
    meta, proj_meta, hblocks = {}, [], {}
    i = 1
    while i < len(lines) and lines[i] != "DATA":
        parts = lines[i].split()
        key = parts[0]
        if key == "proj":
            kv = dict(p.split("=") for p in parts[1:])
            proj_meta.append((int(kv["n"]), int(kv["l"])))
        elif key == "hblock":
            l = int(parts[1].split("=")[1])
            nb = int(parts[2])
            vals = np.array([float(x) for x in parts[3:3 + nb * nb]])
            hblocks[l] = vals.reshape(nb, nb)
        else:
            meta[key] = parts[1:]
        i += 1
    data = np.array([[float(x) for x in ln.split()] for ln in lines[i + 1:] if ln.strip()])
    rgrid, vloc = data[:, 0], data[:, 1]
    projectors = [Projector(n=n, l=l, p_r=data[:, 2 + j])
                  for j, (n, l) in enumerate(proj_meta)]
    rc = meta.get("core_radii", ["0", "0"])
    return PseudoSpec(
        species=meta["species"][0],
        zval=float(meta["zval"][0]),
        rgrid=rgrid,
        vloc_r=vloc,
        projectors=projectors,
        hblocks=hblocks,
        core_radii=(float(rc[0]), float(rc[1])),
    )


# ---------------------------------------------------------------------------
# shipped analytic potentials

_GRID_N = 10000
_GRID_RMAX = 25.0


def _builder_grid():
    h = _GRID_RMAX / _GRID_N
    return (np.arange(_GRID_N) + 1.0) * h


def _erf_coulomb(r, rc, z=1.0):
    return -z * erf(r / rc) / r


def _tuned_channel(rc, target, bracket=(-4.0, 2.0)):
    """erf-screened Coulomb plus a Gaussian well, depth tuned so the radial
    ground state lands on ``target`` (Hartree)."""
    r = _builder_grid()

    def ground(a):
        v = _erf_coulomb(r, rc) + a * np.exp(-((r / rc) ** 2))
        w, _ = radial_eigenvalues(v, r, l=0)
        return w[0] - target

    a = brentq(ground, *bracket, xtol=1e-13, rtol=8.9e-16)
    v = _erf_coulomb(r, rc) + a * np.exp(-((r / rc) ** 2))
    return r, v, a


def _make_species(species, zval, rc_s, rc_p, target):
    """Local channel = tuned s potential; one KB projector carries the
    p-channel difference against a plain erf-screened Coulomb of width rc_p."""
    r, vloc, _ = _tuned_channel(rc_s, target)
    v_p = _erf_coulomb(r, rc_p)
    wp, up = radial_eigenvalues(v_p, r, l=1)
    phi_p = up[:, 0] / r
    dv = v_p - vloc
    chi = dv * phi_p
    d = simpson(dv * (up[:, 0] ** 2), x=r)
    hcoef = 1.0 / d
    spec = PseudoSpec(
        species=species,
        zval=zval,
        rgrid=r,
        vloc_r=vloc,
        projectors=[Projector(n=0, l=1, p_r=chi)],
        hblocks={1: np.array([[hcoef]])},
        core_radii=(rc_s, rc_p),
    )
    # separable form must reproduce the p eigenvalue with no state below it
    coarse = slice(0, len(r), 8)
    wk = radial_ground_with_projector(vloc[coarse], chi[coarse], hcoef,
                                      r[coarse], l=1)
    if abs(wk[0] - wp[0]) > 5e-3:
        raise PseudoError(
            f"{species}: separable p channel off by {wk[0] - wp[0]:.2e} "
            "(possible spurious state)")
    return spec


@functools.lru_cache(maxsize=None)
def hydrogen_spec() -> PseudoSpec:
    return _make_species("H", 1.0, rc_s=0.800, rc_p=0.800, target=-0.498883)


@functools.lru_cache(maxsize=None)
def lithium_spec() -> PseudoSpec:
    return _make_species("Li", 1.0, rc_s=1.869, rc_p=1.551, target=-0.192505)


BUILTIN = {"H": hydrogen_spec, "Li": lithium_spec}


def builtin_spec(species: str) -> PseudoSpec:
    try:
        return BUILTIN[species]()
    except KeyError:
        raise PseudoError(f"no built-in potential for species {species!r}") from None


# ---------------------------------------------------------------------------
# reciprocal-space assembly

def _short_range_bracket(spec):
    """vloc(r) + zval erf(r/sigma)/r, the numerically transformed remainder."""
    def bracket(sigma_c):
        return spec.vloc_r + spec.zval * erf(spec.rgrid / sigma_c) / spec.rgrid
    return bracket


def longrange_coeffs(zval, g2_flat, omega, sigma_c, mode="periodic", rc_free=None):
    """Fourier coefficients of -zval erf(r/sigma_c)/r under the given boundary."""
    g2 = np.asarray(g2_flat, dtype=float)
    gauss = np.exp(-g2 * sigma_c**2 / 4.0)
    out = np.empty_like(g2)
    nz = g2 > 1e-12
    if mode == "periodic":
        out[nz] = -zval * FOUR_PI * gauss[nz] / (omega * g2[nz])
        out[~nz] = zval * np.pi * sigma_c**2 / omega
    elif mode == "aperiodic":
        if rc_free is None:
            raise PseudoError("aperiodic mode needs the truncation radius")
        out[nz] = (-zval * FOUR_PI * gauss[nz]
                   * (1.0 - np.cos(np.sqrt(g2[nz]) * rc_free)) / (omega * g2[nz]))
        out[~nz] = -zval * TWO_PI * rc_free**2 / omega
    else:
        raise PseudoError(f"unknown boundary mode {mode!r}")
    return out


def vlocal_recip(spec, cell, basis, r_cart, sigma_c=1.0, mode="periodic", rc_free=None):
    """One atom's local potential on the basis G-vectors, sqrt(Omega) scale.

    (4 pi / sqrt(Omega)) e^{i G.R} Integral[V(r) j0(|G|r) r^2 dr], with the
    -zval/r tail transformed analytically and the divergent G=0 Coulomb piece
    dropped (periodic) or truncated (aperiodic).
    """
    omega = cell.omega
    sr = _short_range_bracket(spec)(sigma_c)
    t_sr = transform_on_shells(sr, spec.rgrid, 0, basis.g2)
    lr = longrange_coeffs(spec.zval, basis.g2, omega, sigma_c, mode, rc_free)
    radial = FOUR_PI * t_sr / omega + lr        # 1/Omega scale, no phase
    phase = np.exp(1j * (basis.gcart @ np.asarray(r_cart, dtype=float)))
    return np.sqrt(omega) * radial * phase


def local_potential_mesh(pseudos, structure, basis, sigma_c=1.0,
                         mode="periodic", rc_free=None):
    """Fourier coefficients v(G) of the total local potential on the mesh."""
    cell = basis.cell
    g2 = basis.mesh_g2.reshape(-1)
    vg = np.zeros(basis.size, dtype=complex)
    radial_cache = {}
    for species, pos in zip(structure.species, structure.cart(cell)):
        spec = pseudos[species]
        if species not in radial_cache:
            sr = _short_range_bracket(spec)(sigma_c)
            t_sr = transform_on_shells(sr, spec.rgrid, 0, g2)
            lr = longrange_coeffs(spec.zval, g2, cell.omega, sigma_c, mode, rc_free)
            radial_cache[species] = FOUR_PI * t_sr / cell.omega + lr
        phase = np.exp(-1j * (basis.mesh_gcart @ pos))
        vg += radial_cache[species] * phase
    return vg.reshape(basis.mesh)


def projectors_recip(spec, cell, basis, r_cart):
    """Projector transforms for one atom on the basis G-vectors (4 pi / Omega
    scale): P_nlm(G) = (4 pi/Omega) e^{i G.R} i^{-l} T_lm(G) Integral[P j_l r^2].

    Returns a list of (n, l, m, values) in (l, n, m) order.
    """
    if spec.lmax > 2:
        raise PseudoError("projectors limited to l <= 2")
    phase = np.exp(1j * (basis.gcart @ np.asarray(r_cart, dtype=float)))
    out = []
    for p in sorted(spec.projectors, key=lambda p: (p.l, p.n)):
        rad = transform_on_shells(p.p_r, spec.rgrid, p.l, basis.g2)
        for m in range(-p.l, p.l + 1):
            t = tesseral(p.l, m, basis.gcart)
            vals = (FOUR_PI / cell.omega) * phase * (-1j) ** p.l * t * rad
            out.append((p.n, p.l, m, vals))
    return out


class NonlocalTable:
    """Separable nonlocal pseudopotential for a whole structure.

    Stores bracket vectors pi_a(G) with <psi | chi_a> = sum_G conj(c(G)) pi_a(G)
    and the block-diagonal channel couplings, so the operator never exists as a
    dense G x G' matrix.
    """

    def __init__(self, pseudos, structure, basis):
        cell = basis.cell
        rows, blocks = [], []
        radial_cache = {}
        for species, pos in zip(structure.species, structure.cart(cell)):
            spec = pseudos[species]
            if spec.lmax > 2:
                raise PseudoError("projectors limited to l <= 2")
            if species not in radial_cache:
                radial_cache[species] = {
                    (p.n, p.l): transform_on_shells(p.p_r, spec.rgrid, p.l, basis.g2)
                    for p in spec.projectors}
            phase = np.exp(-1j * (basis.gcart @ pos))
            by_l = {}
            for p in sorted(spec.projectors, key=lambda p: (p.l, p.n)):
                by_l.setdefault(p.l, []).append(p)
            for l, plist in sorted(by_l.items()):
                hblk = spec.hblocks[l]
                for m in range(-l, l + 1):
                    t = tesseral(l, m, basis.gcart)
                    start = len(rows)
                    for p in plist:
                        pi = (FOUR_PI / np.sqrt(cell.omega)) * phase \
                            * (-1j) ** l * t * radial_cache[species][(p.n, p.l)]
                        rows.append(pi)
                    blocks.append((slice(start, start + len(plist)), hblk))
        self.pi = np.array(rows) if rows else np.zeros((0, basis.nb), dtype=complex)
        self.blocks = blocks
        self.nproj = len(rows)

    def brackets(self, coeffs):
        """w_a = <psi | chi_a> for one orbital."""
        return self.pi @ np.conj(coeffs)

    def couple(self, w):
        out = np.zeros_like(w)
        for sl, hblk in self.blocks:
            out[sl] = hblk @ w[sl]
        return out

    def apply(self, coeffs):
        """(V_NL psi)(G), separable application."""
        if self.nproj == 0:
            return np.zeros_like(coeffs)
        w = np.conj(self.brackets(coeffs))      # <chi_b | psi>
        return self.pi.T @ self.couple(w)

    def energy(self, bra, ket):
        """<bra | V_NL | ket>."""
        if self.nproj == 0:
            return 0.0 + 0.0j
        wb = self.brackets(bra)
        wk = self.brackets(ket)
        return np.sum(wb * self.couple(np.conj(wk)))


def vnl_apply(pseudos, structure, basis, coeffs):
    """Apply the separable nonlocal operator to one orbital."""
    return NonlocalTable(pseudos, structure, basis).apply(coeffs)

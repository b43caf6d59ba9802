"""Tests for pair densities and the one-/two-electron integral machinery."""

import numpy as np
import pytest
from scipy.special import erf

from pwcovo.atoms import Structure
from pwcovo.integrals import (
    IntegralError,
    PairCache,
    build_sq_hamiltonian,
    eri,
    h1_dense,
    h_apply,
    load_sq_hamiltonian,
    one_electron,
    pair_coulomb,
    pair_density,
    save_sq_hamiltonian,
    two_electron,
)
from pwcovo.lattice import build_basis, cubic_cell, mesh_ifft
from pwcovo.pseudo import PseudoSpec, _builder_grid
from pwcovo.system import build_system


def bare_hydrogenish(l_bohr, ecut_ry, boundary="periodic", frac=(0.5, 0.5, 0.5),
                     species=None):
    """Small test system with a single smoothed-Coulomb atom (no projectors)."""
    r = _builder_grid()
    spec = species or PseudoSpec("X", 1.0, r, -erf(r / 0.9) / r)
    cell = cubic_cell(l_bohr)
    struct = Structure([spec.species], np.array([frac]))
    return build_system(cell, ecut_ry, struct, pseudos={spec.species: spec},
                        boundary=boundary)


def normalized_random(basis, rng, envelope=True):
    c = rng.normal(size=basis.nb) + 1j * rng.normal(size=basis.nb)
    if envelope:
        c *= np.exp(-basis.g2 / 4.0)
    return c / np.linalg.norm(c)


@pytest.fixture(scope="module")
def toy():
    return bare_hydrogenish(8.0, 6.0)


# ---------------------------------------------------------------------------
# pair densities

def test_pair_density_diagonal_norm(toy):
    rng = np.random.default_rng(0)
    c = normalized_random(toy.basis, rng)
    rho = pair_density(toy.basis, c, c)
    assert rho[0, 0, 0].real == pytest.approx(1.0, abs=1e-12)
    assert rho[0, 0, 0].imag == pytest.approx(0.0, abs=1e-13)


def test_pair_density_orthogonal_pair(toy):
    rng = np.random.default_rng(1)
    p = normalized_random(toy.basis, rng)
    q = normalized_random(toy.basis, rng)
    q -= p * np.vdot(p, q)
    q /= np.linalg.norm(q)
    rho = pair_density(toy.basis, p, q)
    assert abs(rho[0, 0, 0]) < 1e-12


def test_pair_density_matches_direct_convolution():
    basis = build_basis(cubic_cell(6.0), 4.0)
    assert basis.nb <= 60
    rng = np.random.default_rng(2)
    p = normalized_random(basis, rng, envelope=False)
    q = normalized_random(basis, rng, envelope=False)
    rho = pair_density(basis, p, q)

    lookup = {tuple(m): i for i, m in enumerate(basis.miller)}
    for gm in [(0, 0, 0), (1, 0, 0), (-1, 1, 0), (0, 2, -1)]:
        direct = 0.0
        for i, m in enumerate(basis.miller):
            m2 = (m[0] + gm[0], m[1] + gm[1], m[2] + gm[2])
            if m2 in lookup:
                direct += np.conj(p[i]) * q[lookup[m2]]
        idx = tuple(np.array(gm) % np.array(basis.mesh))
        assert rho[idx] == pytest.approx(direct, abs=1e-11)


def test_pair_density_conjugation(toy):
    rng = np.random.default_rng(3)
    p = normalized_random(toy.basis, rng)
    q = normalized_random(toy.basis, rng)
    from pwcovo.lattice import flip_mesh
    np.testing.assert_allclose(pair_density(toy.basis, p, q),
                               np.conj(flip_mesh(pair_density(toy.basis, q, p))),
                               atol=1e-12)


# ---------------------------------------------------------------------------
# one-electron integrals

def test_free_particle_plane_wave():
    cell = cubic_cell(7.0)
    struct = Structure(["X"], np.array([[0.5, 0.5, 0.5]]))
    r = _builder_grid()
    spec = PseudoSpec("X", 0.0, r, np.zeros_like(r))   # no potential at all
    sys = build_system(cell, 8.0, struct, pseudos={"X": spec})
    c = np.zeros(sys.basis.nb, dtype=complex)
    i = 5
    c[i] = 1.0
    val = one_electron(sys, c, c)
    assert val.real == pytest.approx(0.5 * sys.basis.g2[i], abs=1e-12)
    assert abs(val.imag) < 1e-14


def test_h_hermitian(toy):
    rng = np.random.default_rng(4)
    p = normalized_random(toy.basis, rng)
    q = normalized_random(toy.basis, rng)
    assert one_electron(toy, p, q) == pytest.approx(
        np.conj(one_electron(toy, q, p)), abs=1e-12)


def test_h_apply_consistent_with_matrix_element(toy):
    rng = np.random.default_rng(5)
    p = normalized_random(toy.basis, rng)
    q = normalized_random(toy.basis, rng)
    assert np.vdot(p, h_apply(toy, q)) == pytest.approx(
        one_electron(toy, p, q), abs=1e-11)


def test_h1_dense_matches_apply(toy):
    rng = np.random.default_rng(6)
    c = normalized_random(toy.basis, rng)
    dense = h1_dense(toy)
    np.testing.assert_allclose(dense @ c, h_apply(toy, c), atol=1e-10)
    np.testing.assert_allclose(dense, np.conj(dense.T), atol=1e-11)


def field_on_grid(basis, coeffs, n):
    """sum_G c(G) e^{iG.r} on a uniform n^3 grid of the cell (direct sum)."""
    fr = np.stack(np.meshgrid(*[np.arange(n) / n] * 3, indexing="ij"),
                  axis=-1).reshape(-1, 3)
    pts = fr @ basis.cell.avec
    phase = np.exp(1j * pts @ basis.gcart.T)
    return (phase @ coeffs).reshape(n, n, n)


def test_one_electron_vs_finite_difference_oracle():
    # very smooth fields in a small basis; 6th-order periodic FD Laplacian
    # plus direct potential sampling on a 16^3 grid
    sys = bare_hydrogenish(10.0, 1.6)
    rng = np.random.default_rng(7)
    p = normalized_random(sys.basis, rng)
    q = normalized_random(sys.basis, rng)
    n = 16
    fp = field_on_grid(sys.basis, p, n)
    fq = field_on_grid(sys.basis, q, n)

    h = sys.cell.avec[0, 0] / n
    lap = np.zeros_like(fq)
    coef = {0: -49.0 / 18.0, 1: 3.0 / 2.0, 2: -3.0 / 20.0, 3: 1.0 / 90.0}
    for axis in range(3):
        for off, c in coef.items():
            lap += c * (np.roll(fq, off, axis=axis)
                        + (np.roll(fq, -off, axis=axis) if off else 0.0))
    lap /= h * h

    nb_mesh = np.prod(sys.basis.mesh)
    vmesh_coeffs = sys.vloc_g.reshape(-1)
    fr = np.stack(np.meshgrid(*[np.arange(n) / n] * 3, indexing="ij"),
                  axis=-1).reshape(-1, 3)
    pts = fr @ sys.cell.avec
    vr = (np.exp(1j * pts @ sys.basis.mesh_gcart.T) @ vmesh_coeffs).real.reshape(n, n, n)

    oracle = np.sum(np.conj(fp) * (-0.5 * lap + vr * fq)) / n**3
    val = one_electron(sys, p, q)
    assert val == pytest.approx(oracle, rel=2e-3)


# ---------------------------------------------------------------------------
# two-electron integrals

def test_momentum_selection_rule_zero(toy):
    # plane-wave pairs with mismatched transfer momenta interact not at all
    nb = toy.basis.nb
    c = [np.zeros(nb, dtype=complex) for _ in range(4)]
    c[0][1] = 1.0
    c[1][2] = 1.0
    c[2][3] = 1.0
    c[3][3] = 1.0
    val = pair_coulomb(toy.omega, toy.kern_screen.values,
                       pair_density(toy.basis, c[0], c[1]),
                       pair_density(toy.basis, c[2], c[3]))
    assert abs(val) < 1e-14


def test_eri_pair_swap_symmetry(toy):
    rng = np.random.default_rng(8)
    orbs = np.array([normalized_random(toy.basis, rng) for _ in range(4)])
    cache = PairCache(toy, orbs)
    for (p, q, r, s) in [(0, 1, 2, 3), (0, 0, 1, 2), (1, 2, 3, 3), (0, 0, 1, 1)]:
        a = eri(toy, cache, p, q, r, s)
        b = eri(toy, cache, r, s, p, q)
        assert a == pytest.approx(b, abs=1e-11)
        c = eri(toy, cache, q, p, s, r)
        assert c == pytest.approx(np.conj(a), abs=1e-11)


def test_branch_rule_audit(toy):
    rng = np.random.default_rng(9)
    orbs = np.array([normalized_random(toy.basis, rng) for _ in range(2)])
    cache = PairCache(toy, orbs)
    bare, vf = toy.kern_hartree.values, toy.kern_screen.values
    # diagonal pair: periodic Hartree minus exchange-paired screening
    direct = pair_coulomb(toy.omega, bare, cache.rho(0, 0), cache.rho(1, 1)) \
        - pair_coulomb(toy.omega, vf, cache.rho(0, 1), cache.rho(1, 0))
    assert eri(toy, cache, 0, 0, 1, 1) == pytest.approx(direct, abs=1e-13)
    # off-diagonal pair: screened kernel alone
    scr = pair_coulomb(toy.omega, vf, cache.rho(0, 1), cache.rho(0, 1))
    assert eri(toy, cache, 0, 1, 0, 1) == pytest.approx(scr, abs=1e-13)


def gaussian_orbital(basis, center_frac, sigma):
    pts = basis.cell.frac_to_cart(center_frac)
    c = np.exp(-basis.g2 * sigma**2 / 4.0) * np.exp(-1j * basis.gcart @ pts)
    return c / np.linalg.norm(c)


def free_space_double_sum(basis, rho_mesh, n=12, extent=4.0, center=None):
    """O(N^2) real-space quadrature of Integral[rho(r1) rho(r2) / r12]."""
    if center is None:
        center = 0.5 * basis.cell.avec.sum(axis=0)
    w = 2.0 * extent / n
    ax = center[0] + (np.arange(n) - n / 2 + 0.5) * w
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    # density values at the quadrature points (direct plane-wave sum / Omega)
    vals = (np.exp(1j * pts @ basis.mesh_gcart.T) @ rho_mesh.reshape(-1)).real
    vals /= basis.cell.omega
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    a_eq = (3.0 * w**3 / (4.0 * np.pi)) ** (1.0 / 3.0)
    np.fill_diagonal(d, np.inf)
    inter = vals @ (1.0 / d) @ vals * w**6
    self_term = np.sum(vals**2) * 1.2 * w**6 / a_eq
    return inter + self_term


def test_screened_integral_approaches_free_space():
    sys = bare_hydrogenish(18.0, 7.0)
    p = gaussian_orbital(sys.basis, [0.5, 0.5, 0.5], 1.0)
    q = gaussian_orbital(sys.basis, [0.5 + 0.05, 0.5, 0.5], 1.3)
    rho = pair_density(sys.basis, p, q)
    screened = pair_coulomb(sys.omega, sys.kern_screen.values, rho, rho).real
    oracle = free_space_double_sum(sys.basis, rho)
    assert screened == pytest.approx(oracle, abs=1e-3)


def test_screened_integral_converges_with_cell_size():
    # fixed pair of localized orbitals; image screening error shrinks with L
    vals = []
    for l in (10.0, 15.0, 20.0):
        sys = bare_hydrogenish(l, 7.0)
        p = gaussian_orbital(sys.basis, [0.5, 0.5, 0.5], 0.9)
        q = gaussian_orbital(sys.basis, [0.5 + 0.4 / l, 0.5, 0.5], 1.1)
        rho = pair_density(sys.basis, p, q)
        vals.append(pair_coulomb(sys.omega, sys.kern_screen.values, rho, rho).real)
    deltas = np.abs(np.diff(vals))
    assert deltas[1] < deltas[0]


def test_self_repulsion_positive(toy):
    rng = np.random.default_rng(10)
    orbs = np.array([normalized_random(toy.basis, rng)])
    cache = PairCache(toy, orbs)
    assert eri(toy, cache, 0, 0, 0, 0).real > 0.0


# ---------------------------------------------------------------------------
# assembled Hamiltonian

def test_sq_hamiltonian_kinetic_only():
    cell = cubic_cell(7.0)
    r = _builder_grid()
    spec = PseudoSpec("X", 0.0, r, np.zeros_like(r))
    struct = Structure(["X"], np.array([[0.5, 0.5, 0.5]]))
    sys = build_system(cell, 6.0, struct, pseudos={"X": spec})
    c = np.zeros(sys.basis.nb, dtype=complex)
    c[2] = 1.0
    ham = build_sq_hamiltonian(sys, [c])
    assert ham.h1[0, 0].real == pytest.approx(0.5 * sys.basis.g2[2], abs=1e-12)


def test_sq_hamiltonian_symmetries_and_branch(toy):
    rng = np.random.default_rng(11)
    a = normalized_random(toy.basis, rng)
    b = normalized_random(toy.basis, rng)
    b -= a * np.vdot(a, b)
    b /= np.linalg.norm(b)
    ham = build_sq_hamiltonian(toy, [a, b])
    ham.check()
    cache = PairCache(toy, np.array([a, b]))
    assert ham.h2[0, 0, 1, 1] == pytest.approx(eri(toy, cache, 0, 0, 1, 1), abs=1e-12)
    assert ham.h2[0, 1, 0, 1] == pytest.approx(eri(toy, cache, 0, 1, 0, 1), abs=1e-12)


def test_sq_hamiltonian_rejects_nonorthonormal(toy):
    rng = np.random.default_rng(12)
    a = normalized_random(toy.basis, rng)
    with pytest.raises(IntegralError):
        build_sq_hamiltonian(toy, [a, a])


def test_dump_roundtrip(tmp_path, toy):
    rng = np.random.default_rng(13)
    a = normalized_random(toy.basis, rng)
    a = (a + np.conj(toy.basis.from_mesh(
        __import__("pwcovo.lattice", fromlist=["flip_mesh"]).flip_mesh(
            toy.basis.to_mesh(a))))) / 2   # make it real in real space
    a /= np.linalg.norm(a)
    b = normalized_random(toy.basis, rng)
    b = (b + np.conj(toy.basis.from_mesh(
        __import__("pwcovo.lattice", fromlist=["flip_mesh"]).flip_mesh(
            toy.basis.to_mesh(b))))) / 2
    b -= a * np.vdot(a, b)
    b /= np.linalg.norm(b)
    ham = build_sq_hamiltonian(toy, [a, b])
    path = tmp_path / "ints.dump"
    save_sq_hamiltonian(ham, path)
    back = load_sq_hamiltonian(path)
    assert back.norb == 2
    np.testing.assert_array_equal(back.h1.real, ham.h1.real)
    np.testing.assert_array_equal(back.h2.real, ham.h2.real)
    assert back.eshift == ham.eshift


def test_two_electron_one_shot(toy):
    rng = np.random.default_rng(14)
    orbs = [normalized_random(toy.basis, rng) for _ in range(4)]
    cache = PairCache(toy, np.array(orbs))
    assert two_electron(toy, *orbs) == pytest.approx(
        eri(toy, cache, 0, 1, 2, 3), abs=1e-13)

import numpy as np
import pytest

from tbchern.errors import DegeneracyError
from tbchern.lattice import (BoundaryCondition, HaldaneParams, KaneMeleParams, build_honeycomb,
                             kane_mele_hamiltonian, kane_mele_hopping, realize)
from tbchern.realspace import position_operators
from tbchern.spectra import filled_states
from tbchern.spin import (chern_matrix, kane_mele_spin_twist_family, sigma_z,
                          spin_chern_generalized, spin_chern_split, spin_chern_tbc_oracle,
                          spin_spectral_split, spin_twist_matrices)
from tbchern.tbc import TwistGrid, momentum_chern_oracle

QSH = KaneMeleParams(1.0, 0.3, 0.1, 0.0)
L = 8


def setup(p, L=L):
    g = build_honeycomb(L, L, spinful=True)
    ss, gap = filled_states(kane_mele_hamiltonian(g, p), lowest_n=g.n_sites // 2)
    return g, ss, position_operators(g), sigma_z(g)


@pytest.fixture(scope="module")
def qsh():
    return setup(QSH)


def test_sigma_z_needs_spin():
    with pytest.raises(ValueError):
        sigma_z(build_honeycomb(3, 3))


@pytest.mark.parametrize("method", ["bott", "noncomm"])
def test_split_route(qsh, method):
    g, ss, pos, sz = qsh
    sp = spin_spectral_split(ss, sz)
    assert sp.psi_plus.shape[1] + sp.psi_minus.shape[1] == ss.count
    r = spin_chern_split(sp, pos, method)
    tol = 1e-8 if method == "bott" else 0.05
    assert abs(r.plus.value - 1) < tol and abs(r.minus.value + 1) < tol
    assert abs(r.spin_chern - 1) < tol


def test_split_padded_equals_restricted(qsh):
    g, ss, pos, sz = qsh
    sp = spin_spectral_split(ss, sz)
    a = spin_chern_split(sp, pos, "bott")
    b = spin_chern_split(sp, pos, "bott", padded=True)
    assert (a.plus.value, a.minus.value) == (b.plus.value, b.minus.value)


def test_split_degenerate_sigma_rejected():
    psi = np.zeros((4, 2), dtype=complex)
    psi[0, 0] = psi[1, 0] = 1 / np.sqrt(2)   # <sigma_z> = 0 on this state
    psi[2, 1] = 1.0
    with pytest.raises(DegeneracyError):
        spin_spectral_split(psi, np.array([1.0, -1.0, 1.0, -1.0]))


@pytest.mark.parametrize("method", ["bott", "noncomm"])
def test_generalized_route(qsh, method):
    g, ss, pos, sz = qsh
    r = spin_chern_generalized(ss, pos, sz, method)
    tol = 1e-8 if method == "bott" else 0.05
    assert abs(r.value - 1) < tol


def test_chern_matrix(qsh):
    g, ss, pos, sz = qsh
    cm = chern_matrix(ss, pos, geom=g, method="bott")
    assert cm.spin_chern == 1.0
    assert cm.values[0, 0] == 1.0 and cm.values[1, 1] == -1.0
    cn = chern_matrix(ss, pos, geom=g, method="noncomm")
    assert abs(cn.spin_chern - 1) < 0.05


def test_decoupled_limit_matches_haldane_oracle():
    p = KaneMeleParams(1.0, 0.3, 0.0, 0.0)
    g, ss, pos, sz = setup(p)
    up = momentum_chern_oracle(HaldaneParams(1.0, 0.3, np.pi / 2, 0.0)).integer
    dn = momentum_chern_oracle(HaldaneParams(1.0, 0.3, -np.pi / 2, 0.0)).integer
    sp = spin_spectral_split(ss, sz)
    r = spin_chern_split(sp, pos, "bott")
    assert (r.plus.value, r.minus.value) == (up, dn) == (1, -1)
    cm = chern_matrix(ss, pos, g, "bott")
    assert np.array_equal(cm.values, np.diag([up, dn]))


def test_trivial_phase_all_routes():
    g, ss, pos, sz = setup(KaneMeleParams(1.0, 0.3, 0.1, 4.0))
    assert spin_chern_split(spin_spectral_split(ss, sz), pos, "bott").spin_chern == 0
    assert spin_chern_generalized(ss, pos, sz, "bott").value == 0
    assert chern_matrix(ss, pos, g, "bott").spin_chern == 0


def test_spin_twist_reduces_to_plain_twist_for_ty():
    wrap = np.array([[0, 1], [1, 0], [-1, 1]])
    m = spin_twist_matrices(wrap, (0.0, 0.7))
    assert np.allclose(m[:, 0, 0], m[:, 1, 1])
    m = spin_twist_matrices(wrap, (0.7, 0.0))
    assert np.allclose(m[:, 0, 0], np.conj(m[:, 1, 1]))


def test_spin_twist_family_periodic():
    g = build_honeycomb(4, 4, spinful=True)
    fam = kane_mele_spin_twist_family(g, QSH)
    w0 = np.linalg.eigvalsh(fam((0.3, 0.2)))
    w1 = np.linalg.eigvalsh(fam((0.3 + 2 * np.pi, 0.2)))
    assert np.allclose(w0, w1, atol=1e-10)
    # zero twist is the periodic Hamiltonian
    assert np.allclose(fam((0.0, 0.0)), realize(kane_mele_hopping(g, QSH), BoundaryCondition.pbc()))


@pytest.mark.parametrize("delta,expected", [(0.0, 1), (4.0, 0)])
def test_tbc_oracle(delta, expected):
    g = build_honeycomb(6, 6, spinful=True)
    p = KaneMeleParams(1.0, 0.3, 0.1, delta)
    r = spin_chern_tbc_oracle(kane_mele_spin_twist_family(g, p), g.n_sites // 2, TwistGrid(8, 8))
    assert abs(r.value - expected) < 1e-8

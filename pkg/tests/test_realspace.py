import numpy as np
import pytest

from tbchern.errors import QuasiUnitarityError
from tbchern.lattice import BoundaryCondition, HaldaneParams, build_honeycomb, haldane_hamiltonian
from tbchern.realspace import (bott_from_unitaries, bott_index, commutator_derivative,
                               fd_coefficients, noncommutative_chern,
                               noncommutative_chern_higher_order, position_operators,
                               projected_unitary, quasi_unitarity, unitarize)
from tbchern.spectra import filled_states, projector

TOPO = HaldaneParams(1.0, 0.5, np.pi / 2, 0.0)


def ground(L, p=TOPO, bc=BoundaryCondition.pbc(), **fill):
    g = build_honeycomb(L, L)
    fill = fill or {"lowest_n": L * L}
    ss, gap = filled_states(haldane_hamiltonian(g, p, bc), **fill)
    return g, ss


def test_fd_coefficients():
    assert np.allclose(fd_coefficients(1).c, [1.0])
    assert np.allclose(fd_coefficients(2).c, [4 / 3, -1 / 6])
    for Q in range(1, 7):
        c = fd_coefficients(Q).c
        n = np.arange(1, Q + 1)
        assert np.isclose(np.sum(c * n), 1.0)
        for m in range(2, Q + 1):
            assert abs(np.sum(c * n ** (2 * m - 1))) < 1e-8


def test_fd_coefficients_warn_when_ill_conditioned():
    with pytest.warns(RuntimeWarning):
        fd_coefficients(9)


def test_elementwise_derivative_matches_matrix_products():
    g, ss = ground(4)
    P = projector(ss)
    u = position_operators(g).unitary("x")
    U = np.diag(u)
    coeffs = fd_coefficients(3)
    explicit = np.zeros_like(P)
    for n, c in enumerate(coeffs.c, start=1):
        Un = np.linalg.matrix_power(U, n)
        Um = Un.conj().T
        explicit += c / 2 * (Un @ P @ Um - Um @ P @ Un)
    assert np.allclose(commutator_derivative(P, u, coeffs), explicit, atol=1e-12)


def test_bare_derivative_is_position_commutator_for_short_range():
    # entries connecting cells closer than L/2 carry exactly (2 pi i / L)(r_a - r_b)
    g, ss = ground(6)
    P = projector(ss)
    pos = position_operators(g)
    D = commutator_derivative(P, pos.unitary("x"))
    dr = pos.rx[:, None] - pos.rx[None, :]
    near = np.abs(dr) < g.Lx / 2
    assert np.allclose(D[near], (2j * np.pi / g.Lx * dr * P)[near], atol=1e-12)


def test_noncomm_reference_point():
    g, ss = ground(11)
    r = noncommutative_chern(projector(ss), position_operators(g))
    assert abs(r.value - 1) < 0.01
    assert r.diagnostics["residue"] < 1e-9


def test_higher_order_improves_on_first_order():
    g, ss = ground(11)
    P = projector(ss)
    pos = position_operators(g)
    ux, uy = pos.unitary("x"), pos.unitary("y")
    vals = [noncommutative_chern_higher_order(P, ux, uy, fd_coefficients(q)).value
            for q in (1, 2, 3)]
    # frozen values at L=11
    assert np.allclose(vals, [0.814, 0.935, 0.960], atol=2e-3)
    assert abs(vals[2] - 1) < abs(vals[1] - 1) < abs(vals[0] - 1)


def test_single_cell_variant():
    g, ss = ground(8)
    r = noncommutative_chern(projector(ss), position_operators(g), cell=(3, 3))
    full = noncommutative_chern(projector(ss), position_operators(g))
    # translation invariance: every cell carries the same local marker
    assert abs(r.value - full.value) < 1e-8


def test_noncomm_trivial_phase():
    g, ss = ground(8, HaldaneParams(1.0, 0.2, np.pi / 2, 3.0))
    assert abs(noncommutative_chern(projector(ss), position_operators(g)).value) < 0.05


def test_bott_orderings_and_cyclic_permutation():
    g, ss = ground(8)
    pos = position_operators(g)
    ux, uy = pos.unitary("x"), pos.unitary("y")
    assert bott_index(ss, ux, uy).value == 1.0
    assert bott_index(ss, ux, uy, ordering="loring").value == 1.0
    Ux, _ = unitarize(projected_unitary(ss.psi, ux))
    Uy, _ = unitarize(projected_unitary(ss.psi, uy))
    mats = [Uy.conj().T, Ux, Uy, Ux.conj().T]
    vals = []
    for k in range(4):
        m = mats[k:] + mats[:k]
        W = m[0] @ m[1] @ m[2] @ m[3]
        vals.append(np.sum(np.angle(np.linalg.eigvals(W))) / (2 * np.pi))
    assert np.ptp(vals) < 1e-10
    assert abs(vals[0] - 1) < 1e-10


def test_bott_antisymmetric_in_flux():
    g, ss = ground(8, HaldaneParams(1.0, 0.5, -np.pi / 2, 0.0))
    pos = position_operators(g)
    assert bott_index(ss, pos.unitary("x"), pos.unitary("y")).value == -1.0


def test_quasi_unitarity_improves_with_size():
    devs = []
    for L in (4, 6, 8, 12):
        g, ss = ground(L)
        devs.append(quasi_unitarity(ss, position_operators(g).unitary("x")))
    assert all(a > b for a, b in zip(devs, devs[1:]))


def test_quasi_unitarity_guard():
    M = np.diag([1.0, 0.05]).astype(complex)
    with pytest.raises(QuasiUnitarityError):
        bott_from_unitaries(M, np.eye(2, dtype=complex))


def test_truncated_positions():
    g = build_honeycomb(10, 10)
    pos = position_operators(g, margin=3)
    assert (pos.Lx, pos.Ly) == (4, 4)
    c = g.site_cells
    inside = (c[:, 0] >= 3) & (c[:, 0] < 7)
    assert np.array_equal(pos.rx[inside], c[inside, 0] - 3)
    assert np.all(pos.rx[~inside] == 0)
    with pytest.raises(ValueError):
        position_operators(g, margin=5)


def test_obc_bott_topological_and_trivial():
    bc = BoundaryCondition.obc()
    for delta, expected in ((0.0, 1.0), (3.0, 0.0)):
        g, ss = ground(12, HaldaneParams(1.0, 0.2, np.pi / 2, delta), bc, below_energy=0.0)
        pos = position_operators(g, margin=2)
        assert bott_index(ss, pos.unitary("x"), pos.unitary("y")).value == expected

"""Honeycomb geometry and dense Haldane / Kane-Mele Hamiltonians.

Cells are indexed by integer coordinates ``(cx, cy)`` along the primitive
vectors ``a1 = (sqrt(3), 0)`` and ``a2 = (sqrt(3)/2, 3/2)`` (NN distance 1).
Each cell holds an A site at the cell origin and a B site at ``(a1 + a2)/3``.
Site ordering is row-major in ``(cy, cx, sublattice, spin)``.

Bonds are stored once, as ``source -> target`` with an integer cell
displacement ``disp`` (the true short-range vector) and a ``wrap`` flag such
that ``cell[target] = cell[source] + disp - wrap * (Lx, Ly)``.  The matrix
element ``H[target, source]`` is the amplitude for that hop; its conjugate is
written into ``H[source, target]`` at the same time, so the assembled matrix is
exactly Hermitian.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConsistencyError, SizeError

A1 = np.array([np.sqrt(3.0), 0.0])
A2 = np.array([np.sqrt(3.0) / 2.0, 1.5])
B_OFFSET = (A1 + A2) / 3.0

# B-neighbour cells of an A site at the origin: B(0,0), B(-1,0), B(0,-1)
NN_CELL_DISPS = np.array([[0, 0], [-1, 0], [0, -1]])
# NNN hops with orientation +1: a1, a2 - a1, -a2 on A; the opposite set on B.
# Both sets turn right (clockwise) around the hexagon they bound.
NNN_POS_DISPS = {0: np.array([[1, 0], [-1, 1], [0, -1]]),
                 1: np.array([[-1, 0], [1, -1], [0, 1]])}

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class LatticeGeometry:
    """Honeycomb lattice on an ``Lx x Ly`` torus of cells.

    ``cells``/``sublattice`` describe spatial orbitals (two per cell); bond
    tables index spatial orbitals.  For spinful lattices the full site index is
    ``2 * orbital + spin`` with spin 0 = up, 1 = down.
    """

    Lx: int
    Ly: int
    spinful: bool
    cells: np.ndarray          # (n_orb, 2) int
    sublattice: np.ndarray     # (n_orb,) 0 = A, 1 = B
    nn_bonds: "BondTable"
    nnn_bonds: "BondTable"

    @property
    def n_orbitals(self) -> int:
        return len(self.sublattice)

    @property
    def n_spin(self) -> int:
        return 2 if self.spinful else 1

    @property
    def n_sites(self) -> int:
        return self.n_orbitals * self.n_spin

    @property
    def site_cells(self) -> np.ndarray:
        return np.repeat(self.cells, self.n_spin, axis=0)

    @property
    def site_sublattice(self) -> np.ndarray:
        return np.repeat(self.sublattice, self.n_spin)

    @property
    def site_spin(self) -> Optional[np.ndarray]:
        if not self.spinful:
            return None
        return np.tile([0, 1], self.n_orbitals)

    def orbital_index(self, cx: int, cy: int, sub: int) -> int:
        return ((cy % self.Ly) * self.Lx + (cx % self.Lx)) * 2 + sub

    def sites(self) -> list[tuple]:
        """Site labels ``(cx, cy, 'A'|'B', 'up'|'down'|None)`` in matrix order."""
        out = []
        spins = ("up", "down") if self.spinful else (None,)
        for (cx, cy), sub in zip(self.cells, self.sublattice):
            for s in spins:
                out.append((int(cx), int(cy), "AB"[sub], s))
        return out


@dataclass(frozen=True)
class BondTable:
    source: np.ndarray   # (k,) orbital index
    target: np.ndarray   # (k,)
    disp: np.ndarray     # (k, 2) true cell displacement target - source
    wrap: np.ndarray     # (k, 2) in {-1, 0, 1}
    tag: np.ndarray      # (k,) NN: direction 0..2 ; NNN: orientation +1

    def __len__(self) -> int:
        return len(self.source)


def build_honeycomb(Lx: int, Ly: int, spinful: bool = False) -> LatticeGeometry:
    if Lx < 3 or Ly < 3:
        raise SizeError(f"honeycomb needs Lx, Ly >= 3 (got {Lx}x{Ly})")
    cy, cx = np.divmod(np.arange(Lx * Ly), Lx)
    cells = np.repeat(np.stack([cx, cy], axis=1), 2, axis=0)
    sub = np.tile([0, 1], Lx * Ly)
    size = np.array([Lx, Ly])

    def table(src_sub, tgt_sub, disps, tags):
        src, tgt, dd, ww, tt = [], [], [], [], []
        src_cells = np.stack([cx, cy], axis=1)
        for d, tag in zip(disps, tags):
            raw = src_cells + d
            wrap = np.floor_divide(raw, size)
            tc = raw - wrap * size
            src.append(2 * (cy * Lx + cx) + src_sub)
            tgt.append(2 * (tc[:, 1] * Lx + tc[:, 0]) + tgt_sub)
            dd.append(np.broadcast_to(d, raw.shape))
            ww.append(wrap)
            tt.append(np.full(len(cx), tag))
        return BondTable(np.concatenate(src), np.concatenate(tgt), np.concatenate(dd),
                         np.concatenate(ww), np.concatenate(tt))

    nn = table(0, 1, NN_CELL_DISPS, [0, 1, 2])
    nnn_a = table(0, 0, NNN_POS_DISPS[0], [1, 1, 1])
    nnn_b = table(1, 1, NNN_POS_DISPS[1], [1, 1, 1])
    nnn = BondTable(*(np.concatenate([getattr(nnn_a, f), getattr(nnn_b, f)])
                      for f in ("source", "target", "disp", "wrap", "tag")))
    return LatticeGeometry(Lx, Ly, spinful, cells, sub, nn, nnn)


def bond_vector(geom: LatticeGeometry, bonds: BondTable) -> np.ndarray:
    """Cartesian vectors source -> target for each bond."""
    d = bonds.disp[:, :1] * A1 + bonds.disp[:, 1:] * A2
    return d + (geom.sublattice[bonds.target] - geom.sublattice[bonds.source])[:, None] * B_OFFSET


# --------------------------------------------------------------------------
# parameters and boundary conditions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HaldaneParams:
    t1: float = 1.0
    t2: float = 0.0
    Phi: float = 0.0
    Delta0: float = 0.0


@dataclass(frozen=True)
class KaneMeleParams:
    t: float = 1.0
    lambda_SO: float = 0.0
    lambda_R: float = 0.0
    Delta0: float = 0.0


BC_KINDS = ("PBC", "TBC_boundary_gauge", "TBC_uniform_gauge", "OBC")


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "PBC"
    twist: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}; expected one of {BC_KINDS}")
        if not all(np.isfinite(self.twist)):
            raise ValueError("twist angles must be finite")

    @classmethod
    def pbc(cls):
        return cls("PBC")

    @classmethod
    def obc(cls):
        return cls("OBC")

    @classmethod
    def boundary_gauge(cls, tx, ty):
        return cls("TBC_boundary_gauge", (float(tx), float(ty)))

    @classmethod
    def uniform_gauge(cls, tx, ty):
        return cls("TBC_uniform_gauge", (float(tx), float(ty)))


@dataclass(frozen=True)
class DisorderSpec:
    W: float
    seed: int

    def __post_init__(self):
        if self.W < 0:
            raise ValueError("disorder strength W must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def disorder_potential(geom: LatticeGeometry, dis: Optional[DisorderSpec]) -> np.ndarray:
    """On-site energies ``W * eps`` with ``eps ~ U(-1/2, 1/2)``.

    One PCG64 stream seeded with ``dis.seed``, drawn in orbital order; both
    spin components of a spatial site share one draw.
    """
    if dis is None or dis.W == 0:
        return np.zeros(geom.n_sites)
    rng = np.random.Generator(np.random.PCG64(int(dis.seed)))
    eps = rng.uniform(-0.5, 0.5, size=geom.n_orbitals)
    return np.repeat(dis.W * eps, geom.n_spin)


# --------------------------------------------------------------------------
# hopping models and realization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HoppingModel:
    """On-site energies plus a list of ``source -> target`` hopping blocks.

    ``amp`` has shape ``(k, s, s)`` with ``s`` spin components; the block is
    written into ``H[target, source]``.
    """

    geometry: LatticeGeometry
    onsite: np.ndarray
    source: np.ndarray
    target: np.ndarray
    disp: np.ndarray
    wrap: np.ndarray
    amp: np.ndarray = field(repr=False)


def _join(geom, onsite, tables_and_amps):
    parts = [(t.source, t.target, t.disp, t.wrap, a) for t, a in tables_and_amps]
    return HoppingModel(geom, onsite, *(np.concatenate(x) for x in zip(*parts)))


def haldane_hopping(geom: LatticeGeometry, p: HaldaneParams,
                    dis: Optional[DisorderSpec] = None) -> HoppingModel:
    if geom.spinful:
        raise ValueError("Haldane model needs a spinless geometry")
    xi = np.where(geom.sublattice == 0, 1.0, -1.0)
    onsite = 0.5 * p.Delta0 * xi + disorder_potential(geom, dis)
    nn_amp = np.full((len(geom.nn_bonds), 1, 1), -p.t1, dtype=complex)
    nnn_amp = np.full((len(geom.nnn_bonds), 1, 1), -p.t2 * np.exp(1j * p.Phi), dtype=complex)
    return _join(geom, onsite, [(geom.nn_bonds, nn_amp), (geom.nnn_bonds, nnn_amp)])


def kane_mele_hopping(geom: LatticeGeometry, p: KaneMeleParams,
                      dis: Optional[DisorderSpec] = None) -> HoppingModel:
    """Kane-Mele blocks.

    The intrinsic SO term uses the orientation of ``geom.nnn_bonds`` such that
    at ``lambda_R = 0`` the spin-up block is the Haldane model with
    ``t2 = lambda_SO, Phi = +pi/2`` and spin-down its complex conjugate.
    """
    if not geom.spinful:
        raise ValueError("Kane-Mele model needs a spinful geometry")
    xi = np.where(geom.sublattice == 0, 1.0, -1.0)
    onsite = np.repeat(0.5 * p.Delta0 * xi, 2) + disorder_potential(geom, dis)

    e = bond_vector(geom, geom.nn_bonds)
    e = e / np.linalg.norm(e, axis=1)[:, None]
    # H[target, source] = i lambda_R (sigma x e_{target->source})_z, e_{t->s} = -e
    cross = PAULI_X[None] * (-e[:, 1])[:, None, None] - PAULI_Y[None] * (-e[:, 0])[:, None, None]
    nn_amp = -p.t * np.eye(2)[None] + 1j * p.lambda_R * cross
    nnn_block = -1j * p.lambda_SO * PAULI_Z
    nnn_amp = np.broadcast_to(nnn_block, (len(geom.nnn_bonds), 2, 2))
    return _join(geom, onsite, [(geom.nn_bonds, nn_amp), (geom.nnn_bonds, nnn_amp)])


def realize(model: HoppingModel, bc: BoundaryCondition = BoundaryCondition(),
            spin_twist: Optional[Callable] = None) -> np.ndarray:
    """Dense Hermitian matrix of ``model`` under ``bc``.

    ``spin_twist(wrap, theta)`` may return per-bond ``(s, s)`` matrices that
    right-multiply boundary-crossing blocks (generalized twists); it replaces
    the scalar boundary-gauge phase when given.
    """
    geom = model.geometry
    s = geom.n_spin
    n = geom.n_sites
    amp = np.array(model.amp, dtype=complex)
    wrap = model.wrap
    crosses = np.any(wrap != 0, axis=1)
    tx, ty = bc.twist
    if bc.kind == "OBC":
        amp = amp[~crosses]
        src, tgt = model.source[~crosses], model.target[~crosses]
    else:
        src, tgt = model.source, model.target
        if spin_twist is not None:
            amp = amp @ spin_twist(wrap, (tx, ty))
        elif bc.kind == "TBC_boundary_gauge":
            amp = amp * np.exp(1j * (tx * wrap[:, 0] + ty * wrap[:, 1]))[:, None, None]
        elif bc.kind == "TBC_uniform_gauge":
            d = model.disp
            amp = amp * np.exp(1j * (tx * d[:, 0] / geom.Lx + ty * d[:, 1] / geom.Ly))[:, None, None]

    H = np.zeros((n, n), dtype=complex)
    H[np.arange(n), np.arange(n)] = model.onsite
    for a in range(s):
        for b in range(s):
            rows, cols = s * tgt + a, s * src + b
            np.add.at(H, (rows, cols), amp[:, a, b])
            np.add.at(H, (cols, rows), np.conj(amp[:, a, b]))
    if np.max(np.abs(H - H.conj().T), initial=0.0) != 0.0:
        raise ConsistencyError("assembled Hamiltonian is not Hermitian")
    return H


def haldane_hamiltonian(geom: LatticeGeometry, p: HaldaneParams,
                        bc: BoundaryCondition = BoundaryCondition(),
                        dis: Optional[DisorderSpec] = None) -> np.ndarray:
    return realize(haldane_hopping(geom, p, dis), bc)


def kane_mele_hamiltonian(geom: LatticeGeometry, p: KaneMeleParams,
                          bc: BoundaryCondition = BoundaryCondition(),
                          dis: Optional[DisorderSpec] = None) -> np.ndarray:
    return realize(kane_mele_hopping(geom, p, dis), bc)


def twist_operator(geom: LatticeGeometry, theta_x: float, theta_y: float) -> np.ndarray:
    """Diagonal of ``exp(i theta_x r_x / Lx + i theta_y r_y / Ly)`` with cell coordinates."""
    c = geom.site_cells
    return np.exp(1j * (theta_x * c[:, 0] / geom.Lx + theta_y * c[:, 1] / geom.Ly))

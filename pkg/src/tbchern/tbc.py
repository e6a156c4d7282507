"""Chern numbers and Berry curvature from integration over the twist torus."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegeneracyError, GapClosedError, ResolutionError
from .lattice import (BoundaryCondition, DisorderSpec, HaldaneParams, HoppingModel,
                      LatticeGeometry, NN_CELL_DISPS, NNN_POS_DISPS, haldane_hopping,
                      realize, twist_operator)
from .results import InvariantResult
from .spectra import filled_states

GAP_TOL = 1e-10
DET_TOL = 1e-12
# principal-branch safety margin for a single plaquette
MAX_PLAQUETTE_FLUX = 0.5 * np.pi


@dataclass(frozen=True)
class TwistGrid:
    nx: int = 30
    ny: int = 30

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("twist grid needs at least 2 points per direction")

    @property
    def dx(self) -> float:
        return 2 * np.pi / self.nx

    @property
    def dy(self) -> float:
        return 2 * np.pi / self.ny

    def theta(self, a: int, b: int) -> tuple[float, float]:
        return (self.dx * a, self.dy * b)


@dataclass
class TwistFamily:
    """``theta -> H(theta)`` plus the large gauge transformations closing the torus.

    ``wrap_x`` is the diagonal ``W`` with ``H(theta + 2 pi e_x) = W H(theta) W^dag``;
    ``None`` means ``H`` is strictly 2pi-periodic (boundary gauge).
    """

    hamiltonian: Callable[[tuple[float, float]], np.ndarray]
    wrap_x: Optional[np.ndarray] = None
    wrap_y: Optional[np.ndarray] = None

    def __call__(self, theta) -> np.ndarray:
        return self.hamiltonian(theta)


def family_from_model(model: HoppingModel, gauge: str = "uniform") -> TwistFamily:
    geom = model.geometry
    if gauge == "uniform":
        return TwistFamily(lambda th: realize(model, BoundaryCondition.uniform_gauge(*th)),
                           twist_operator(geom, 2 * np.pi, 0.0),
                           twist_operator(geom, 0.0, 2 * np.pi))
    if gauge == "boundary":
        return TwistFamily(lambda th: realize(model, BoundaryCondition.boundary_gauge(*th)))
    raise ValueError(f"gauge must be 'uniform' or 'boundary', got {gauge!r}")


def haldane_family(geom: LatticeGeometry, p: HaldaneParams, gauge: str = "uniform",
                   dis: Optional[DisorderSpec] = None) -> TwistFamily:
    return family_from_model(haldane_hopping(geom, p, dis), gauge)


@dataclass
class CurvatureField:
    """Plaquette-integrated ``Tr F`` on a twist grid (``values[a, b]`` at ``theta_ab``)."""

    values: np.ndarray
    grid: TwistGrid
    method: str

    @property
    def density(self) -> np.ndarray:
        return self.values / (self.grid.dx * self.grid.dy)

    @property
    def total(self) -> float:
        # fixed summation order: row by row
        return float(sum(float(np.sum(row)) for row in self.values))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta_x", "theta_y", "TrF"])
            for a in range(self.grid.nx):
                for b in range(self.grid.ny):
                    tx, ty = self.grid.theta(a, b)
                    w.writerow([f"{tx:.12g}", f"{ty:.12g}", f"{self.density[a, b]:.12g}"])


def _states_on_grid(family: TwistFamily, n: int, grid: TwistGrid, workers: int = 1):
    """Targeted states at every grid point plus the minimum gap."""
    points = [(a, b) for a in range(grid.nx) for b in range(grid.ny)]

    def solve(ab):
        th = grid.theta(*ab)
        ss, gap = filled_states(family(th), lowest_n=n)
        if gap <= GAP_TOL:
            raise GapClosedError(th, gap)
        return ss.psi, gap

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(solve, points))
    else:
        out = [solve(ab) for ab in points]
    psi = np.empty((grid.nx, grid.ny), dtype=object)
    for (a, b), (p, _) in zip(points, out):
        psi[a, b] = p
    return psi, min(g for _, g in out)


def _neighbor(psi, family, grid, a, b, da, db):
    """State block at grid index (a+da, b+db), mapping across the torus seam."""
    a2, b2 = a + da, b + db
    out = psi[a2 % grid.nx, b2 % grid.ny]
    if a2 >= grid.nx and family.wrap_x is not None:
        out = family.wrap_x[:, None] * out
    if b2 >= grid.ny and family.wrap_y is not None:
        out = family.wrap_y[:, None] * out
    return out


def _link(u, v):
    d = np.linalg.det(u.conj().T @ v)
    if abs(d) < DET_TOL:
        raise ResolutionError(f"overlap determinant {abs(d):.2e} vanishes; use a finer twist grid")
    return d


def link_variable_field(family: TwistFamily, n: int, grid: TwistGrid = TwistGrid(),
                        workers: int = 1) -> tuple[CurvatureField, float]:
    """Plaquette fluxes ``Im log prod det(Psi^dag Psi')`` around each grid cell."""
    psi, gap = _states_on_grid(family, n, grid, workers)
    ux = np.empty((grid.nx, grid.ny), dtype=complex)
    uy = np.empty((grid.nx, grid.ny), dtype=complex)
    for a in range(grid.nx):
        for b in range(grid.ny):
            ux[a, b] = _link(psi[a, b], _neighbor(psi, family, grid, a, b, 1, 0))
            uy[a, b] = _link(psi[a, b], _neighbor(psi, family, grid, a, b, 0, 1))
    # U_x(a,b) U_y(a+1,b) / (U_x(a,b+1) U_y(a,b))
    prod = ux * np.roll(uy, -1, axis=0) / (np.roll(ux, -1, axis=1) * uy)
    F = np.angle(prod)
    return CurvatureField(F, grid, "link"), gap


def chern_link_variable(family: TwistFamily, n: int, grid: TwistGrid = TwistGrid(),
                        workers: int = 1) -> tuple[InvariantResult, CurvatureField]:
    field, gap = link_variable_field(family, n, grid, workers)
    max_flux = float(np.max(np.abs(field.values)))
    if max_flux > MAX_PLAQUETTE_FLUX:
        raise ResolutionError(f"plaquette flux {max_flux:.3f} exceeds branch-safety bound "
                              f"{MAX_PLAQUETTE_FLUX:.3f}; refine the {grid.nx}x{grid.ny} grid")
    c = field.total / (2 * np.pi)
    res = InvariantResult(c, "tbc-link", {
        "gap": gap, "max_plaquette_flux": max_flux, "flatness": flatness(field),
        "grid": (grid.nx, grid.ny)})
    return res, field


def _projector_at(family, n, theta):
    ss, gap = filled_states(family(theta), lowest_n=n)
    if gap <= GAP_TOL:
        raise GapClosedError(theta, gap)
    return ss.psi @ ss.psi.conj().T


def _trace_p_commutator(P, A, B) -> complex:
    # Tr(P [A, B]) without forming the N x N product P [A, B]
    PA, PB = P @ A, P @ B
    return np.sum(PA * B.T) - np.sum(PB * A.T)


def berry_curvature_fd(family: TwistFamily, n: int, theta, delta: float,
                       delta_y: Optional[float] = None, swap: bool = False) -> float:
    """Forward-difference ``Tr F(theta)`` from projector derivatives.

    ``swap=True`` exchanges the roles of the x and y differences (flips the sign).
    """
    dy = delta if delta_y is None else delta_y
    tx, ty = theta
    P = _projector_at(family, n, (tx, ty))
    Px = _projector_at(family, n, (tx + delta, ty))
    Py = _projector_at(family, n, (tx, ty + dy))
    A, B = (Px - P) / delta, (Py - P) / dy
    if swap:
        A, B = B, A
    tr = _trace_p_commutator(P, A, B) / 1j
    _check_real(tr, scale=np.linalg.norm(A) * np.linalg.norm(B))
    return float(tr.real)


def _check_real(z, scale=1.0, tol=1e-10):
    from .errors import ConsistencyError
    if abs(z.imag) > tol * max(1.0, scale):
        raise ConsistencyError(f"imaginary residue {abs(z.imag):.2e} in Berry curvature")


def finite_difference_field(family: TwistFamily, n: int,
                            grid: TwistGrid = TwistGrid(), workers: int = 1) -> CurvatureField:
    psi, _ = _states_on_grid(family, n, grid, workers)
    F = np.empty((grid.nx, grid.ny))
    for a in range(grid.nx):
        for b in range(grid.ny):
            p0 = psi[a, b]
            px = _neighbor(psi, family, grid, a, b, 1, 0)
            py = _neighbor(psi, family, grid, a, b, 0, 1)
            P, Px, Py = (v @ v.conj().T for v in (p0, px, py))
            A, B = (Px - P) / grid.dx, (Py - P) / grid.dy
            tr = _trace_p_commutator(P, A, B) / 1j
            _check_real(tr, scale=np.linalg.norm(A) * np.linalg.norm(B))
            F[a, b] = tr.real * grid.dx * grid.dy
    return CurvatureField(F, grid, "fd")


def chern_fd(family: TwistFamily, n: int, grid: TwistGrid = TwistGrid(),
             workers: int = 1) -> tuple[InvariantResult, CurvatureField]:
    field = finite_difference_field(family, n, grid, workers)
    c = field.total / (2 * np.pi)
    res = InvariantResult(c, "tbc-fd", {"deviation": abs(c - round(c)),
                                        "flatness": flatness(field),
                                        "grid": (grid.nx, grid.ny)})
    return res, field


def flatness(curv: CurvatureField) -> float:
    d = curv.density
    return float(d.max() - d.min())


def wilson_loop_berry_phase(family: TwistFamily, n: int, theta_x: float,
                            position_unitary_y: np.ndarray) -> float:
    """Principal ``Im log det(Psi^dag U^y_2pi Psi)`` at twist ``(theta_x, 0)``."""
    ss, gap = filled_states(family((theta_x, 0.0)), lowest_n=n)
    if gap <= GAP_TOL:
        raise GapClosedError((theta_x, 0.0), gap)
    psi = ss.psi
    d = np.linalg.det(psi.conj().T @ (position_unitary_y[:, None] * psi))
    if abs(d) < DET_TOL:
        raise ResolutionError(f"projected position determinant {abs(d):.2e} vanishes "
                              "(gap closed or states delocalized)")
    return float(np.angle(d))


def berry_phase_winding(family: TwistFamily, n: int, position_unitary_y: np.ndarray,
                        n_theta: int = 30) -> tuple[float, np.ndarray]:
    """Total winding of the y Berry phase over ``theta_x in [0, 2 pi)`` and the sampled phases."""
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    phases = np.array([wilson_loop_berry_phase(family, n, t, position_unitary_y) for t in thetas])
    # closing step: theta_x = 2pi is gauge-equivalent to 0
    steps = np.angle(np.exp(1j * np.diff(np.append(phases, phases[0]))))
    return float(np.sum(steps) / (2 * np.pi)), phases


# --------------------------------------------------------------------------
# momentum-space oracle for the clean Haldane model
# --------------------------------------------------------------------------

def haldane_bloch(p: HaldaneParams, k: np.ndarray) -> np.ndarray:
    """2x2 Bloch Hamiltonians ``H(k) = sum_d t(d) exp(-i k.d)`` for ``k`` of shape (..., 2)."""
    k = np.asarray(k, dtype=float)
    H = np.zeros(k.shape[:-1] + (2, 2), dtype=complex)
    # A -> B hops with cell displacement d, amplitude -t1
    hab = sum(-p.t1 * np.exp(-1j * (k @ d)) for d in NN_CELL_DISPS)
    H[..., 1, 0] = hab
    H[..., 0, 1] = np.conj(hab)
    for sub in (0, 1):
        diag = 0.5 * p.Delta0 * (1 if sub == 0 else -1)
        for d in NNN_POS_DISPS[sub]:
            hop = -p.t2 * np.exp(1j * p.Phi) * np.exp(-1j * (k @ d))
            diag = diag + hop + np.conj(hop)
        H[..., sub, sub] = diag
    return H


def momentum_chern_oracle(p: HaldaneParams, kgrid: int = 60) -> InvariantResult:
    """Lower-band Chern number on a ``kgrid x kgrid`` Brillouin-zone mesh (link variables)."""
    ks = 2 * np.pi * np.arange(kgrid) / kgrid
    K = np.stack(np.meshgrid(ks, ks, indexing="ij"), axis=-1)
    w, v = np.linalg.eigh(haldane_bloch(p, K))
    gap = float(np.min(w[..., 1] - w[..., 0]))
    if gap <= GAP_TOL:
        raise DegeneracyError(f"bands touch on the {kgrid}x{kgrid} mesh (gap {gap:.2e})")
    u = v[..., 0]
    ux = np.sum(u.conj() * np.roll(u, -1, axis=0), axis=-1)
    uy = np.sum(u.conj() * np.roll(u, -1, axis=1), axis=-1)
    F = np.angle(ux * np.roll(uy, -1, axis=0) / (np.roll(ux, -1, axis=1) * uy))
    c = float(np.sum(F) / (2 * np.pi))
    return InvariantResult(c, "oracle", {"gap": gap, "kgrid": kgrid})


def haldane_boundary_delta(p: HaldaneParams) -> float:
    """Analytic Haldane critical bias ``|Delta0| = 6 sqrt(3) t2 |sin Phi|``."""
    return 6 * np.sqrt(3) * abs(p.t2 * np.sin(p.Phi))

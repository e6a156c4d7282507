"""Real-space Chern numbers: non-commutative formula and Bott index.

Both routes work from one diagonalization at zero twist.  Position enters only
through the diagonal twist unitaries ``exp(2 pi i r_j / L_j)``; conjugating the
projector by them is done element-wise, ``(U P U^dag)_ab = u_a conj(u_b) P_ab``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BranchError, ConsistencyError, QuasiUnitarityError
from .lattice import LatticeGeometry
from .results import InvariantResult
from .spectra import StateSet

RESIDUE_TOL = 1e-9
MIN_SINGULAR = 0.1
BRANCH_TOL = 1e-6


@dataclass(frozen=True)
class PositionOperators:
    """Diagonal cell coordinates and the lengths they are normalized by.

    With a truncation ``margin`` the coordinates are measured from the start of
    the window ``[margin, L - margin)`` and are zero outside it, so
    ``exp(2 pi i r / L_eff)`` winds once across the window and is 1 on the frame.
    """

    rx: np.ndarray
    ry: np.ndarray
    Lx: int
    Ly: int
    margin: int = 0

    def unitary(self, direction: str) -> np.ndarray:
        if direction == "x":
            return np.exp(2j * np.pi * self.rx / self.Lx)
        if direction == "y":
            return np.exp(2j * np.pi * self.ry / self.Ly)
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def position_operators(geom: LatticeGeometry, margin: int = 0) -> PositionOperators:
    c = geom.site_cells
    if margin == 0:
        return PositionOperators(c[:, 0].astype(float), c[:, 1].astype(float), geom.Lx, geom.Ly)
    lx, ly = geom.Lx - 2 * margin, geom.Ly - 2 * margin
    if margin < 0 or lx < 1 or ly < 1:
        raise ValueError(f"margin {margin} leaves no window in a {geom.Lx}x{geom.Ly} lattice")

    def trunc(r, L):
        inside = (r >= margin) & (r < L - margin)
        return np.where(inside, r - margin, 0).astype(float)

    return PositionOperators(trunc(c[:, 0], geom.Lx), trunc(c[:, 1], geom.Ly), lx, ly, margin)


def twist_unitary(geom: LatticeGeometry, direction: str,
                  pos: Optional[PositionOperators] = None) -> np.ndarray:
    """Diagonal of ``U^j_{2pi} = exp(2 pi i r_j / L_j)``."""
    pos = position_operators(geom) if pos is None else pos
    return pos.unitary(direction)


@dataclass(frozen=True)
class FDCoefficients:
    c: np.ndarray

    @property
    def order(self) -> int:
        return len(self.c)


def fd_coefficients(Q: int) -> FDCoefficients:
    """Weights ``c_n`` with ``sum c_n n = 1`` and ``sum c_n n^(2m-1) = 0`` for ``m = 2..Q``."""
    if Q < 1:
        raise ValueError("order Q must be >= 1")
    if Q > 8:
        warnings.warn(f"odd-power Vandermonde system for Q={Q} is badly conditioned",
                      RuntimeWarning, stacklevel=2)
    n = np.arange(1, Q + 1, dtype=float)
    V = n[None, :] ** (2 * np.arange(1, Q + 1) - 1)[:, None]
    rhs = np.zeros(Q)
    rhs[0] = 1.0
    return FDCoefficients(np.linalg.solve(V, rhs))


# --------------------------------------------------------------------------
# non-commutative Chern number
# --------------------------------------------------------------------------

def _phase_differences(u: np.ndarray) -> np.ndarray:
    """``arg(u_a conj(u_b))`` in (-pi, pi), with the antipodal value pi mapped to 0."""
    phi = np.angle(u[:, None] * u.conj()[None, :])
    phi[np.isclose(np.abs(phi), np.pi, rtol=0, atol=1e-12)] = 0.0
    return phi


def commutator_derivative(P: np.ndarray, u: np.ndarray,
                          coeffs: Optional[FDCoefficients] = None) -> np.ndarray:
    """Approximate ``2 pi dP/dtheta`` from conjugations of ``P`` by the diagonal unitary ``u``.

    Without ``coeffs`` this is ``(2 pi i / L) [r, P]`` with coordinate differences
    taken on the ring of circumference ``L`` (minimum image).  With coefficients it is
    ``sum_n c_n/2 (U^n P U^-n - U^-n P U^n)``.
    """
    if coeffs is None:
        return 1j * _phase_differences(u) * P
    w = u[:, None] * u.conj()[None, :]
    s = np.zeros(w.shape)
    wn = np.ones_like(w)
    for c in coeffs.c:
        wn = wn * w
        s += c * wn.imag
    return 1j * s * P


def _chern_from_derivatives(P, Dx, Dy, scale, method, extra=None, cell_mask=None):
    if cell_mask is None:
        PDx, PDy = P @ Dx, P @ Dy
        tr = np.sum(PDx * Dy.T) - np.sum(PDy * Dx.T)
    else:
        M = P @ (Dx @ Dy - Dy @ Dx)
        tr = np.sum(np.diag(M)[cell_mask])
    val = tr / (2j * np.pi) * scale
    residue = abs(val.imag)
    if cell_mask is None and residue > RESIDUE_TOL * max(1.0, abs(val)):
        raise ConsistencyError(f"imaginary residue {residue:.2e} in non-commutative Chern number")
    diag = {"residue": float(residue)}
    diag.update(extra or {})
    return InvariantResult(float(val.real), method, diag)


def noncommutative_chern(P: np.ndarray, pos: PositionOperators,
                         cell: Optional[tuple[int, int]] = None) -> InvariantResult:
    """``(2 pi i / Lx Ly) Tr(P [[r_x, P], [r_y, P]])`` averaged over all cells.

    Passing ``cell=(cx, cy)`` traces only that cell's orbitals (scaled by the
    number of cells), the single-cell variant for clean systems.
    """
    Dx = commutator_derivative(P, pos.unitary("x"))
    Dy = commutator_derivative(P, pos.unitary("y"))
    mask = None
    scale = 1.0
    if cell is not None:
        mask = (pos.rx == cell[0]) & (pos.ry == cell[1])
        scale = pos.Lx * pos.Ly
    return _chern_from_derivatives(P, Dx, Dy, scale, "noncomm", cell_mask=mask)


def noncommutative_chern_higher_order(P: np.ndarray, ux: np.ndarray, uy: np.ndarray,
                                      coeffs: FDCoefficients) -> InvariantResult:
    """``Tr(P [D_x, D_y]) / (2 pi i)`` with order-Q finite-difference derivatives."""
    Dx = commutator_derivative(P, ux, coeffs)
    Dy = commutator_derivative(P, uy, coeffs)
    return _chern_from_derivatives(P, Dx, Dy, 1.0, f"noncomm-hi(Q={coeffs.order})",
                                   {"Q": coeffs.order})


# --------------------------------------------------------------------------
# Bott index
# --------------------------------------------------------------------------

def projected_unitary(psi: np.ndarray, u: np.ndarray) -> np.ndarray:
    return psi.conj().T @ (u[:, None] * psi)


def unitarize(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest unitary ``U V^dag`` from the SVD ``M = U S V^dag``, plus the singular values."""
    U, s, Vh = np.linalg.svd(M)
    return U @ Vh, s


def log_trace_phase(W: np.ndarray) -> tuple[float, float]:
    """``Im Tr log W`` for unitary ``W`` with eigenphases in (-pi, pi]; also the max |phase|."""
    phases = np.angle(np.linalg.eigvals(W))
    top = float(np.max(np.abs(phases))) if phases.size else 0.0
    if np.pi - top < BRANCH_TOL:
        raise BranchError(f"eigenphase {top:.8f} within {BRANCH_TOL:g} of the log branch cut")
    return float(np.sum(phases)), top


def bott_from_unitaries(Mx: np.ndarray, My: np.ndarray, ordering: str = "default",
                        min_singular: float = MIN_SINGULAR, quantum: float = 1.0,
                        method: str = "bott") -> InvariantResult:
    """Bott index of two projected position matrices.

    ``ordering='default'`` uses ``Uy^dag Ux Uy Ux^dag``; ``'loring'`` uses
    ``Ux Uy Ux^dag Uy^dag``.  ``quantum`` is the value spacing the result must
    sit on (1 for Chern numbers, 1/2 for spin Chern numbers).
    """
    Ux, sx = unitarize(Mx)
    Uy, sy = unitarize(My)
    s = np.concatenate([sx, sy])
    smin = float(s.min()) if s.size else 1.0
    if smin <= min_singular:
        raise QuasiUnitarityError(f"smallest singular value {smin:.3e} <= {min_singular}; "
                                  "targeted states not gapped/localized enough")
    if ordering == "default":
        W = Uy.conj().T @ Ux @ Uy @ Ux.conj().T
    elif ordering == "loring":
        W = Ux @ Uy @ Ux.conj().T @ Uy.conj().T
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    total, top = log_trace_phase(W)
    val = total / (2 * np.pi) * quantum
    dev = abs(val / quantum - round(val / quantum))
    if dev > 1e-8:
        raise ConsistencyError(f"Bott index {val} not quantized (deviation {dev:.2e})")
    val = round(val / quantum) * quantum
    return InvariantResult(float(val), method, {
        "min_singular": smin,
        "max_sigma_dev": float(np.max(np.abs(s - 1))) if s.size else 0.0,
        "max_eigenphase": top,
        "quantization_deviation": dev,
    })


def bott_index(ss: StateSet, ux: np.ndarray, uy: np.ndarray, ordering: str = "default",
               min_singular: float = MIN_SINGULAR) -> InvariantResult:
    psi = ss.psi if isinstance(ss, StateSet) else ss
    return bott_from_unitaries(projected_unitary(psi, ux), projected_unitary(psi, uy),
                               ordering, min_singular)


def quasi_unitarity(ss: StateSet, u: np.ndarray) -> float:
    """``max |sigma_k - 1|`` of the projected position matrix ``Psi^dag U Psi``."""
    psi = ss.psi if isinstance(ss, StateSet) else ss
    s = np.linalg.svd(projected_unitary(psi, u), compute_uv=False)
    return float(np.max(np.abs(s - 1)))

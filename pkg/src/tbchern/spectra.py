"""Dense eigendecomposition, targeted-state selection and projectors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DegeneracyError, DiagonalizationError

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class StateSet:
    """Column-orthonormal ``N x count`` matrix of targeted eigenvectors."""

    psi: np.ndarray
    policy: str

    @property
    def count(self) -> int:
        return self.psi.shape[1]


def eigendecompose(H: np.ndarray) -> EigenSystem:
    try:
        w, v = scipy.linalg.eigh(H, driver="evr", check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise DiagonalizationError(
            f"eigendecomposition of {H.shape[0]}x{H.shape[1]} matrix failed: {exc}") from exc
    return EigenSystem(w, v)


def select_targeted(es: EigenSystem, lowest_n: Optional[int] = None,
                    below_energy: Optional[float] = None) -> StateSet:
    """Pick the ``lowest_n`` states, or every state with energy below ``below_energy``."""
    if (lowest_n is None) == (below_energy is None):
        raise ValueError("give exactly one of lowest_n / below_energy")
    if lowest_n is not None:
        if not 1 <= lowest_n <= es.size:
            raise ValueError(f"lowest_n must be in [1, {es.size}], got {lowest_n}")
        return StateSet(es.eigenvectors[:, :lowest_n], f"lowest_n({lowest_n})")
    ev = es.eigenvalues
    if np.any(np.abs(ev - below_energy) < DEGENERACY_TOL):
        raise DegeneracyError(f"eigenvalue within {DEGENERACY_TOL:g} of E_F={below_energy:g}; "
                              "filling is ambiguous")
    n = int(np.count_nonzero(ev < below_energy))
    if n == 0:
        raise ValueError(f"no states below E_F={below_energy:g}")
    return StateSet(es.eigenvectors[:, :n], f"below_energy({below_energy:g})")


def projector(ss: StateSet) -> np.ndarray:
    psi = ss.psi if isinstance(ss, StateSet) else ss
    return psi @ psi.conj().T


def spectral_gap(es: EigenSystem, count: int) -> float:
    if not 1 <= count < es.size:
        raise ValueError(f"count must satisfy 1 <= count < {es.size}")
    return float(es.eigenvalues[count] - es.eigenvalues[count - 1])


def filled_states(H: np.ndarray, lowest_n: Optional[int] = None,
                  below_energy: Optional[float] = None) -> tuple[StateSet, float]:
    """Diagonalize ``H`` and return the targeted states together with their gap.

    The gap is ``inf`` when every state is targeted.
    """
    n = len(H)
    if lowest_n is not None and 1 <= lowest_n < n:
        # only the targeted states and the first one above them are needed
        try:
            w, v = scipy.linalg.eigh(H, subset_by_index=[0, lowest_n], driver="evr")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
            raise DiagonalizationError(f"eigendecomposition of {n}x{n} matrix failed: {exc}") from exc
        return (StateSet(v[:, :lowest_n], f"lowest_n({lowest_n})"),
                float(w[lowest_n] - w[lowest_n - 1]))
    es = eigendecompose(H)
    ss = select_targeted(es, lowest_n=lowest_n, below_energy=below_energy)
    gap = spectral_gap(es, ss.count) if ss.count < es.size else np.inf
    return ss, gap

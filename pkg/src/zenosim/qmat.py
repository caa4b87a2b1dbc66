"""Dense complex linear-algebra kernel for small Hilbert spaces.

Hermitian eigendecomposition, unitary exponentials of Hermitian generators,
application of rank-4 superoperator tensors to density matrices, and the
validity diagnostics (hermiticity, trace, positivity) used throughout the
package.  Everything here is a pure function of ndarrays.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidDensityMatrix, NonHermitianInput

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-9


def hermiticity_defect(m: np.ndarray) -> float:
    """Largest entrywise deviation |m - m†|."""
    return float(np.abs(m - m.conj().T).max())


def require_hermitian(m: np.ndarray, tol: float = HERM_TOL, what: str = "matrix"):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m.view(float))):
        raise NonHermitianInput(f"{what} has non-finite entries")
    defect = hermiticity_defect(m)
    if defect > tol:
        raise NonHermitianInput(f"{what} is not Hermitian: defect {defect:.3e} > {tol:.1e}")
    return m


def herm_eig(h: np.ndarray):
    """Eigendecomposition of a Hermitian matrix.

    Returns (w, u) with w real ascending and h = u @ diag(w) @ u†.
    Raises NonHermitianInput if the input fails the hermiticity check.
    """
    h = require_hermitian(h)
    w, u = np.linalg.eigh(h)
    return w, u


def unitary_exp(h: np.ndarray, angle_scale: float) -> np.ndarray:
    """exp(-1j * angle_scale * h) for Hermitian h, via eigendecomposition."""
    w, u = herm_eig(h)
    return (u * np.exp(-1j * angle_scale * w)) @ u.conj().T


def unitary_exp_stack(hs: np.ndarray, angle_scale: float) -> np.ndarray:
    """exp(-1j * angle_scale * h) for a stack of Hermitian matrices (..., d, d).

    No per-matrix hermiticity check; callers construct the stack from
    already-validated pieces.
    """
    w, u = np.linalg.eigh(hs)
    phases = np.exp(-1j * angle_scale * w)
    return np.einsum("...ij,...j,...lj->...il", u, phases, u.conj())


def apply_super(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply a rank-4 tensor s[p, r, n, m] to rho: rho'_pr = sum_nm s_prnm rho_nm.

    The result is re-hermitized by averaging with its adjoint before return.
    """
    s = np.asarray(s)
    rho = np.asarray(rho, dtype=complex)
    if s.ndim != 4 or len(set(s.shape)) != 1:
        raise DimensionMismatch(f"supertensor must have shape (d,d,d,d), got {s.shape}")
    if rho.shape != s.shape[:2]:
        raise DimensionMismatch(
            f"density matrix shape {rho.shape} does not match tensor dimension {s.shape[0]}"
        )
    out = np.einsum("prnm,nm->pr", s, rho)
    return 0.5 * (out + out.conj().T)


def trace_sum_rule_defect(s: np.ndarray) -> float:
    """Deviation of sum_p s[p,p,n,m] from the identity (trace preservation)."""
    d = s.shape[0]
    return float(np.abs(np.einsum("ppnm->nm", s) - np.eye(d)).max())


def unit_sum_rule_defect(s: np.ndarray) -> float:
    """Deviation of sum_n s[p,r,n,n] from the identity (unitality)."""
    d = s.shape[0]
    return float(np.abs(np.einsum("prnn->pr", s) - np.eye(d)).max())


def check_density_matrix(rho: np.ndarray,
                         herm_tol: float = HERM_TOL,
                         trace_tol: float = TRACE_TOL,
                         eig_floor: float = EIG_FLOOR) -> np.ndarray:
    """Validate a density matrix; returns it as a complex ndarray.

    Checks hermiticity (entrywise), unit trace, and that the smallest
    eigenvalue does not fall below eig_floor.  The floor is slightly
    negative because repeated quadrature-built channels can produce
    harmless negative eigenvalues at rounding scale.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"density matrix must be square, got {rho.shape}")
    defect = hermiticity_defect(rho)
    if defect > herm_tol:
        raise InvalidDensityMatrix(f"hermiticity defect {defect:.3e} > {herm_tol:.1e}")
    tr = rho.trace()
    if abs(tr - 1.0) > trace_tol:
        raise InvalidDensityMatrix(f"trace {tr} deviates from 1 by {abs(tr - 1.0):.3e}")
    wmin = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if wmin < eig_floor:
        raise InvalidDensityMatrix(f"smallest eigenvalue {wmin:.3e} < {eig_floor:.1e}")
    return rho

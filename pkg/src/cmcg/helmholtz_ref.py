"""Frequency-domain reference: A u = b with A = K - w^2 M - i w B on the free DOFs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssembledSystem
from .linalg import FactorizationError, SparseOperator, complex_lu_solve

log = logging.getLogger(__name__)


@dataclass
class HelmholtzSystem:
    A_re: SparseOperator
    A_im: SparseOperator
    b: np.ndarray
    free: np.ndarray
    gD: np.ndarray          # full-length Dirichlet values (zero on free DOFs)
    scale: float = 0.0      # 1-norm of |K| + w^2 |M| + w |B| before cancellation

    def full(self, u_free: np.ndarray) -> np.ndarray:
        u = self.gD.astype(complex).copy()
        u[self.free] = u_free
        return u


def assemble_helmholtz(system: AssembledSystem, lumped: bool = False) -> HelmholtzSystem:
    """Discrete Helmholtz operator with the Dirichlet lifting folded into ``b``."""
    space = system.space
    free, con = space.free, space.constrained
    omega = system.omega
    K = system.K.csr
    if lumped:
        if system.M_lumped is None:
            raise ValueError("lumped mass unavailable for this element")
        M = sp.diags(system.M_lumped).tocsr()
    else:
        M = system.M.csr
    B = sp.diags(system.B).tocsr()
    A_re = (K - omega ** 2 * M).tocsr()
    A_im = (-omega * B).tocsr()
    b = system.loads.total[free].copy()
    gD = system.gD[con]
    if len(con):
        b -= A_re[free][:, con] @ gD + 1j * (A_im[free][:, con] @ gD)
    full_gD = np.zeros(space.ndof, dtype=complex)
    full_gD[con] = gD
    unsigned = (abs(K) + omega ** 2 * abs(M) + omega * abs(B)).tocsr()[free][:, free]
    scale = float(unsigned.sum(axis=0).max()) if len(free) else 0.0
    return HelmholtzSystem(SparseOperator(A_re[free][:, free]), SparseOperator(A_im[free][:, free]),
                           b, free, full_gD, scale)


# scale ||x|| / ||b|| with the uncancelled operator scale; beyond this the solve is meaningless
COND_LIMIT = 1e13


def direct_solve(hs: HelmholtzSystem) -> np.ndarray:
    """Reference solution u_h* as a full DOF vector."""
    try:
        x = complex_lu_solve(hs.A_re, hs.A_im, hs.b)
    except FactorizationError as exc:
        raise FactorizationError(f"{exc}; omega^2 is likely close to a discrete eigenvalue (resonance)") from exc
    bn = np.linalg.norm(hs.b)
    if bn > 0 and hs.scale > 0:
        cond_lb = hs.scale * np.linalg.norm(x) / bn
        if cond_lb > COND_LIMIT:
            raise FactorizationError(f"Helmholtz matrix is numerically singular (condition >= {cond_lb:.1e}); "
                                     "omega^2 is likely a discrete eigenvalue (resonance)")
    return hs.full(x)


def helmholtz_residual(hs: HelmholtzSystem, u_full: np.ndarray) -> float:
    """||A u - b||_2 / ||b||_2 over the free DOFs."""
    u = np.asarray(u_full)[hs.free]
    r = hs.A_re.spmv(u.real) - hs.A_im.spmv(u.imag) - hs.b.real
    r = r + 1j * (hs.A_re.spmv(u.imag) + hs.A_im.spmv(u.real) - hs.b.imag)
    bn = np.linalg.norm(hs.b)
    if bn == 0.0:
        return float(np.linalg.norm(r))
    return float(np.linalg.norm(r) / bn)


def resonance_check(system: AssembledSystem, n_eigs: int = 3, rel_tol: float = 0.01) -> float | None:
    """Nearest generalized eigenvalue of (K, M) to w^2 on the free DOFs if it lies
    within ``rel_tol`` relative distance, otherwise None.  Only meaningful when
    the boundary carries no absorption."""
    free = system.space.free
    K = system.K.csr[free][:, free]
    M = system.M.csr[free][:, free]
    w2 = system.omega ** 2
    n = K.shape[0]
    try:
        if n <= 400:
            import scipy.linalg as sla
            vals = sla.eigh(K.toarray(), M.toarray(), eigvals_only=True)
        else:
            vals = spla.eigsh(K.tocsc(), k=min(n_eigs, n - 2), M=M.tocsc(), sigma=w2,
                              which="LM", return_eigenvectors=False)
    except Exception as exc:  # shift exactly at an eigenvalue makes the factorization fail
        log.warning("resonance check failed (%s); treating omega^2 as resonant", exc)
        return w2
    near = vals[np.argmin(np.abs(vals - w2))]
    if abs(near - w2) <= rel_tol * w2:
        return float(near)
    return None

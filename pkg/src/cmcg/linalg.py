"""Sparse symmetric operators, diagonal-preconditioned CG and the complex direct solve."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

_THREADS = max(1, int(os.environ.get("CMCG_THREADS", "1")))
_POOL: ThreadPoolExecutor | None = None


def set_threads(n: int) -> None:
    """Number of row blocks used by :meth:`SparseOperator.spmv`."""
    global _THREADS, _POOL
    n = max(1, int(n))
    if n != _THREADS and _POOL is not None:
        _POOL.shutdown()
        _POOL = None
    _THREADS = n


def get_threads() -> int:
    return _THREADS


def _pool() -> ThreadPoolExecutor:
    global _POOL
    if _POOL is None:
        _POOL = ThreadPoolExecutor(max_workers=_THREADS)
    return _POOL


class NotSPDError(RuntimeError):
    pass


class FactorizationError(RuntimeError):
    pass


class SparseOperator:
    """Real sparse operator in CSR layout.

    Rows are computed independently, each with a fixed left-to-right summation
    order, so the product is bitwise identical for any thread count.
    """

    def __init__(self, matrix, check_symmetric: bool = False):
        A = sp.csr_matrix(matrix, dtype=float)
        A.eliminate_zeros()
        A.sort_indices()
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"operator must be square, got {A.shape}")
        if check_symmetric and (A != A.T).nnz:
            raise ValueError("operator is not exactly symmetric")
        self.csr = A
        self._blocks: dict[int, list[sp.csr_matrix]] = {}

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def shape(self):
        return self.csr.shape

    @classmethod
    def diagonal(cls, d) -> "SparseOperator":
        return cls(sp.diags(np.asarray(d, dtype=float)))

    @classmethod
    def zero(cls, n: int) -> "SparseOperator":
        return cls(sp.csr_matrix((n, n)))

    def diag(self) -> np.ndarray:
        return self.csr.diagonal()

    def is_diagonal(self) -> bool:
        A = self.csr.tocoo()
        return bool(np.all(A.row == A.col))

    def _row_blocks(self, nt: int) -> list[sp.csr_matrix]:
        if nt not in self._blocks:
            cuts = np.linspace(0, self.n, nt + 1).astype(int)
            self._blocks[nt] = [self.csr[a:b] for a, b in zip(cuts[:-1], cuts[1:])]
        return self._blocks[nt]

    def spmv(self, x: np.ndarray, threads: int | None = None) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: operator {self.n}, vector {x.shape[0]}")
        nt = min(threads or _THREADS, max(1, self.n // 256))
        if nt <= 1:
            return self.csr @ x
        blocks = self._row_blocks(nt)
        parts = list(_pool().map(lambda B: B @ x, blocks))
        return np.concatenate(parts)

    __matmul__ = spmv


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    energy_errors: list[float] = field(default_factory=list)


def pcg(A, b: np.ndarray, precond: np.ndarray | None = None, rtol: float = 1e-10, maxit: int | None = None,
        x0: np.ndarray | None = None, project_mean: np.ndarray | None = None,
        raise_on_maxit: bool = False) -> PCGResult:
    """Conjugate gradients with a diagonal preconditioner.

    ``precond`` holds the diagonal to divide by (usually ``A.diag()``).
    With ``project_mean`` (a weight vector ``w``) the operator may be singular
    with the constants as null space: the right-hand side is made consistent
    and the returned solution satisfies ``w.x = 0``.
    Stops when ``||b - A x||_2 <= rtol ||b||_2``.
    """
    if not 0 < rtol < 1:
        raise ValueError("rtol must lie in (0, 1)")
    matvec = A.spmv if isinstance(A, SparseOperator) else (lambda v: A @ v)
    n = b.shape[0]
    maxit = maxit or 10 * n + 10
    inv_d = None if precond is None else 1.0 / np.asarray(precond, dtype=float)

    if project_mean is not None:
        # consistent singular system: keep b and A p orthogonal to the constants
        ones = np.ones(n)

        def proj_rhs(v):
            return v - (ones @ v) / n * ones
        b = proj_rhs(b)
    else:
        proj_rhs = None

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    bnorm = float(np.sqrt(b @ b))
    res = [float(np.sqrt(r @ r))]
    if bnorm == 0.0:
        return PCGResult(np.zeros(n), 0, True, res)
    z = r * inv_d if inv_d is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)
    energy = []
    for it in range(1, maxit + 1):
        Ap = matvec(p)
        if proj_rhs is not None:
            Ap = proj_rhs(Ap)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NotSPDError(f"non-SPD operator detected in pcg: p^T A p = {pAp:.3e} at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        energy.append(rz * rz / pAp)
        rn = float(np.sqrt(r @ r))
        res.append(rn)
        if rn <= rtol * bnorm:
            return PCGResult(_remove_mean(x, project_mean), it, True, res, energy)
        z = r * inv_d if inv_d is not None else r.copy()
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    msg = f"pcg reached maxit={maxit} with relative residual {res[-1] / bnorm:.3e}"
    if raise_on_maxit:
        raise RuntimeError(msg + f"; residual history tail {res[-5:]}")
    log.warning(msg)
    return PCGResult(_remove_mean(x, project_mean), maxit, False, res, energy)


def _remove_mean(x: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    if w is None:
        return x
    w = np.asarray(w, dtype=float)
    return x - (w @ x) / w.sum()


def complex_lu_solve(A_re, A_im, b: np.ndarray, check: bool = True) -> np.ndarray:
    """Solve ``(A_re + i A_im) x = b`` through the real block system
    ``[[A_re, -A_im], [A_im, A_re]]`` with a sparse LU factorization."""
    Ar = A_re.csr if isinstance(A_re, SparseOperator) else sp.csr_matrix(A_re)
    Ai = A_im.csr if isinstance(A_im, SparseOperator) else sp.csr_matrix(A_im)
    b = np.asarray(b, dtype=complex)
    n = Ar.shape[0]
    if b.shape[0] != n:
        raise ValueError("dimension mismatch")
    big = sp.bmat([[Ar, -Ai], [Ai, Ar]], format="csc")
    try:
        lu = spla.splu(big)
    except RuntimeError as exc:
        raise FactorizationError(f"sparse LU failed ({exc}); the matrix is singular") from exc
    sol = lu.solve(np.concatenate([b.real, b.imag]))
    x = sol[:n] + 1j * sol[n:]
    if not np.all(np.isfinite(x)):
        raise FactorizationError("sparse LU produced non-finite values; the matrix is singular")
    if check:
        r = (Ar @ x + 1j * (Ai @ x)) - b
        bn = np.linalg.norm(b)
        if bn > 0 and np.linalg.norm(r) > 1e-10 * bn:
            raise FactorizationError(f"complex solve residual {np.linalg.norm(r) / bn:.2e} exceeds 1e-10")
    return x


def power_max_eig(apply, n: int, iters: int = 30, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite map by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = apply(x)
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
    return max(lam, float(x @ apply(x)))

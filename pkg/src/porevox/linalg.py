"""Sparse systems and a Jacobi-preconditioned BiCGSTAB solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

# below this ||b|| the right-hand side is treated as zero
ABS_FLOOR = 1e-30
_TINY = 1e-300
ILU_DROP_TOL = 1e-5
ILU_FILL = 10


class LinearSolverError(RuntimeError):
    pass


class BreakdownError(LinearSolverError):
    pass


@dataclass(eq=False)
class SparseSystem:
    """CSR matrix plus right-hand side.

    Column indices are sorted within rows and every diagonal entry is stored
    (possibly as an explicit zero).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got {m.shape}")
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape != (m.shape[0],):
            raise ValueError(f"rhs length {self.rhs.shape} does not match matrix size {m.shape[0]}")

    @classmethod
    def from_triplets(cls, rows, cols, vals, n: int, rhs=None) -> "SparseSystem":
        rows = np.concatenate([np.asarray(rows, dtype=np.int64), np.arange(n)])
        cols = np.concatenate([np.asarray(cols, dtype=np.int64), np.arange(n)])
        vals = np.concatenate([np.asarray(vals, dtype=float), np.zeros(n)])
        m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(m, np.zeros(n) if rhs is None else rhs)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def with_rhs(self, rhs) -> "SparseSystem":
        return SparseSystem(self.matrix, rhs)


def matvec(system: SparseSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n,):
        raise ValueError(f"vector of shape {x.shape} does not match system size {system.n}")
    return system.matrix @ x


@dataclass
class SolverReport:
    iterations: int
    residual: float   # ||b - A x||_2, recomputed from the returned x
    rhs_norm: float
    converged: bool
    restarts: int = 0

    @property
    def relative_residual(self) -> float:
        return self.residual / max(self.rhs_norm, ABS_FLOOR)


def make_preconditioner(matrix, kind: str | None = "jacobi"):
    """Approximate inverse of ``matrix`` as a callable.

    ``"jacobi"`` scales by the inverse diagonal (zero diagonals left alone),
    ``"ilu"`` applies an incomplete LU factorisation, ``None``/``"none"`` is
    the identity.
    """
    if kind == "jacobi":
        d = matrix.diagonal()
        inv_diag = np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), 1.0)
        return lambda v: inv_diag * v
    if kind in (None, "none"):
        return lambda v: v
    if kind == "ilu":
        try:
            ilu = spla.spilu(sp.csc_matrix(matrix), drop_tol=ILU_DROP_TOL, fill_factor=ILU_FILL)
        except RuntimeError as exc:  # exactly singular pivot
            raise LinearSolverError(f"incomplete LU failed: {exc}") from exc
        return ilu.solve
    raise ValueError(f"unknown preconditioner {kind!r}")


def bicgstab(system: SparseSystem, x0=None, tol: float = 1e-10, max_iter: int = 1000,
             preconditioner="jacobi") -> tuple[np.ndarray, SolverReport]:
    """Solve ``A x = b`` by right-preconditioned BiCGSTAB.

    Convergence means ``||b - A x||_2 <= tol * ||b||_2``, checked on the true
    residual before returning.  A breakdown (rho or omega numerically zero)
    restarts once from the current iterate; a second breakdown raises
    BreakdownError.  Exhausting ``max_iter`` returns a non-converged report.

    ``preconditioner`` is a name understood by :func:`make_preconditioner`
    or a callable applying the approximate inverse to a vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = system.matrix
    b = system.rhs
    n = system.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x0 of shape {x.shape} does not match system size {n}")

    prec = preconditioner if callable(preconditioner) else make_preconditioner(A, preconditioner)

    bnorm = float(np.linalg.norm(b))
    if bnorm <= ABS_FLOOR:
        x = np.zeros(n)
        return x, SolverReport(0, 0.0, bnorm, True)
    target = tol * bnorm

    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    it = 0
    restarts = 0
    breakdowns = 0
    while rnorm > target and it < max_iter:
        # (re)start the Krylov recurrence from the current true residual
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        broke = False
        while it < max_iter:
            rho_new = float(r_hat @ r)
            if abs(rho_new) < _TINY or not np.isfinite(rho_new):
                broke = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            p_hat = prec(p)
            v = A @ p_hat
            denom = float(r_hat @ v)
            if abs(denom) < _TINY:
                broke = True
                break
            alpha = rho_new / denom
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= target:
                x += alpha * p_hat
                break
            s_hat = prec(s)
            t = A @ s_hat
            tt = float(t @ t)
            omega = float(t @ s) / tt if tt > 0 else 0.0
            x += alpha * p_hat + omega * s_hat
            if abs(omega) < _TINY:
                broke = True
                break
            r = s - omega * t
            rho = rho_new
            if np.linalg.norm(r) <= target:
                break
        if broke:
            breakdowns += 1
            if breakdowns > 1:
                raise BreakdownError(f"BiCGSTAB breakdown after {it} iterations (restart already used)")
            log.debug("BiCGSTAB breakdown at iteration %d, restarting", it)
        r = b - A @ x
        new_norm = float(np.linalg.norm(r))
        stalled = not broke and new_norm > 0.9 * rnorm
        rnorm = new_norm
        if rnorm > target:
            if stalled:
                break  # recursive residual drifted from the true one at round-off level
            restarts += 1

    return x, SolverReport(it, rnorm, bnorm, rnorm <= target, restarts)


def write_matrix_market(system: SparseSystem, path):
    """Matrix Market coordinate dump of the matrix; rhs goes to ``<path>.rhs``."""
    m = system.matrix.tocoo()
    lines = ["%%MatrixMarket matrix coordinate real general", f"{m.shape[0]} {m.shape[1]} {m.nnz}"]
    lines += [f"{i + 1} {j + 1} {v!r}" for i, j, v in zip(m.row.tolist(), m.col.tolist(), m.data.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
    rhs_lines = ["%%MatrixMarket matrix array real general", f"{system.n} 1"]
    rhs_lines += [repr(v) for v in system.rhs.tolist()]
    Path(str(path) + ".rhs").write_text("\n".join(rhs_lines) + "\n")

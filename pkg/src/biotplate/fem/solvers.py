"""Linear solvers: Jacobi-preconditioned CG, sparse saddle systems, and a small
dense symmetric eigendecomposition."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import CheckFailure, IndefiniteDetected, NotConverged, SingularSystem


def solve_spd(A, b: np.ndarray, tol: float = 1e-10, maxiter: int | None = None,
              x0: np.ndarray | None = None) -> np.ndarray:
    """Conjugate gradients with diagonal (Jacobi) preconditioning.

    Stops when ``||b - A x|| <= tol * ||b||``.  A non-positive curvature
    ``p^T A p <= 0`` raises :class:`IndefiniteDetected`; exceeding the
    iteration cap (default ``10 * n``) raises :class:`NotConverged`.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    if maxiter is None:
        maxiter = 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0):
        raise IndefiniteDetected("non-positive diagonal entry")
    dinv = 1.0 / d
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0.0:
            raise IndefiniteDetected(f"p^T A p = {curv:.3e}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x
    raise NotConverged(f"CG reached {maxiter} iterations, "
                       f"residual {np.linalg.norm(r) / bnorm:.3e}")


def bordered(A, C: np.ndarray | sp.spmatrix | None) -> sp.csr_matrix:
    """Symmetric KKT matrix ``[[A, C], [C^T, 0]]``; ``C`` columns are constraints."""
    if C is None or C.shape[1] == 0:
        return sp.csr_matrix(A)
    C = sp.csr_matrix(C)
    m = C.shape[1]
    return sp.bmat([[A, C], [C.T, sp.csr_matrix((m, m))]], format="csr")


def equilibrate(K) -> tuple[sp.csc_matrix, np.ndarray]:
    """Symmetric diagonal scaling ``S K S`` with unit-size row maxima."""
    K = sp.csr_matrix(K)
    m = np.sqrt(abs(K).max(axis=1).toarray().ravel())
    m[m == 0.0] = 1.0
    s = 1.0 / m
    S = sp.diags(s)
    return sp.csc_matrix(S @ K @ S), s


def solve_saddle(K, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Direct sparse LU solve of a (symmetric indefinite) KKT system."""
    return SaddleFactor(K, tol).solve(rhs)


def check_residual(K, x: np.ndarray, rhs: np.ndarray, tol: float) -> float:
    """Relative residual of ``K x = rhs``; raises if above ``tol`` or not finite."""
    bn = np.linalg.norm(rhs)
    res = np.linalg.norm(K @ x - rhs) / (bn if bn > 0 else 1.0)
    if not np.isfinite(res) or not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution (singular system)")
    if res > tol:
        raise NotConverged(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return float(res)


def backward_error(K, x: np.ndarray, rhs: np.ndarray, tol: float) -> float:
    """Normwise backward error ``|r| / (|K| |x| + |b|)`` in the max norm.

    Unlike ``|r| / |b|`` this does not penalise a solution that is accurate
    to rounding but small compared with the individual terms of ``K x``.
    """
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution (singular system)")
    knorm = float(abs(K).sum(axis=1).max())
    denom = knorm * np.abs(x).max(initial=0.0) + np.abs(rhs).max(initial=0.0)
    err = float(np.abs(K @ x - rhs).max(initial=0.0) / (denom if denom > 0 else 1.0))
    if err > tol:
        raise NotConverged(f"backward error {err:.3e} exceeds {tol:.1e}")
    return err


class SaddleFactor:
    """Reusable LU factorisation of an equilibrated system.

    Accuracy is certified by the normwise backward error on the equilibrated
    system, after a few steps of iterative refinement when needed.
    """

    def __init__(self, K, tol: float = 1e-10):
        self.K = sp.csc_matrix(K)
        self.tol = tol
        self.Ks, self.s = equilibrate(self.K)
        try:
            self.lu = spla.splu(self.Ks)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if not np.any(rhs):
            return np.zeros(self.K.shape[0])
        b = self.s * rhs
        y = self.lu.solve(b)
        for _ in range(3):
            r = b - self.Ks @ y
            if np.linalg.norm(r) <= 1e-2 * self.tol * np.linalg.norm(b):
                break
            y += self.lu.solve(r)
        backward_error(self.Ks, y, b, self.tol)
        return self.s * y


def sym_eigendecomposition(M: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Q, d)`` with ``M = Q^T diag(d) Q`` and ``d`` sorted descending.

    Rows of ``Q`` are eigenvectors.
    """
    M = np.asarray(M, dtype=float)
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise CheckFailure("matrix is not symmetric", "not-symmetric")
    w, V = sla.eigh(0.5 * (M + M.T))
    order = np.argsort(-w, kind="stable")
    return V[:, order].T.copy(), w[order]

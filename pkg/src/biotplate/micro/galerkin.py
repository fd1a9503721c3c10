"""Galerkin reduction of the layer problem to a differential-algebraic system.

On the discrete divergence-free space ``H`` with the energy inner product
``(u, v)_H = eps int_f D:D + (1/eps) int_s A D:D`` an orthonormal basis
``Phi`` turns the displacement equation into

    B a' + C a = h(t),   B = Phi^T (eps K_f) Phi,   C = Phi^T (K_s / eps) Phi,

with ``B + C = I``.  Diagonalising ``B = Q^T diag(D) Q`` splits it into
scalar ODEs ``D_i a*_i' + (1 - D_i) a*_i = h*_i`` and, where ``D_i = 0``,
algebraic relations ``a*_i = h*_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..cells import ElasticityTensor
from ..errors import CheckFailure
from ..fem.assembly import assemble_mass
from ..fem.solvers import sym_eigendecomposition
from ..geometry import LayerGeometry
from .fsi import MicroForcing, MicroStepper, MicroTrajectory, norm_forms, run_micro

RANK_RTOL = 1e-12


@dataclass
class GalerkinSystem:
    stepper: MicroStepper
    Phi: np.ndarray          # (n_velocity, m) H-orthonormal basis
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray            # rows are eigenvectors of B
    D: np.ndarray            # eigenvalues, descending
    rank: int                # number of differential modes
    dimension: int           # dimension of the full divergence-free space
    orthonormality_gap: float
    identity_gap: float

    @property
    def m(self) -> int:
        return self.Phi.shape[1]

    def reduced_load(self, forcing: MicroForcing, t: float) -> np.ndarray:
        """``h* = Q Phi^T F(t)``."""
        return self.Q @ (self.Phi.T @ self.stepper.load(forcing, t))


def divergence_free_basis(stepper: MicroStepper) -> np.ndarray:
    """Dense null space of the discrete divergence on the free velocity dofs."""
    if stepper.n_pressure == 0:
        return np.eye(stepper.n_velocity)
    return sla.null_space(stepper.B.toarray())


def galerkin_reduce(layer: LayerGeometry | MicroStepper, A: ElasticityTensor | None = None,
                    m: int | None = None, dt: float = 1.0) -> GalerkinSystem:
    """Build ``(Phi, B, C, Q, D)`` for the first ``m`` basis functions.

    The basis is nested: the Cholesky factor of the Gram matrix
    orthonormalises the null-space vectors in order, so ``Phi[:, :m]`` spans
    a fixed increasing family of subspaces.
    """
    stepper = layer if isinstance(layer, MicroStepper) else MicroStepper(layer, A, dt)
    eps = stepper.epsilon
    N = divergence_free_basis(stepper)
    dim = N.shape[1]
    if m is None:
        m = dim
    if m < 1 or m > dim:
        raise CheckFailure(f"requested {m} basis functions, space has {dim}", "basis-deficient")
    Kf = stepper.Kf.toarray() * eps
    Ks = stepper.Ks.toarray() / eps
    G = N.T @ (Kf + Ks) @ N
    L = np.linalg.cholesky(0.5 * (G + G.T))
    Phi = sla.solve_triangular(L, N.T, lower=True).T[:, :m]
    gram = Phi.T @ (Kf + Ks) @ Phi
    ortho = float(np.abs(gram - np.eye(m)).max())
    Bm = Phi.T @ Kf @ Phi
    Cm = Phi.T @ Ks @ Phi
    Bm = 0.5 * (Bm + Bm.T)
    Cm = 0.5 * (Cm + Cm.T)
    ident = float(np.abs(Bm + Cm - np.eye(m)).max())
    Q, D = sym_eigendecomposition(Bm)
    rank = int(np.sum(D > RANK_RTOL * max(D.max(initial=0.0), 0.0))) if D.size else 0
    return GalerkinSystem(stepper, Phi, Bm, Cm, Q, D, rank, dim, ortho, ident)


@dataclass
class DAETrajectory:
    times: np.ndarray
    alpha: np.ndarray        # (n+1, m) coefficients in the basis Phi
    alpha_star: np.ndarray
    X: np.ndarray            # displacement (free vectors)
    w: np.ndarray            # velocity (free vectors)


def dae_solve(sys: GalerkinSystem, forcing: MicroForcing, T: float, dt: float,
              compat_tol: float = 1e-9) -> DAETrajectory:
    """Backward Euler on the differential modes, algebraic assignment on the rest."""
    n_steps = int(round(T / dt))
    h0 = sys.reduced_load(forcing, 0.0)
    if np.abs(h0).max(initial=0.0) > compat_tol:
        raise CheckFailure("reduced load does not vanish at t = 0", "compatibility-violated")
    m = sys.m
    D = sys.D
    diff = np.arange(m) < sys.rank
    times = dt * np.arange(n_steps + 1)
    a_star = np.zeros((n_steps + 1, m))
    for k in range(n_steps):
        h = sys.reduced_load(forcing, times[k + 1])
        nxt = np.empty(m)
        nxt[diff] = (D[diff] / dt * a_star[k, diff] + h[diff]) / (D[diff] / dt + 1.0 - D[diff])
        nxt[~diff] = h[~diff]
        a_star[k + 1] = nxt
    alpha = a_star @ sys.Q          # alpha = Q^T alpha*, row-wise
    X = alpha @ sys.Phi.T
    w = np.vstack([np.zeros((1, X.shape[1])), np.diff(X, axis=0) / dt])
    return DAETrajectory(times, alpha, a_star, X, w)


def _rel_l2(M, a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    num = np.einsum("ki,ki->", d, (M @ d.T).T)
    den = np.einsum("ki,ki->", b, (M @ b.T).T)
    if den <= 0:
        return float(np.sqrt(max(num, 0.0)))
    return float(np.sqrt(max(num, 0.0) / den))


def compare_dae_vs_monolithic(layer: LayerGeometry, A: ElasticityTensor, forcing: MicroForcing,
                              T: float, dt: float, m: int | None = None) -> dict:
    """Relative ``L2``-in-time discrepancy of ``u`` (solid) and ``v`` (fluid)."""
    stepper = MicroStepper(layer, A, dt)
    mono: MicroTrajectory = run_micro(stepper, forcing, T)
    sys = galerkin_reduce(stepper, m=m)
    dae = dae_solve(sys, forcing, T, dt)
    forms = norm_forms(stepper)
    P = stepper.V.P
    Ms = P.T @ assemble_mass(stepper.V, 1.0, stepper.solid_tris) @ P
    Mf = P.T @ forms.Mf @ P
    return {
        "n_velocity": stepper.n_velocity,
        "dimension": sys.dimension,
        "m": sys.m,
        "rank": sys.rank,
        "u_discrepancy": _rel_l2(Ms, dae.X[1:], mono.X[1:]),
        "v_discrepancy": _rel_l2(Mf, dae.w[1:], mono.w[1:]) if stepper.has_fluid else 0.0,
        "identity_gap": sys.identity_gap,
        "orthonormality_gap": sys.orthonormality_gap,
        "eig_min": float(sys.D.min()),
        "eig_max": float(sys.D.max()),
    }

"""Direct solver for the quasistatic fluid-structure problem on the thin layer.

One global P2 velocity ``w`` lives on the whole layer: it is the fluid
velocity in the fluid and the discrete displacement rate in the solid, so the
kinematic interface condition holds exactly.  A backward Euler step reads

    [ eps K_f + (dt/eps) K_s   -B^T ] [w]   [ F^{k+1} - K_s X^k / eps ]
    [ -B                        0   ] [p] = [ 0                       ]

followed by ``X^{k+1} = X^k + dt w``.  The matrix is factorised once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..cells import ElasticityTensor
from ..errors import CheckFailure, GeometryError, InputError
from ..fem.assembly import (assemble_divergence, assemble_elastic, assemble_load, assemble_mass,
                            assemble_stiffness, assemble_viscous)
from ..fem.solvers import SaddleFactor
from ..fem.spaces import FunctionSpace
from ..forcing import MacroForcing
from ..geometry import FLUID, FLUID_DIRICHLET, SOLID, SOLID_DIRICHLET, LayerGeometry

SYMMETRY_TOL = 1e-12
DIVERGENCE_TOL = 1e-9


@dataclass
class MicroForcing:
    """Layer loads built from the limit loads.

    Fluid: ``(f0, eps * f1bar / |Z_f|)``; solid: ``(g0, eps * g1bar / |Z_s|)``.
    The vertical densities are uniform over the cell, so their cell integrals
    reproduce ``f1bar`` and ``g1bar``.
    """

    macro: MacroForcing
    epsilon: float
    vol_f: float
    vol_s: float

    def fluid(self, t: float, xq: np.ndarray) -> np.ndarray:
        x1 = xq[..., 0]
        out = np.zeros(xq.shape)
        out[..., 0] = self.macro.f0(t, x1)
        if self.vol_f > 0:
            out[..., 1] = self.epsilon * self.macro.f1bar(t, x1) / self.vol_f
        return out

    def solid(self, t: float, xq: np.ndarray) -> np.ndarray:
        x1 = xq[..., 0]
        out = np.zeros(xq.shape)
        out[..., 0] = self.macro.g0(t, x1)
        if self.vol_s > 0:
            out[..., 1] = self.epsilon * self.macro.g1bar(t, x1) / self.vol_s
        return out

    def is_zero_at(self, t: float) -> bool:
        return self.macro.is_zero_at(t)


def micro_forcing(macro: MacroForcing, layer: LayerGeometry) -> MicroForcing:
    """Layer loads sharing the limit profiles of ``macro``."""
    if tuple(macro.sigma) != tuple(layer.sigma):
        raise InputError("forcing and layer live on different intervals", "inconsistent-data")
    cm = layer.cell_mesh
    return MicroForcing(macro, layer.epsilon, cm.region_area(FLUID), cm.region_area(SOLID))


class MicroStepper:
    """Assembled backward Euler operator for one ``(layer, A, eps, dt)``."""

    def __init__(self, layer: LayerGeometry, A: ElasticityTensor, dt: float, tol: float = 1e-10):
        if dt <= 0:
            raise GeometryError("time step must be positive", "invalid-layer")
        mesh = layer.mesh
        if len(mesh.triangles) == 0:
            raise GeometryError("empty layer mesh", "invalid-layer")
        self.layer = layer
        self.A = A
        self.epsilon = eps = layer.epsilon
        self.dt = float(dt)
        self.tol = tol
        self.fluid_tris = np.flatnonzero(mesh.tri_tags == FLUID)
        self.solid_tris = np.flatnonzero(mesh.tri_tags == SOLID)
        self.V = FunctionSpace(mesh, 2, ncomp=2, dirichlet_tags=(SOLID_DIRICHLET, FLUID_DIRICHLET))
        self.has_fluid = self.fluid_tris.size > 0
        self.Q = FunctionSpace(mesh, 1, region=FLUID) if self.has_fluid else None

        V = self.V
        self.Kf_raw = assemble_viscous(V, self.fluid_tris) if self.has_fluid else sp.csr_matrix((V.n_raw, V.n_raw))
        self.Ks_raw = assemble_elastic(V, A.A, self.solid_tris)
        P = V.P
        self.Kf = sp.csr_matrix(P.T @ self.Kf_raw @ P)
        self.Ks = sp.csr_matrix(P.T @ self.Ks_raw @ P)
        top = eps * self.Kf + (self.dt / eps) * self.Ks
        if self.has_fluid:
            self.B = sp.csr_matrix(assemble_divergence(V, self.Q) @ P)
            self.matrix = sp.bmat([[top, -self.B.T], [-self.B, None]], format="csr")
        else:
            self.B = sp.csr_matrix((0, V.n_free))
            self.matrix = sp.csr_matrix(top)
        asym = abs(self.matrix - self.matrix.T)
        self.symmetry_gap = float(asym.max()) if asym.nnz else 0.0
        scale = max(float(abs(self.matrix).max()), 1.0)
        if self.symmetry_gap > SYMMETRY_TOL * scale:
            raise CheckFailure(f"step matrix asymmetry {self.symmetry_gap:.2e}", "not-symmetric")
        self._factor = None

    @property
    def n_velocity(self) -> int:
        return self.V.n_free

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]

    @property
    def factor(self) -> SaddleFactor:
        if self._factor is None:
            self._factor = SaddleFactor(self.matrix, self.tol)
        return self._factor

    def load(self, forcing: MicroForcing, t: float) -> np.ndarray:
        """Free load vector ``int f . phi + int g . phi`` at time ``t``."""
        F = np.zeros(self.V.n_raw)
        if self.has_fluid:
            F += assemble_load(self.V, lambda x: forcing.fluid(t, x), self.fluid_tris)
        if self.solid_tris.size:
            F += assemble_load(self.V, lambda x: forcing.solid(t, x), self.solid_tris)
        return self.V.P.T @ F

    def step(self, X: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocity and pressure (free vectors) given the displacement ``X``."""
        rhs = np.concatenate([F - (self.Ks @ X) / self.epsilon, np.zeros(self.n_pressure)])
        z = self.factor.solve(rhs)
        return z[:self.n_velocity], z[self.n_velocity:]

    def divergence_residual(self, w: np.ndarray) -> float:
        if not self.has_fluid:
            return 0.0
        scale = abs(self.B).max() * max(np.abs(w).max(), 1e-300)
        return float(np.abs(self.B @ w).max() / scale) if scale > 0 else 0.0

    def stored_energy(self, X: np.ndarray) -> float:
        """``(1 / 2 eps) int A D(u) : D(u)`` over the solid."""
        return 0.5 * float(X @ (self.Ks @ X)) / self.epsilon


def assemble_micro_step(layer: LayerGeometry, A: ElasticityTensor, dt: float,
                        tol: float = 1e-10) -> MicroStepper:
    return MicroStepper(layer, A, dt, tol)


@dataclass
class MicroTrajectory:
    """Free velocity/displacement vectors and pressures at ``t_k = k dt``."""

    times: np.ndarray
    w: np.ndarray
    X: np.ndarray
    p: np.ndarray
    stepper: MicroStepper = field(repr=False)
    divergence: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_energy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    forcing_free: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def epsilon(self) -> float:
        return self.stepper.epsilon

    @property
    def dt(self) -> float:
        return self.stepper.dt


def run_micro(stepper: MicroStepper, forcing: MicroForcing, T: float) -> MicroTrajectory:
    """March from the zero state to ``T`` with fixed ``dt``.

    On unforced steps the discrete energy balance
    ``eps dt |D(w)|_f^2 + E(X^{k+1}) - E(X^k) <= 0`` is asserted.
    """
    dt = stepper.dt
    n_steps = int(round(T / dt))
    if T < 0 or abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise InputError("T must be a non-negative multiple of dt", "invalid-input")
    if not forcing.is_zero_at(0.0):
        raise InputError("forcing does not vanish at t = 0", "invalid-input")
    nv, npr = stepper.n_velocity, stepper.n_pressure
    W = np.zeros((n_steps + 1, nv))
    X = np.zeros((n_steps + 1, nv))
    Pp = np.zeros((n_steps + 1, npr))
    div = np.zeros(n_steps + 1)
    balance = np.zeros(n_steps + 1)
    free = np.zeros(n_steps + 1, dtype=bool)
    free[0] = True
    times = dt * np.arange(n_steps + 1)
    eps = stepper.epsilon
    for k in range(n_steps):
        t = times[k + 1]
        w, p = stepper.step(X[k], stepper.load(forcing, t))
        W[k + 1], Pp[k + 1] = w, p
        X[k + 1] = X[k] + dt * w
        div[k + 1] = stepper.divergence_residual(w)
        if div[k + 1] > DIVERGENCE_TOL:
            raise CheckFailure(f"divergence residual {div[k + 1]:.2e}", "divergence-violation")
        e0, e1 = stepper.stored_energy(X[k]), stepper.stored_energy(X[k + 1])
        balance[k + 1] = eps * dt * float(w @ (stepper.Kf @ w)) + e1 - e0
        free[k + 1] = forcing.is_zero_at(t)
        if free[k + 1] and balance[k + 1] > 1e-9 * max(e0, 1e-300):
            raise CheckFailure(f"energy balance violated at t = {t:.6g}", "energy-increase")
    return MicroTrajectory(times, W, X, Pp, stepper, div, balance, free)


class HarmonicExtension:
    """Extend a solid field into the fluid by componentwise discrete Laplace.

    Values on solid nodes (interface included) are kept; fluid nodes on the
    fluid Dirichlet end are zero; the remaining fluid nodes solve the Laplace
    equation with natural conditions elsewhere.
    """

    def __init__(self, stepper: MicroStepper):
        V = stepper.V
        self.V = V
        self.stepper = stepper
        solid_nodes = np.unique(V.elem_nodes[V.local_tris(stepper.solid_tris)]) \
            if stepper.solid_tris.size else np.zeros(0, dtype=np.int64)
        fixed = np.zeros(V.n_nodes, dtype=bool)
        fixed[solid_nodes] = True
        fixed[V.nodes_on_edges((FLUID_DIRICHLET,))] = True
        raw_fixed = np.repeat(fixed, 2)
        self.solid_raw = np.repeat(np.isin(np.arange(V.n_nodes), solid_nodes), 2)
        self.inner = np.flatnonzero(~raw_fixed)
        self.bnd = np.flatnonzero(raw_fixed)
        if self.inner.size:
            L = sp.csr_matrix(assemble_stiffness(V, stepper.fluid_tris))
            self.L_ib = L[self.inner][:, self.bnd]
            self.lu = spla.splu(sp.csc_matrix(L[self.inner][:, self.inner]))

    def extend(self, x_free: np.ndarray) -> np.ndarray:
        """Raw extended field from a free global vector (solid part used)."""
        raw = self.V.P @ x_free
        out = np.where(self.solid_raw, raw, 0.0)
        if self.inner.size:
            out[self.inner] = self.lu.solve(-(self.L_ib @ out[self.bnd]))
        return out


@dataclass
class NormForms:
    """Quadratic forms used by the monitors (all on raw vectors)."""

    Df: sp.csr_matrix     # int_f D:D
    Ds: sp.csr_matrix     # int_s D:D
    Mf: sp.csr_matrix     # int_f u.v
    Mf1: sp.csr_matrix    # int_f u1 v1
    Mp: sp.csr_matrix | None


def norm_forms(stepper: MicroStepper) -> NormForms:
    V = stepper.V
    n = V.n_raw
    if stepper.has_fluid:
        Df = assemble_viscous(V, stepper.fluid_tris)
        Mf = assemble_mass(V, 1.0, stepper.fluid_tris)
        mask = sp.diags((np.arange(n) % 2 == 0).astype(float))
        Mf1 = sp.csr_matrix(mask @ Mf @ mask)
        Mp = assemble_mass(stepper.Q, 1.0)
    else:
        Df = Mf = Mf1 = sp.csr_matrix((n, n))
        Mp = None
    Ds = assemble_viscous(V, stepper.solid_tris)
    return NormForms(sp.csr_matrix(Df), sp.csr_matrix(Ds), sp.csr_matrix(Mf), Mf1, Mp)


def _sq(M, a: np.ndarray) -> np.ndarray:
    """Row-wise ``a_k^T M a_k``."""
    return np.einsum("ki,ki->k", a, (M @ a.T).T)


def time_norms(M, series: np.ndarray, dt: float) -> dict:
    """Discrete ``L2``, ``Linf``, ``H1`` and ``W1inf`` time norms of a series.

    ``series[0]`` is the initial state; differences use backward quotients.
    """
    vals = np.sqrt(np.maximum(_sq(M, series[1:]), 0.0))
    diffs = np.sqrt(np.maximum(_sq(M, np.diff(series, axis=0)), 0.0)) / dt
    l2 = float(np.sqrt(dt * np.sum(vals ** 2)))
    return {
        "L2": l2,
        "Linf": float(vals.max(initial=0.0)),
        "H1": float(np.sqrt(l2 ** 2 + dt * np.sum(diffs ** 2))),
        "W1inf": float(vals.max(initial=0.0) + diffs.max(initial=0.0)),
    }


def apriori_monitors(traj: MicroTrajectory, forms: NormForms | None = None,
                     extension: HarmonicExtension | None = None) -> dict:
    """Scaled norms whose boundedness in ``eps`` is the a-priori estimate.

    ``r_v = eps^-1/2 |D(v)|_{H1(L2)}``, ``r_u = eps^-3/2 |D(u)|_{W1inf(L2)}``,
    ``r_p = eps^-1/2 |p|_{H1(L2)}``, ``r_w = eps^-3/2 |v - d_t ext(u)|_{L2(L2)}``,
    ``r_vi = eps^-3/2 |v_1|_{H1(L2)}``.  ``r_u_Linf`` (without the time
    derivative) is reported as well.
    """
    st = traj.stepper
    forms = forms or norm_forms(st)
    P = st.V.P
    eps, dt = traj.epsilon, traj.dt
    Wr = (P @ traj.w.T).T
    Xr = (P @ traj.X.T).T
    nv = time_norms(forms.Df, Wr, dt)
    nu = time_norms(forms.Ds, Xr, dt)
    out = {"epsilon": eps}
    out["r_v"] = nv["H1"] / np.sqrt(eps)
    out["r_u"] = nu["W1inf"] / eps ** 1.5
    out["r_u_Linf"] = nu["Linf"] / eps ** 1.5
    if st.has_fluid:
        out["r_p"] = time_norms(forms.Mp, traj.p, dt)["H1"] / np.sqrt(eps)
        ext = extension or HarmonicExtension(st)
        rel = np.array([Wr[k] - ext.extend(traj.w[k]) for k in range(len(Wr))])
        out["r_w"] = time_norms(forms.Mf, rel, dt)["L2"] / eps ** 1.5
        out["r_vi"] = time_norms(forms.Mf1, Wr, dt)["H1"] / eps ** 1.5
    else:
        out["r_p"] = out["r_w"] = out["r_vi"] = 0.0
    return out

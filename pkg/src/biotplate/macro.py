"""Macroscopic Biot-plate system on ``sigma = (a, b)``.

Unknowns are the pressure ``p`` (P1), the in-plane displacement ``u1`` (P1,
zero at both ends) and the deflection ``w`` (Hermite cubic, clamped).  Each
backward Euler step solves the symmetric block system

    [ -(M + dt K_p)   C_dp ] [p]   [ -M p^k + C_dp x^k - dt F_p ]
    [  C_pd           S    ] [x] = [  F_x                       ]

with ``x = (u1, w)``.  ``C_dp`` and ``C_pd`` are assembled independently; their
transpose identity is what makes the discrete energy
``E = (p^T M p + x^T S x) / 2`` non-increasing on unforced steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .effective import EffectiveCoefficients, check_positivity
from .errors import CheckFailure, GeometryError, InputError
from .fem.assembly import element_data, eval_field
from .fem.hermite import IntervalSpace, assemble_1d, assemble_1d_load
from .fem.solvers import SaddleFactor, check_residual
from .forcing import MacroForcing
from .geometry import FLUID, SOLID

ENERGY_RTOL = 1e-9
TRANSPOSE_TOL = 1e-12


def uniform_nodes(sigma: tuple[float, float], n_nodes: int) -> np.ndarray:
    if n_nodes < 3:
        raise GeometryError("the macro mesh needs at least 3 nodes", "invalid-layer")
    return np.linspace(float(sigma[0]), float(sigma[1]), int(n_nodes))


@dataclass
class MacroSpaces:
    nodes: np.ndarray
    dirichlet_side: str
    neumann_side: str
    p: IntervalSpace
    u1: IntervalSpace
    w: IntervalSpace
    pressure_bc: bool

    @property
    def sigma(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def n_p(self) -> int:
        return self.p.n_free

    @property
    def n_x(self) -> int:
        return self.u1.n_free + self.w.n_free

    @property
    def n_total(self) -> int:
        return self.n_p + self.n_x

    def split_x(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Raw ``u1`` and ``w`` vectors from the free plate unknowns."""
        nu = self.u1.n_free
        return self.u1.P @ x[:nu], self.w.P @ x[nu:]


def build_macro_spaces(nodes: np.ndarray, dirichlet=("a",), neumann=("b",),
                       pressure_bc: bool = True) -> MacroSpaces:
    """Trial spaces for ``p``, ``u1`` and ``w`` on the 1D mesh ``nodes``.

    ``p = 0`` is imposed at the Neumann end of ``sigma`` unless
    ``pressure_bc`` is False (used when the permeability vanishes and the
    pressure equation carries no spatial derivative).
    """
    dirichlet, neumann = tuple(dirichlet), tuple(neumann)
    if not dirichlet or not neumann:
        raise GeometryError("both boundary parts of sigma must be nonempty", "empty-boundary-part")
    if len(dirichlet) != 1 or len(neumann) != 1 or dirichlet == neumann \
            or {dirichlet[0], neumann[0]} != {"a", "b"}:
        raise GeometryError("sides must split {'a', 'b'} into one Dirichlet and one Neumann end",
                            "empty-boundary-part")
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    p_fixed = ([0] if neumann[0] == "a" else [n - 1]) if pressure_bc else []
    p = IntervalSpace(nodes, "p1", fixed=p_fixed)
    u1 = IntervalSpace(nodes, "p1", fixed=[0, n - 1])
    w = IntervalSpace(nodes, "hermite", fixed=[0, 1, 2 * n - 2, 2 * n - 1])
    return MacroSpaces(nodes, dirichlet[0], neumann[0], p, u1, w, pressure_bc)


def _restrict(A, row: IntervalSpace, col: IntervalSpace) -> sp.csr_matrix:
    return sp.csr_matrix(row.P.T @ A @ col.P)


@dataclass
class MacroSystem:
    spaces: MacroSpaces
    coeffs: EffectiveCoefficients
    dt: float
    M: sp.csr_matrix
    Kp: sp.csr_matrix
    S: sp.csr_matrix
    C_dp: sp.csr_matrix
    C_pd: sp.csr_matrix
    matrix: sp.csr_matrix
    transpose_gap: float
    tol: float = 1e-10
    _factor: SaddleFactor | None = field(default=None, repr=False)

    @property
    def factor(self) -> SaddleFactor:
        if self._factor is None:
            self._factor = SaddleFactor(self.matrix, self.tol)
        return self._factor

    def loads(self, forcing: MacroForcing, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Free load vectors ``(F_p, F_x)`` sampled at time ``t``."""
        sp_, c = self.spaces, self.coeffs
        extra = forcing.extra
        Fp = assemble_1d_load(sp_.p, lambda x: c.K * forcing.f0(t, x), 1)
        if "p" in extra:
            Fp = Fp + assemble_1d_load(sp_.p, lambda x: extra["p"](t, x), 0)
        Fu = assemble_1d_load(sp_.u1, lambda x: c.vol_f * forcing.f0(t, x)
                              + c.vol_s * forcing.g0(t, x), 0)
        if "u1" in extra:
            Fu = Fu + assemble_1d_load(sp_.u1, lambda x: extra["u1"](t, x), 0)
        Fw = assemble_1d_load(sp_.w, lambda x: forcing.f1bar(t, x) + forcing.g1bar(t, x), 0)
        Fw = Fw - assemble_1d_load(sp_.w, lambda x: c.d_n_f * forcing.f0(t, x)
                                   + c.d_n_s * forcing.g0(t, x), 1)
        if "w" in extra:
            Fw = Fw + assemble_1d_load(sp_.w, lambda x: extra["w"](t, x), 0)
        Fx = np.concatenate([sp_.u1.P.T @ Fu, sp_.w.P.T @ Fw])
        return sp_.p.P.T @ Fp, Fx

    def energy(self, p: np.ndarray, x: np.ndarray) -> float:
        return 0.5 * float(p @ (self.M @ p) + x @ (self.S @ x))

    def step(self, p: np.ndarray, x: np.ndarray, forcing: MacroForcing,
             t_next: float) -> tuple[np.ndarray, np.ndarray]:
        """One backward Euler step from ``(p, x)``; loads sampled at ``t_next``."""
        Fp, Fx = self.loads(forcing, t_next)
        rhs = np.concatenate([-(self.M @ p) + self.C_dp @ x - self.dt * Fp, Fx])
        z = self.factor.solve(rhs)
        n = self.spaces.n_p
        return z[:n], z[n:]


def assemble_macro_system(coeffs: EffectiveCoefficients, spaces: MacroSpaces, dt: float,
                          tol: float = 1e-10) -> MacroSystem:
    """Assemble the per-step block operator and check the coupling identity."""
    if dt <= 0:
        raise InputError("time step must be positive", "invalid-input")
    check_positivity(coeffs)
    P, U, W = spaces.p, spaces.u1, spaces.w
    c = coeffs
    b1, b2 = c.membrane_coupling, c.bending_coupling
    M = _restrict(assemble_1d(P, P, 0, 0, c.alpha_h), P, P)
    Kp = _restrict(assemble_1d(P, P, 1, 1, c.K), P, P)
    S = sp.bmat([
        [_restrict(assemble_1d(U, U, 1, 1, c.a_star), U, U),
         _restrict(assemble_1d(U, W, 1, 2, c.b_star), U, W)],
        [_restrict(assemble_1d(W, U, 2, 1, c.b_star), W, U),
         _restrict(assemble_1d(W, W, 2, 2, c.c_star), W, W)],
    ], format="csr")
    # pressure test against plate trial, and plate test against pressure trial
    C_dp = sp.hstack([_restrict(assemble_1d(P, U, 0, 1, b1), P, U),
                      _restrict(assemble_1d(P, W, 0, 2, b2), P, W)], format="csr")
    C_pd = sp.vstack([_restrict(assemble_1d(U, P, 1, 0, b1), U, P),
                      _restrict(assemble_1d(W, P, 2, 0, b2), W, P)], format="csr")
    diff = (C_dp - C_pd.T).tocoo()
    gap = float(np.abs(diff.data).max(initial=0.0))
    if gap > TRANSPOSE_TOL:
        raise CheckFailure(f"coupling transpose gap {gap:.2e}", "transpose-violation")
    matrix = sp.bmat([[-(M + dt * Kp), C_dp], [C_pd, S]], format="csr")
    return MacroSystem(spaces, coeffs, float(dt), M, Kp, S, C_dp, C_pd, matrix, gap, tol)


@dataclass
class MacroTrajectory:
    """States at ``t_k = k dt`` as raw DOF arrays, plus the energy series."""

    times: np.ndarray
    p: np.ndarray
    u1: np.ndarray
    w: np.ndarray
    energy: np.ndarray
    forcing_free: np.ndarray
    spaces: MacroSpaces
    transpose_gap: float

    @property
    def dissipation(self) -> np.ndarray:
        """``E_{k-1} - E_k`` (zero at the first entry)."""
        return np.concatenate([[0.0], -np.diff(self.energy)])

    def state(self, k: int) -> dict:
        return {"t": float(self.times[k]), "p": self.p[k], "u1": self.u1[k], "w": self.w[k]}


def run(coeffs: EffectiveCoefficients, forcing: MacroForcing, T: float, dt: float,
        spaces: MacroSpaces | None = None, n_nodes: int = 41, tol: float = 1e-10,
        check_energy: bool = True) -> MacroTrajectory:
    """March from the zero state to ``T``; the energy must not grow on unforced steps."""
    if T < 0 or dt <= 0:
        raise InputError("T must be non-negative and dt positive", "invalid-input")
    if spaces is None:
        spaces = build_macro_spaces(uniform_nodes(forcing.sigma, n_nodes),
                                    pressure_bc=coeffs.percolating)
    forcing.check_initial()
    system = assemble_macro_system(coeffs, spaces, dt, tol)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise InputError("T must be a multiple of dt", "invalid-input")
    p = np.zeros(spaces.n_p)
    x = np.zeros(spaces.n_x)
    times = dt * np.arange(n_steps + 1)
    P = np.zeros((n_steps + 1, spaces.p.n_raw))
    U = np.zeros((n_steps + 1, spaces.u1.n_raw))
    W = np.zeros((n_steps + 1, spaces.w.n_raw))
    E = np.zeros(n_steps + 1)
    free = np.zeros(n_steps + 1, dtype=bool)
    free[0] = True
    for k in range(n_steps):
        t = times[k + 1]
        p, x = system.step(p, x, forcing, t)
        P[k + 1] = spaces.p.P @ p
        U[k + 1], W[k + 1] = spaces.split_x(x)
        E[k + 1] = system.energy(p, x)
        free[k + 1] = forcing.is_zero_at(t)
        if check_energy and free[k + 1] and E[k + 1] > E[k] * (1.0 + ENERGY_RTOL) + 1e-300:
            raise CheckFailure(f"energy grew on an unforced step at t = {t:.6g}: "
                               f"{E[k]:.12e} -> {E[k + 1]:.12e}", "energy-increase")
    return MacroTrajectory(times, P, U, W, E, free, spaces, system.transpose_gap)


def stationary_solve(system: MacroSystem, forcing: MacroForcing, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Steady state for loads frozen at time ``t`` (requires ``K > 0``)."""
    Fp, Fx = system.loads(forcing, t)
    A = sp.bmat([[system.Kp, None], [system.C_pd, system.S]], format="csc")
    rhs = np.concatenate([Fp, Fx])
    z = sp.linalg.spsolve(A, rhs)
    check_residual(A, z, rhs, system.tol)
    n = system.spaces.n_p
    return z[:n], z[n:]


def darcy_velocity(spaces: MacroSpaces, coeffs: EffectiveCoefficients, prev: dict, nxt: dict,
                   dt: float, f0=None, xi: np.ndarray | None = None) -> dict:
    """Averaged Darcy velocity ``K (f0 - p') + |Z_f| d_t u1 - d_n^f d_t w'``.

    Evaluated per element at reference points ``xi`` (midpoints by default)
    from two consecutive states; the vertical component is zero.
    """
    xi = np.array([0.5]) if xi is None else np.asarray(xi, dtype=float)
    x = spaces.nodes[:-1, None] + spaces.p.length[:, None] * xi[None, :]
    dp = spaces.p.evaluate(nxt["p"], xi, 1)
    du = (spaces.u1.evaluate(nxt["u1"], xi, 0) - spaces.u1.evaluate(prev["u1"], xi, 0)) / dt
    dws = (spaces.w.evaluate(nxt["w"], xi, 1) - spaces.w.evaluate(prev["w"], xi, 1)) / dt
    f = np.zeros_like(x) if f0 is None else np.broadcast_to(f0(x), x.shape)
    v1 = coeffs.K * (f - dp) + coeffs.vol_f * du - coeffs.d_n_f * dws
    return {"x": x, "v1": v1, "v2": np.zeros_like(v1)}


def manufactured_case(coeffs: EffectiveCoefficients, sigma=(0.0, 1.0), dirichlet: str = "a"):
    """Smooth exact solution and the residual sources that produce it.

    ``p = t cos(pi s / 2)`` (flat at the Dirichlet end, zero at the Neumann
    end), ``u1 = t sin(pi s)``, ``w = t sin(pi s)^2`` with ``s`` the reduced
    coordinate measured from the Dirichlet end.  Returns
    ``(forcing, exact)`` where ``exact[name](t, x)`` gives the fields.
    """
    a, b = float(sigma[0]), float(sigma[1])
    L = b - a
    sgn = 1.0 if dirichlet == "a" else -1.0
    pi = np.pi
    c = coeffs
    al, K = c.alpha_h, c.K
    b1, b2 = c.membrane_coupling, c.bending_coupling

    def s_of(x):
        return (np.asarray(x, dtype=float) - a) / L if dirichlet == "a" else (b - np.asarray(x, dtype=float)) / L

    # derivatives in x: d/dx = sgn / L d/ds
    def p_ex(t, x):
        return t * np.cos(pi * s_of(x) / 2)

    def u_ex(t, x):
        return t * np.sin(pi * s_of(x))

    def w_ex(t, x):
        return t * np.sin(pi * s_of(x)) ** 2

    def src_p(t, x):
        s = s_of(x)
        pxx = -(pi / (2 * L)) ** 2 * t * np.cos(pi * s / 2)
        ux_t = sgn * (pi / L) * np.cos(pi * s)
        wxx_t = 2 * (pi / L) ** 2 * np.cos(2 * pi * s)
        return al * np.cos(pi * s / 2) - K * pxx - (b1 * ux_t + b2 * wxx_t)

    def src_u(t, x):
        s = s_of(x)
        uxx = -(pi / L) ** 2 * t * np.sin(pi * s)
        wxxx = -sgn * 4 * (pi / L) ** 3 * t * np.sin(2 * pi * s)
        px = -sgn * (pi / (2 * L)) * t * np.sin(pi * s / 2)
        return -(c.a_star * uxx + c.b_star * wxxx + b1 * px)

    def src_w(t, x):
        s = s_of(x)
        uxxx = -sgn * (pi / L) ** 3 * t * np.cos(pi * s)
        wxxxx = -8 * (pi / L) ** 4 * t * np.cos(2 * pi * s)
        pxx = -(pi / (2 * L)) ** 2 * t * np.cos(pi * s / 2)
        return c.b_star * uxxx + c.c_star * wxxxx + b2 * pxx

    def src_p0(t, x):
        return src_p(t, x) if t > 0 else np.zeros_like(np.asarray(x, dtype=float))

    forcing = MacroForcing((a, b), extra={"p": src_p0, "u1": src_u, "w": src_w})
    exact = {"p": p_ex, "u1": u_ex, "w": w_ex}
    return forcing, exact


def l2_error_1d(space: IntervalSpace, coef_raw: np.ndarray, exact) -> float:
    xi, x, w = space.quadrature()
    diff = space.evaluate(coef_raw, xi, 0) - exact(x)
    return float(np.sqrt(np.sum(w * diff ** 2)))


class Reconstructor:
    """Evaluates the two-scale approximation on the quadrature points of a layer.

    Cell corrector values are taken at the parent cell triangle with the same
    barycentric points, so no interpolation between meshes is involved.
    """

    def __init__(self, spaces: MacroSpaces, cells, coeffs: EffectiveCoefficients, layer):
        if cells is None or cells.solid_space is None:
            raise CheckFailure("cell solutions are required", "missing-cell-solutions")
        if layer.cell_mesh.hash() != cells.mesh.hash():
            raise CheckFailure("layer and cell solutions use different cell meshes",
                               "missing-cell-solutions")
        self.spaces, self.coeffs, self.layer = spaces, coeffs, layer
        eps = layer.epsilon
        mesh = layer.mesh
        self.solid_tris = np.flatnonzero(mesh.tri_tags == SOLID)
        self.fluid_tris = np.flatnonzero(mesh.tri_tags == FLUID)
        self.ed_s = element_data(mesh, self.solid_tris)
        self.ed_f = element_data(mesh, self.fluid_tris)

        def cell_values(space, field, tris_layer):
            parents = layer.parent_tri[tris_layer]
            uniq, inv = np.unique(parents, return_inverse=True)
            vals, _ = eval_field(space, field, uniq)
            return vals[inv]

        S = cells.solid_space
        st = self.solid_tris
        self.chi = cell_values(S, cells.chi[(0, 0)], st)
        self.chiB = cell_values(S, cells.chiB[(0, 0)], st)
        self.chi0 = cell_values(S, cells.chi0, st)
        if self.fluid_tris.size and cells.fluid_space is not None:
            self.q1 = cell_values(cells.fluid_space, cells.q[0], self.fluid_tris)
        else:
            self.q1 = np.zeros(self.ed_f.xq.shape)
        self.y2_s = self.ed_s.xq[..., 1] / eps
        self.y2_f = self.ed_f.xq[..., 1] / eps
        self._mats = {}
        for key, ed in (("s", self.ed_s), ("f", self.ed_f)):
            x = ed.xq[..., 0]
            self._mats[key] = {
                "p": spaces.p.eval_matrix(x, 0), "dp": spaces.p.eval_matrix(x, 1),
                "u": spaces.u1.eval_matrix(x, 0), "du": spaces.u1.eval_matrix(x, 1),
                "w": spaces.w.eval_matrix(x, 0), "dw": spaces.w.eval_matrix(x, 1),
                "ddw": spaces.w.eval_matrix(x, 2),
            }

    def _eval(self, key: str, name: str, coef: np.ndarray, shape) -> np.ndarray:
        return (self._mats[key][name] @ coef).reshape(shape)

    def displacement(self, state: dict) -> np.ndarray:
        """``u0 e2 + eps (u1 - y2 u0') e1 + eps^2 u2`` on solid quadrature points."""
        eps = self.layer.epsilon
        shp = self.y2_s.shape
        u = self._eval("s", "u", state["u1"], shp)
        du = self._eval("s", "du", state["u1"], shp)
        w = self._eval("s", "w", state["w"], shp)
        dw = self._eval("s", "dw", state["w"], shp)
        ddw = self._eval("s", "ddw", state["w"], shp)
        p = self._eval("s", "p", state["p"], shp)
        u2 = du[..., None] * self.chi + ddw[..., None] * self.chiB + p[..., None] * self.chi0
        out = eps ** 2 * u2
        out[..., 0] += eps * (u - self.y2_s * dw)
        out[..., 1] += w
        return out

    def velocity(self, prev: dict, state: dict, dt: float, f0=None) -> np.ndarray:
        """``d_t u0 e2 + eps [(f0 - p0') q1 + d_t u1 - y2 d_t u0'] `` on fluid points."""
        eps = self.layer.epsilon
        shp = self.y2_f.shape
        if not shp[0]:
            return np.zeros(shp + (2,))
        dp = self._eval("f", "dp", state["p"], shp)
        du_t = self._eval("f", "u", state["u1"] - prev["u1"], shp) / dt
        dw_t = self._eval("f", "w", state["w"] - prev["w"], shp) / dt
        dws_t = self._eval("f", "dw", state["w"] - prev["w"], shp) / dt
        f = np.zeros(shp) if f0 is None else np.broadcast_to(f0(self.ed_f.xq[..., 0]), shp)
        out = eps * (f - dp)[..., None] * self.q1
        out[..., 0] += eps * (du_t - self.y2_f * dws_t)
        out[..., 1] += dw_t
        return out

    def pressure(self, state: dict) -> np.ndarray:
        """``p0`` on fluid points (constant across the thickness)."""
        return self._eval("f", "p", state["p"], self.y2_f.shape)


def reconstruct_micro(spaces: MacroSpaces, prev: dict, state: dict, dt: float, cells,
                      coeffs: EffectiveCoefficients, layer, f0=None) -> dict:
    """Approximate micro fields at the layer quadrature points.

    Returns the solid points with the displacement, and the fluid points with
    the velocity and pressure.  The vertical part of the first-order velocity
    corrector is not determined by the limit; the reconstruction uses the
    in-plane formula only.
    """
    rec = Reconstructor(spaces, cells, coeffs, layer)
    return {
        "solid_x": rec.ed_s.xq, "u": rec.displacement(state),
        "fluid_x": rec.ed_f.xq, "v": rec.velocity(prev, state, dt, f0), "p": rec.pressure(state),
    }

"""Two-scale pairings and the epsilon-convergence study.

The pairing ``(1/eps) int_0^T int_{Omega_eps} w(x) phi(x1) psi(x/eps) dx dt``
is evaluated with the layer quadrature.  Because every layer triangle is a
scaled copy of a cell triangle with the same vertex order, a cell-periodic
``psi`` sampled on the cell quadrature transfers exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cells import CellSolutionSet, ElasticityTensor
from ..effective import EffectiveCoefficients
from ..errors import InputError
from ..fem.assembly import element_data, eval_field
from ..forcing import MacroForcing
from ..geometry import CellGeometry, LayerGeometry, extrude_layer_mesh
from ..macro import MacroTrajectory, Reconstructor
from .fsi import (HarmonicExtension, MicroStepper, MicroTrajectory, apriori_monitors,
                  micro_forcing, run_micro)

N_MODES = 3


def two_scale_pair(layer: LayerGeometry, values: np.ndarray, tris: np.ndarray, phi=None,
                   psi=None) -> float:
    """``(1/eps) int w(x) phi(x1) psi(x/eps)`` over the layer triangles ``tris``.

    ``values`` are samples of ``w`` at the quadrature points (T, Q).  ``phi``
    is a callable of ``x1``; ``psi`` is either an array over the cell
    triangles (Tc, Q) or a callable of the cell coordinate ``y`` (T, Q, 2).
    """
    tris = np.asarray(tris)
    if tris.size == 0:
        return 0.0
    ed = element_data(layer.mesh, tris)
    weight = np.asarray(values, dtype=float) * ed.wq
    if phi is not None:
        weight = weight * phi(ed.xq[..., 0])
    if psi is not None:
        if callable(psi):
            y = cell_coordinates(layer, tris, ed.xq)
            weight = weight * psi(y)
        else:
            weight = weight * np.asarray(psi)[layer.parent_tri[tris]]
    return float(weight.sum() / layer.epsilon)


def cell_coordinates(layer: LayerGeometry, tris: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """``y = x / eps - k`` using the parent cell index of each triangle."""
    a = layer.sigma[0]
    eps = layer.epsilon
    y = np.empty_like(xq)
    y[..., 0] = (xq[..., 0] - a) / eps - layer.parent_cell[tris][:, None]
    y[..., 1] = xq[..., 1] / eps
    return y


def unfolding_check(layer: LayerGeometry, psi=None) -> dict:
    """Pair the periodic field ``psi(x/eps)`` with ``phi = 1``.

    The result must equal ``|Sigma| int_Z psi`` at every ``eps``.
    """
    if psi is None:
        def psi(y):
            return 1.0 + y[..., 1] ** 2 + 0.5 * np.cos(2 * np.pi * y[..., 0])
    tris = np.arange(len(layer.mesh.triangles))
    cm = layer.cell_mesh
    values = psi(cell_coordinates(layer, tris, element_data(layer.mesh, tris).xq))
    paired = two_scale_pair(layer, values, tris)
    ced = element_data(cm, np.arange(len(cm.triangles)))
    length = layer.sigma[1] - layer.sigma[0]
    exact = length * float(np.sum(psi(ced.xq) * ced.wq))
    return {"paired": paired, "exact": exact, "error": abs(paired - exact)}


def _modes(sigma) -> list:
    a, b = sigma
    return [lambda x, m=m: np.sin(m * np.pi * (x - a) / (b - a)) for m in range(1, N_MODES + 1)]


def _macro_integral(spaces, coef_rows: np.ndarray, phi, order: int = 0, kind: str = "p",
                    dt: float = 1.0) -> float:
    """``dt * sum_k int_sigma f_k phi`` for raw macro coefficient rows."""
    space = getattr(spaces, kind)
    xi, x, w = space.quadrature()
    total = 0.0
    ph = phi(x)
    for c in coef_rows:
        total += float(np.sum(space.evaluate(c, xi, order) * ph * w))
    return dt * total


def _pair_errors(micro: np.ndarray, macro: np.ndarray) -> float:
    scale = np.abs(macro).max()
    if scale == 0.0:
        return float(np.abs(micro - macro).max())
    return float(np.abs(micro - macro).max() / scale)


@dataclass
class StudyRow:
    epsilon: float
    e_p: float
    e_v: float
    e_u: float
    e_rec: float
    e_rec_p: float
    e_rec_v: float
    unfolding: float
    monitors: dict
    n_velocity: int

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("epsilon", "e_p", "e_v", "e_u", "e_rec",
                                             "e_rec_p", "e_rec_v", "unfolding", "n_velocity")}
        out.update({k: float(v) for k, v in self.monitors.items() if k != "epsilon"})
        return out


def compare_scale(layer: LayerGeometry, A: ElasticityTensor, forcing: MacroForcing,
                  macro: MacroTrajectory, cells: CellSolutionSet, coeffs: EffectiveCoefficients,
                  micro: MicroTrajectory | None = None) -> StudyRow:
    """All pairing and reconstruction errors at one ``eps``."""
    dt = float(macro.times[1] - macro.times[0]) if len(macro.times) > 1 else 1.0
    T = float(macro.times[-1])
    if micro is None:
        stepper = MicroStepper(layer, A, dt)
        micro = run_micro(stepper, micro_forcing(forcing, layer), T)
    st = micro.stepper
    if abs(st.dt - dt) > 1e-14 or len(micro.times) != len(macro.times):
        raise InputError("micro and macro runs use different time grids", "inconsistent-data")
    spaces = macro.spaces
    rec = Reconstructor(spaces, cells, coeffs, layer)
    ext = HarmonicExtension(st)
    V, Q = st.V, st.Q
    mesh = layer.mesh
    all_tris = np.arange(len(mesh.triangles))
    ft, stt = st.fluid_tris, st.solid_tris
    ed_s = rec.ed_s
    ed_f = rec.ed_f
    modes = _modes(layer.sigma)
    vf = coeffs.vol_f
    n = len(micro.times)

    pm = np.zeros((3, N_MODES))     # micro pairings of p, v2, u2
    err_u = norm_u = 0.0
    err_p = norm_p = err_v = norm_v = 0.0
    for k in range(1, n):
        w_raw = V.P @ micro.w[k]
        x_raw = V.P @ micro.X[k]
        u_ext = ext.extend(micro.X[k])
        uvals, _ = eval_field(V, u_ext, all_tris)
        for j, phi in enumerate(modes):
            pm[2, j] += dt * two_scale_pair(layer, uvals[..., 1], all_tris, phi)
        state = macro.state(k)
        prev = macro.state(k - 1)
        us, _ = eval_field(V, x_raw, stt)
        ua = rec.displacement(state)
        err_u += dt * float(np.einsum("tq,tqc->", ed_s.wq, (us - ua) ** 2))
        norm_u += dt * float(np.einsum("tq,tqc->", ed_s.wq, us ** 2))
        if ft.size:
            pv, _ = eval_field(Q, Q.P @ micro.p[k], ft)
            vv, _ = eval_field(V, w_raw, ft)
            for j, phi in enumerate(modes):
                pm[0, j] += dt * two_scale_pair(layer, pv[..., 0], ft, phi)
                pm[1, j] += dt * two_scale_pair(layer, vv[..., 1], ft, phi)
            pa = rec.pressure(state)
            va = rec.velocity(prev, state, dt, lambda x, t=macro.times[k]: forcing.f0(t, x))
            err_p += dt * float(np.sum(ed_f.wq * (pv[..., 0] - pa) ** 2))
            norm_p += dt * float(np.sum(ed_f.wq * pv[..., 0] ** 2))
            err_v += dt * float(np.einsum("tq,tqc->", ed_f.wq, (vv - va) ** 2))
            norm_v += dt * float(np.einsum("tq,tqc->", ed_f.wq, vv ** 2))

    pM = np.zeros((3, N_MODES))
    dW = np.diff(macro.w, axis=0) / dt
    for j, phi in enumerate(modes):
        pM[0, j] = vf * _macro_integral(spaces, macro.p[1:], phi, 0, "p", dt)
        pM[1, j] = vf * _macro_integral(spaces, dW, phi, 0, "w", dt)
        pM[2, j] = 2.0 * _macro_integral(spaces, macro.w[1:], phi, 0, "w", dt)

    def rel(e, nrm):
        return float(np.sqrt(e / nrm)) if nrm > 0 else float(np.sqrt(e))

    has_f = ft.size > 0
    return StudyRow(
        epsilon=layer.epsilon,
        e_p=_pair_errors(pm[0], pM[0]) if has_f else 0.0,
        e_v=_pair_errors(pm[1], pM[1]) if has_f else 0.0,
        e_u=_pair_errors(pm[2], pM[2]),
        e_rec=rel(err_u, norm_u),
        e_rec_p=rel(err_p, norm_p) if has_f else 0.0,
        e_rec_v=rel(err_v, norm_v) if has_f else 0.0,
        unfolding=unfolding_check(layer)["error"],
        monitors=apriori_monitors(micro, extension=ext),
        n_velocity=st.n_velocity,
    )


def convergence_study(eps_list, geometry: CellGeometry, cells: CellSolutionSet,
                      coeffs: EffectiveCoefficients, A: ElasticityTensor, forcing: MacroForcing,
                      macro: MacroTrajectory, dirichlet_sides=("a",)) -> list[StudyRow]:
    """Error table over a strictly decreasing list of ``eps``."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InputError("epsilon list must be strictly decreasing", "inconsistent-data")
    if tuple(forcing.sigma) != tuple(macro.spaces.sigma):
        raise InputError("forcing and macro run use different intervals", "inconsistent-data")
    rows = []
    for eps in eps_list:
        layer = extrude_layer_mesh(geometry, cells.mesh, forcing.sigma, eps, dirichlet_sides)
        rows.append(compare_scale(layer, A, forcing, macro, cells, coeffs))
    return rows


def trend_ratios(rows: list[StudyRow], key: str) -> list[float]:
    """Successive ratios ``value(eps_{i+1}) / value(eps_i)``."""
    vals = [getattr(r, key) if hasattr(r, key) else r.monitors[key] for r in rows]
    return [b / a if a > 0 else np.inf for a, b in zip(vals, vals[1:])]

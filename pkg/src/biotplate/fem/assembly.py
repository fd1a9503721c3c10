"""Vectorised element assembly for P1/P2 spaces.

All forms integrate with the degree-4 triangle rule and the 3-point edge
rule.  Matrices are returned on raw dofs; apply ``space.P`` to impose
periodicity and Dirichlet conditions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import AssemblyError
from .quadrature import EDGE_POINTS, EDGE_WEIGHTS, TRI_BARY, TRI_WEIGHTS
from .spaces import FunctionSpace


def basis_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Shape functions at barycentric points, shape (..., nloc)."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    if degree == 1:
        return np.stack([l0, l1, l2], axis=-1)
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ], axis=-1)


def basis_dlambda(degree: int, bary: np.ndarray) -> np.ndarray:
    """Derivatives of shape functions w.r.t. the three barycentrics, (..., nloc, 3)."""
    shape = bary.shape[:-1]
    if degree == 1:
        return np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    z = np.zeros(shape)
    rows = [
        [4 * l0 - 1, z, z],
        [z, 4 * l1 - 1, z],
        [z, z, 4 * l2 - 1],
        [4 * l1, 4 * l0, z],
        [z, 4 * l2, 4 * l1],
        [4 * l2, z, 4 * l0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


@dataclass
class ElementData:
    """Per-triangle affine data and quadrature for a triangle subset."""

    tris: np.ndarray
    area: np.ndarray          # (T,)
    grad_lambda: np.ndarray   # (T, 3, 2)
    xq: np.ndarray            # (T, Q, 2) physical quadrature points
    wq: np.ndarray            # (T, Q) physical weights
    bary: np.ndarray          # (Q, 3)


def element_data(mesh, tris: np.ndarray, bary: np.ndarray = TRI_BARY,
                 weights: np.ndarray = TRI_WEIGHTS) -> ElementData:
    p = mesh.nodes[mesh.triangles[tris]]  # (T, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 0):
        raise AssemblyError("degenerate or inverted triangle")
    # gradients of barycentrics: rows of inverse Jacobian
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grad = np.stack([-g1 - g2, g1, g2], axis=1)
    xq = np.einsum("qk,tkd->tqd", bary, p)
    area = 0.5 * det
    return ElementData(np.asarray(tris), area, grad, xq, area[:, None] * weights[None, :], bary)


def shape_gradients(degree: int, ed: ElementData) -> np.ndarray:
    """Physical gradients of shape functions, (T, Q, nloc, 2)."""
    dl = basis_dlambda(degree, ed.bary)  # (Q, nloc, 3)
    return np.einsum("qak,tkd->tqad", dl, ed.grad_lambda)


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    m = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def _tris(space: FunctionSpace, tris) -> np.ndarray:
    return space.tri_index if tris is None else np.asarray(tris)


def identity_tensor() -> np.ndarray:
    """Fourth-order identity on symmetric matrices: ``A D = D``."""
    d = np.eye(2)
    return 0.5 * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))


def assemble_elastic(space: FunctionSpace, A: np.ndarray, tris=None) -> sp.csr_matrix:
    """``int A D(u) : D(v)`` for a vector space; ``A`` has all minor symmetries."""
    if space.ncomp != 2:
        raise AssemblyError("elastic form needs a vector space", "incompatible-space-form")
    tris = _tris(space, tris)
    ed = element_data(space.mesh, tris)
    G = shape_gradients(space.degree, ed)
    loc = np.einsum("cjdl,tqaj,tqbl,tq->tacbd", A, G, G, ed.wq)
    n = space.nloc * 2
    loc = loc.reshape(len(tris), n, n)
    dofs = space.elem_dofs(tris)
    return _scatter(dofs, dofs, loc, (space.n_raw, space.n_raw))


def assemble_viscous(space: FunctionSpace, tris=None) -> sp.csr_matrix:
    """``int D(u) : D(v)``."""
    return assemble_elastic(space, identity_tensor(), tris)


def assemble_mass(space: FunctionSpace, coef: float = 1.0, tris=None) -> sp.csr_matrix:
    """``int coef u . v`` (componentwise for vector spaces)."""
    tris = _tris(space, tris)
    ed = element_data(space.mesh, tris)
    phi = basis_values(space.degree, ed.bary)  # (Q, nloc)
    loc = coef * np.einsum("qa,qb,tq->tab", phi, phi, ed.wq)
    if space.ncomp == 2:
        loc = np.einsum("tab,cd->tacbd", loc, np.eye(2)).reshape(len(tris), space.nloc * 2, -1)
    dofs = space.elem_dofs(tris)
    return _scatter(dofs, dofs, loc, (space.n_raw, space.n_raw))


def assemble_stiffness(space: FunctionSpace, tris=None) -> sp.csr_matrix:
    """``int grad u : grad v`` (componentwise Laplacian)."""
    tris = _tris(space, tris)
    ed = element_data(space.mesh, tris)
    G = shape_gradients(space.degree, ed)
    loc = np.einsum("tqad,tqbd,tq->tab", G, G, ed.wq)
    if space.ncomp == 2:
        loc = np.einsum("tab,cd->tacbd", loc, np.eye(2)).reshape(len(tris), space.nloc * 2, -1)
    dofs = space.elem_dofs(tris)
    return _scatter(dofs, dofs, loc, (space.n_raw, space.n_raw))


def assemble_divergence(vspace: FunctionSpace, pspace: FunctionSpace, tris=None) -> sp.csr_matrix:
    """``B[q, u] = int q div(u)`` over the pressure space's triangles."""
    if vspace.ncomp != 2 or pspace.ncomp != 1:
        raise AssemblyError("div coupling needs vector velocity, scalar pressure",
                            "incompatible-space-form")
    tris = _tris(pspace, tris)
    ed = element_data(vspace.mesh, tris)
    G = shape_gradients(vspace.degree, ed)          # (T, Q, a, 2)
    psi = basis_values(pspace.degree, ed.bary)      # (Q, p)
    loc = np.einsum("qp,tqad,tq->tpad", psi, G, ed.wq).reshape(len(tris), pspace.nloc, -1)
    return _scatter(pspace.elem_dofs(tris), vspace.elem_dofs(tris), loc,
                    (pspace.n_raw, vspace.n_raw))


def assemble_gradient(pspace: FunctionSpace, vspace: FunctionSpace, tris=None) -> sp.csr_matrix:
    """``G[u, q] = int grad(q) . u``; equals ``-B.T`` up to boundary terms."""
    tris = _tris(pspace, tris)
    ed = element_data(vspace.mesh, tris)
    Gp = shape_gradients(pspace.degree, ed)         # (T, Q, p, 2)
    phi = basis_values(vspace.degree, ed.bary)      # (Q, a)
    loc = np.einsum("qa,tqpd,tq->tadp", phi, Gp, ed.wq).reshape(len(tris), -1, pspace.nloc)
    return _scatter(vspace.elem_dofs(tris), pspace.elem_dofs(tris), loc,
                    (vspace.n_raw, pspace.n_raw))


def assemble_load(space: FunctionSpace, func, tris=None) -> np.ndarray:
    """``int f . v`` with ``func(x: (T, Q, 2)) -> (T, Q)`` or ``(T, Q, ncomp)``."""
    tris = _tris(space, tris)
    out = np.zeros(space.n_raw)
    if len(tris) == 0:
        return out
    ed = element_data(space.mesh, tris)
    f = np.asarray(func(ed.xq), dtype=float).reshape(len(tris), -1, space.ncomp)
    phi = basis_values(space.degree, ed.bary)
    loc = np.einsum("qa,tqc,tq->tac", phi, f, ed.wq).reshape(len(tris), -1)
    np.add.at(out, space.elem_dofs(tris), loc)
    return out


def assemble_stress_load(space: FunctionSpace, stress, tris=None) -> np.ndarray:
    """``int S : grad v`` for a vector space; ``stress`` is (2, 2) or a callable
    ``x -> (T, Q, 2, 2)``."""
    tris = _tris(space, tris)
    ed = element_data(space.mesh, tris)
    G = shape_gradients(space.degree, ed)
    if callable(stress):
        S = np.asarray(stress(ed.xq), dtype=float)
    else:
        S = np.broadcast_to(np.asarray(stress, dtype=float), ed.xq.shape[:2] + (2, 2))
    loc = np.einsum("tqcj,tqaj,tq->tac", S, G, ed.wq).reshape(len(tris), -1)
    out = np.zeros(space.n_raw)
    np.add.at(out, space.elem_dofs(tris), loc)
    return out


# ----------------------------------------------------------------------
# edges
@dataclass
class EdgeData:
    edges: np.ndarray       # boundary-edge indices
    tris: np.ndarray        # owning triangle
    bary: np.ndarray        # (E, Q, 3) barycentrics in the owning triangle
    xq: np.ndarray          # (E, Q, 2)
    wq: np.ndarray          # (E, Q)
    normal: np.ndarray      # (E, 2) outward from the owning triangle


def edge_data(mesh, edge_idx: np.ndarray) -> EdgeData:
    edge_idx = np.asarray(edge_idx, dtype=np.int64)
    ev = mesh.boundary_edges[edge_idx]
    tris = mesh.edge_tris[edge_idx]
    tv = mesh.triangles[tris]
    ia = np.argmax(tv == ev[:, :1], axis=1)
    ib = np.argmax(tv == ev[:, 1:2], axis=1)
    if not (np.all(tv[np.arange(len(tv)), ia] == ev[:, 0])
            and np.all(tv[np.arange(len(tv)), ib] == ev[:, 1])):
        raise AssemblyError("boundary edge not found in its triangle")
    s = EDGE_POINTS
    bary = np.zeros((len(ev), s.size, 3))
    rows = np.arange(len(ev))[:, None]
    bary[rows, np.arange(s.size)[None, :], ia[:, None]] = 1.0 - s[None, :]
    bary[rows, np.arange(s.size)[None, :], ib[:, None]] += s[None, :]
    pa, pb = mesh.nodes[ev[:, 0]], mesh.nodes[ev[:, 1]]
    t = pb - pa
    length = np.linalg.norm(t, axis=1)
    n = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    third = mesh.nodes[tv].sum(axis=1) - pa - pb
    flip = np.sum((third - pa) * n, axis=1) > 0
    n[flip] *= -1.0
    xq = pa[:, None, :] + s[None, :, None] * t[:, None, :]
    return EdgeData(edge_idx, tris, bary, xq, length[:, None] * EDGE_WEIGHTS[None, :], n)


def assemble_edge_load(space: FunctionSpace, edge_idx: np.ndarray, func) -> np.ndarray:
    """``int_edges g . v`` with ``func(x: (E, Q, 2), normal: (E, 2)) -> (E, Q, ncomp)``."""
    out = np.zeros(space.n_raw)
    if len(edge_idx) == 0:
        return out
    ed = edge_data(space.mesh, edge_idx)
    g = np.asarray(func(ed.xq, ed.normal), dtype=float).reshape(len(ed.tris), -1, space.ncomp)
    phi = basis_values(space.degree, ed.bary)  # (E, Q, nloc)
    loc = np.einsum("eqa,eqc,eq->eac", phi, g, ed.wq).reshape(len(ed.tris), -1)
    np.add.at(out, space.elem_dofs(ed.tris), loc)
    return out


# ----------------------------------------------------------------------
# field evaluation
def eval_field(space: FunctionSpace, x_raw: np.ndarray, tris, bary=TRI_BARY):
    """Values (T, Q, ncomp) and gradients (T, Q, ncomp, 2) at barycentric points."""
    tris = np.asarray(tris)
    ed = element_data(space.mesh, tris, bary, np.ones(len(bary)))
    coef = x_raw[space.elem_dofs(tris)].reshape(len(tris), space.nloc, space.ncomp)
    phi = basis_values(space.degree, bary)
    G = shape_gradients(space.degree, ed)
    vals = np.einsum("qa,tac->tqc", phi, coef)
    grads = np.einsum("tqad,tac->tqcd", G, coef)
    return vals, grads


def eval_edge_field(space: FunctionSpace, x_raw: np.ndarray, ed: EdgeData) -> np.ndarray:
    coef = x_raw[space.elem_dofs(ed.tris)].reshape(len(ed.tris), space.nloc, space.ncomp)
    phi = basis_values(space.degree, ed.bary)
    return np.einsum("eqa,eac->eqc", phi, coef)


def sym(g: np.ndarray) -> np.ndarray:
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def integrate_functional(space: FunctionSpace | None, fields: tuple = (), integrand: str = "one",
                         region=None, *, mesh=None, tensor: np.ndarray | None = None):
    """Integrate a named functional over a triangle set or an edge set.

    Parameters
    ----------
    space : FunctionSpace or None
        Space of ``fields``; may be ``None`` for purely geometric integrands.
    fields : tuple of raw vectors
    integrand : str
        Triangle integrands: ``"one"``, ``"y2"``, ``"value"`` (``int u``),
        ``"energy"`` (``int A D(u) : D(v)``, identity ``A`` by default).
        Edge integrands: ``"normal"`` (``int nu``), ``"flux"`` (``int u . nu``).
    region : ("tris", idx) or ("edges", idx)
    """
    mesh = space.mesh if space is not None else mesh
    kind, idx = region
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise AssemblyError(f"integration region for {integrand!r} is empty", "region-empty")
    if kind == "edges":
        ed = edge_data(mesh, idx)
        if integrand == "normal":
            return np.einsum("eq,ed->d", ed.wq, ed.normal)
        if integrand == "flux":
            u = eval_edge_field(space, fields[0], ed)
            return float(np.einsum("eq,eqd,ed->", ed.wq, u, ed.normal))
        raise AssemblyError(f"unknown edge integrand {integrand!r}")
    ed = element_data(mesh, idx)
    if integrand == "one":
        return float(ed.wq.sum())
    if integrand == "y2":
        return float(np.sum(ed.wq * ed.xq[..., 1]))
    if integrand == "value":
        vals, _ = eval_field(space, fields[0], idx)
        return np.einsum("tq,tqc->c", ed.wq, vals)
    if integrand == "energy":
        A = identity_tensor() if tensor is None else tensor
        _, gu = eval_field(space, fields[0], idx)
        _, gv = eval_field(space, fields[-1], idx)
        return float(np.einsum("ijkl,tqkl,tqij,tq->", A, sym(gu), sym(gv), ed.wq))
    raise AssemblyError(f"unknown integrand {integrand!r}")

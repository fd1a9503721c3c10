"""One-dimensional P1 and Hermite-cubic spaces on an interval mesh.

The Hermite space carries (value, slope) per node and is H^2 conforming,
which is what the clamped plate equation needs.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import AssemblyError
from .quadrature import gauss_interval

N_GAUSS = 5


def p1_basis(xi: np.ndarray, length: np.ndarray, order: int) -> np.ndarray:
    """P1 shape functions (E, Q, 2) or their derivative."""
    E = length.size
    if order == 0:
        b = np.stack([1.0 - xi, xi], axis=-1)
        return np.broadcast_to(b, (E,) + b.shape).copy()
    if order == 1:
        d = np.stack([-np.ones_like(xi), np.ones_like(xi)], axis=-1)
        return d[None] / length[:, None, None]
    return np.zeros((E, xi.size, 2))


def hermite_basis(xi: np.ndarray, length: np.ndarray, order: int) -> np.ndarray:
    """Cubic Hermite shape functions (E, Q, 4) ordered (w0, s0, w1, s1)."""
    L = length[:, None]
    x = xi[None, :]
    if order == 0:
        b = [1 - 3 * x**2 + 2 * x**3, L * (x - 2 * x**2 + x**3),
             3 * x**2 - 2 * x**3, L * (-x**2 + x**3)]
    elif order == 1:
        b = [(-6 * x + 6 * x**2) / L, (1 - 4 * x + 3 * x**2) + 0 * L,
             (6 * x - 6 * x**2) / L, (-2 * x + 3 * x**2) + 0 * L]
    elif order == 2:
        b = [(-6 + 12 * x) / L**2, (-4 + 6 * x) / L,
             (6 - 12 * x) / L**2, (-2 + 6 * x) / L]
    else:
        raise AssemblyError(f"derivative order {order} not available")
    return np.stack(np.broadcast_arrays(*b), axis=-1)


def _pointwise_basis(kind: str, xi: np.ndarray, L: np.ndarray, order: int) -> np.ndarray:
    """Shape functions (N, nloc) at one reference point per entry of ``xi``."""
    if kind == "p1":
        if order == 0:
            return np.stack([1.0 - xi, xi], axis=-1)
        if order == 1:
            return np.stack([-1.0 / L, 1.0 / L], axis=-1)
        return np.zeros((xi.size, 2))
    out = np.empty((xi.size, 4))
    for e in np.unique(L):
        sel = L == e
        out[sel] = hermite_basis(xi[sel], np.array([e]), order)[0]
    return out


class IntervalSpace:
    """P1 (``kind="p1"``) or Hermite (``kind="hermite"``) space on 1D nodes.

    ``fixed`` lists raw dofs eliminated as homogeneous Dirichlet data.
    """

    def __init__(self, nodes: np.ndarray, kind: str, fixed=()):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise AssemblyError("interval nodes must be strictly increasing")
        if kind not in ("p1", "hermite"):
            raise AssemblyError(f"unknown interval element {kind!r}")
        self.nodes = nodes
        self.kind = kind
        ne = nodes.size - 1
        self.length = np.diff(nodes)
        if kind == "p1":
            self.n_raw = nodes.size
            self.elem_dofs = np.column_stack([np.arange(ne), np.arange(1, ne + 1)])
        else:
            self.n_raw = 2 * nodes.size
            i = np.arange(ne)
            self.elem_dofs = np.column_stack([2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3])
        mask = np.ones(self.n_raw, dtype=bool)
        mask[list(fixed)] = False
        self.free = np.flatnonzero(mask)
        self.n_free = self.free.size
        self.P = sp.csr_matrix((np.ones(self.n_free), (self.free, np.arange(self.n_free))),
                               shape=(self.n_raw, self.n_free))

    def basis(self, xi: np.ndarray, order: int) -> np.ndarray:
        if self.kind == "p1":
            return p1_basis(xi, self.length, order)
        return hermite_basis(xi, self.length, order)

    def quadrature(self, npts: int = N_GAUSS):
        xi, w = gauss_interval(npts)
        x = self.nodes[:-1, None] + self.length[:, None] * xi[None, :]
        return xi, x, self.length[:, None] * w[None, :]

    def evaluate(self, coef_raw: np.ndarray, xi: np.ndarray, order: int = 0) -> np.ndarray:
        """Field values (E, Q) at reference points of every element."""
        return np.einsum("eqa,ea->eq", self.basis(xi, order), coef_raw[self.elem_dofs])

    def evaluate_at(self, coef_raw: np.ndarray, x: np.ndarray, order: int = 0) -> np.ndarray:
        """Field values at arbitrary points of the interval."""
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        e = np.clip(np.searchsorted(self.nodes, flat, side="right") - 1, 0, self.length.size - 1)
        xi = (flat - self.nodes[e]) / self.length[e]
        out = np.empty(flat.size)
        for k in np.unique(e):
            sel = e == k
            b = self.basis_single(k, xi[sel], order)
            out[sel] = b @ coef_raw[self.elem_dofs[k]]
        return out.reshape(x.shape)

    def eval_matrix(self, x: np.ndarray, order: int = 0) -> sp.csr_matrix:
        """Sparse matrix mapping raw coefficients to values at the points ``x``."""
        flat = np.asarray(x, dtype=float).ravel()
        e = np.clip(np.searchsorted(self.nodes, flat, side="right") - 1, 0, self.length.size - 1)
        xi = (flat - self.nodes[e]) / self.length[e]
        b = _pointwise_basis(self.kind, xi, self.length[e], order)
        rows = np.repeat(np.arange(flat.size), b.shape[-1])
        return sp.csr_matrix((b.ravel(), (rows, self.elem_dofs[e].ravel())),
                             shape=(flat.size, self.n_raw))

    def basis_single(self, e: int, xi: np.ndarray, order: int) -> np.ndarray:
        L = self.length[e:e + 1]
        if self.kind == "p1":
            return p1_basis(xi, L, order)[0]
        return hermite_basis(xi, L, order)[0]

    def interpolate(self, f, df=None) -> np.ndarray:
        """Nodal interpolant; Hermite needs the derivative ``df`` too."""
        if self.kind == "p1":
            return np.asarray(f(self.nodes), dtype=float)
        out = np.empty(self.n_raw)
        out[0::2] = f(self.nodes)
        out[1::2] = df(self.nodes)
        return out


def assemble_1d(test: IntervalSpace, trial: IntervalSpace, test_order: int, trial_order: int,
                coef: float = 1.0) -> sp.csr_matrix:
    """``int coef D^a(test_i) D^b(trial_j)`` on raw dofs (rows: test)."""
    if test.nodes.size != trial.nodes.size or np.any(test.nodes != trial.nodes):
        raise AssemblyError("interval spaces live on different meshes", "mismatched-mesh")
    xi, _, w = test.quadrature()
    bt = test.basis(xi, test_order)
    bs = trial.basis(xi, trial_order)
    loc = coef * np.einsum("eqa,eqb,eq->eab", bt, bs, w)
    r = np.broadcast_to(test.elem_dofs[:, :, None], loc.shape).ravel()
    c = np.broadcast_to(trial.elem_dofs[:, None, :], loc.shape).ravel()
    return sp.coo_matrix((loc.ravel(), (r, c)), shape=(test.n_raw, trial.n_raw)).tocsr()


def assemble_1d_load(space: IntervalSpace, func, order: int = 0) -> np.ndarray:
    """``int f D^a(v)`` with ``func(x: (E, Q)) -> (E, Q)``."""
    xi, x, w = space.quadrature()
    f = np.broadcast_to(np.asarray(func(x), dtype=float), x.shape)
    loc = np.einsum("eqa,eq,eq->ea", space.basis(xi, order), f, w)
    out = np.zeros(space.n_raw)
    np.add.at(out, space.elem_dofs, loc)
    return out

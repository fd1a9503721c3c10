"""Lagrange spaces on triangle meshes with periodic and Dirichlet constraints.

Degrees of freedom are numbered in two layers.  *Raw* dofs are one per
(space node, component), interleaved as ``ncomp * node + comp``.  *Free*
dofs are what remains after identifying periodic slaves with their masters
and dropping Dirichlet dofs; the sparse prolongation ``P`` (raw x free)
maps free coefficients to raw ones, so constrained operators are
``P.T @ A @ P``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import AssemblyError
from ..geometry import PeriodicMesh

# local P2 order: vertices 0, 1, 2 then midpoints of edges 01, 12, 20
P2_EDGES = ((0, 1), (1, 2), (2, 0))


def _p2_numbering(mesh: PeriodicMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Global P2 node layout: (elem_nodes, coords, edge_vertices)."""
    tris = mesh.triangles
    nv = mesh.n_nodes
    loc = np.stack([tris[:, [i, j]] for i, j in P2_EDGES], axis=1)  # (T, 3, 2)
    lo = loc.min(axis=2)
    hi = loc.max(axis=2)
    keys = (lo * nv + hi).ravel()
    uniq, inv = np.unique(keys, return_inverse=True)
    edge_v = np.column_stack([uniq // nv, uniq % nv])
    elem = np.hstack([tris, nv + inv.reshape(-1, 3)])
    coords = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[edge_v[:, 0]] + mesh.nodes[edge_v[:, 1]])])
    return elem, coords, edge_v


class FunctionSpace:
    """Continuous P1/P2 space, scalar or 2-vector, on a subset of triangles.

    Parameters
    ----------
    mesh : PeriodicMesh
        Underlying triangulation.
    degree : int
        1 or 2.
    ncomp : int
        1 (scalar) or 2 (vector).
    region : int or None
        Restrict to triangles with this tag; ``None`` keeps all triangles.
    periodic : bool
        Identify right-boundary dofs with left-boundary dofs.
    dirichlet_tags : sequence of int
        Boundary edge tags whose nodes are fixed to zero (all components).
    """

    def __init__(
        self,
        mesh: PeriodicMesh,
        degree: int,
        ncomp: int = 1,
        region: int | None = None,
        periodic: bool = False,
        dirichlet_tags: tuple[int, ...] = (),
    ):
        if degree not in (1, 2) or ncomp not in (1, 2):
            raise AssemblyError(f"unsupported element P{degree} x {ncomp}")
        self.mesh = mesh
        self.degree = degree
        self.ncomp = ncomp
        self.region = region
        self.periodic = periodic
        self.dirichlet_tags = tuple(dirichlet_tags)

        if region is None:
            self.tri_index = np.arange(len(mesh.triangles))
        else:
            self.tri_index = np.flatnonzero(mesh.tri_tags == region)
        self.tri_pos = np.full(len(mesh.triangles), -1, dtype=np.int64)
        self.tri_pos[self.tri_index] = np.arange(self.tri_index.size)

        if degree == 2:
            elem, coords, edge_v = _p2_numbering(mesh)
            self._edge_keys = edge_v[:, 0] * mesh.n_nodes + edge_v[:, 1]
        else:
            elem, coords, edge_v = mesh.triangles.copy(), mesh.nodes, None
        elem = elem[self.tri_index]
        used = np.unique(elem)
        compact = np.full(len(coords), -1, dtype=np.int64)
        compact[used] = np.arange(used.size)
        self.global_node = used  # mesh-level node id of each space node
        self.elem_nodes = compact[elem]
        self.coords = coords[used]
        self.n_nodes = used.size
        self.nloc = self.elem_nodes.shape[1]
        self.n_raw = self.n_nodes * ncomp

        # periodic canonical node
        canon = np.arange(len(coords))
        if periodic and len(mesh.periodic_pairs):
            nv = mesh.n_nodes
            canon[mesh.periodic_pairs[:, 1]] = mesh.periodic_pairs[:, 0]
            if degree == 2:
                vcanon = canon[:nv]
                ckey = np.minimum(vcanon[edge_v[:, 0]], vcanon[edge_v[:, 1]]) * nv + np.maximum(
                    vcanon[edge_v[:, 0]], vcanon[edge_v[:, 1]])
                own = edge_v[:, 0] * nv + edge_v[:, 1]
                lookup = dict(zip(own.tolist(), range(len(own))))
                moved = np.flatnonzero(ckey != own)
                for e in moved:
                    m = lookup.get(int(ckey[e]))
                    if m is not None:
                        canon[nv + e] = nv + m
        node_canon = compact[canon[used]]
        if np.any(node_canon < 0):
            raise AssemblyError("periodic master outside the space region")

        # Dirichlet nodes
        fixed_node = np.zeros(self.n_nodes, dtype=bool)
        if self.dirichlet_tags:
            fixed_node[self.nodes_on_edges(self.dirichlet_tags)] = True
        fixed_node[node_canon[fixed_node]] = True
        fixed_node |= fixed_node[node_canon]

        raw_canon = (node_canon[:, None] * ncomp + np.arange(ncomp)).ravel()
        raw_fixed = np.repeat(fixed_node, ncomp)
        masters = np.flatnonzero((raw_canon == np.arange(self.n_raw)) & ~raw_fixed)
        free_id = np.full(self.n_raw, -1, dtype=np.int64)
        free_id[masters] = np.arange(masters.size)
        col = free_id[raw_canon]
        col[raw_fixed] = -1
        rows = np.flatnonzero(col >= 0)
        self.n_free = masters.size
        self.free_of_raw = col
        self.fixed = raw_fixed
        self.P = sp.csr_matrix(
            (np.ones(rows.size), (rows, col[rows])), shape=(self.n_raw, self.n_free)
        )

    # ------------------------------------------------------------------
    def elem_dofs(self, tris: np.ndarray | None = None) -> np.ndarray:
        """Raw dofs per active triangle, local basis major, component minor."""
        en = self.elem_nodes if tris is None else self.elem_nodes[self.local_tris(tris)]
        c = self.ncomp
        return (en[:, :, None] * c + np.arange(c)).reshape(len(en), -1)

    def local_tris(self, tris: np.ndarray) -> np.ndarray:
        pos = self.tri_pos[np.asarray(tris)]
        if np.any(pos < 0):
            raise AssemblyError("triangle outside the space region")
        return pos

    def nodes_on_edges(self, tags: tuple[int, ...]) -> np.ndarray:
        """Space nodes lying on boundary edges with the given tags."""
        mesh = self.mesh
        ev = mesh.boundary_edges[mesh.edges_with(*tags)]
        gid = [ev[:, 0], ev[:, 1]]
        if self.degree == 2 and len(ev):
            nv = mesh.n_nodes
            keys = np.minimum(ev[:, 0], ev[:, 1]) * nv + np.maximum(ev[:, 0], ev[:, 1])
            gid.append(nv + np.searchsorted(self._edge_keys, keys))
        return np.unique(self._compact(np.concatenate(gid)))

    def _compact(self, gid: np.ndarray) -> np.ndarray:
        """Space node ids of mesh-level node ids, dropping those outside."""
        pos = np.clip(np.searchsorted(self.global_node, gid), 0, max(self.n_nodes - 1, 0))
        return pos[self.global_node[pos] == gid]

    # ------------------------------------------------------------------
    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Raw coefficient vector from free coefficients (fixed dofs zero)."""
        return self.P @ x_free

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant as a raw vector; ``func(xy) -> (N,)`` or ``(N, 2)``."""
        vals = np.asarray(func(self.coords), dtype=float)
        return vals.reshape(self.n_nodes, self.ncomp).ravel()

    def component(self, x_raw: np.ndarray, c: int) -> np.ndarray:
        return x_raw.reshape(self.n_nodes, self.ncomp)[:, c]

"""Reference cell, periodic cell meshes and the replicated thin layer.

The reference cell is ``Z = (0, 1) x (-1, 1)``.  Its fluid part is described
by a small parametric family, its solid part is the complement.  Meshes are
interface conforming, their left/right node sets match exactly after a unit
shift in ``y1`` so periodicity is imposed by identifying degrees of freedom.

The thin layer over ``Sigma = (a, b)`` is the union of ``(b - a)/eps``
translated copies of the cell mesh scaled by ``eps``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GeometryError, MeshingError

FLUID = 0
SOLID = 1

# boundary edge tags
GAMMA = 0
TOP = 1
BOTTOM = 2
LEFT = 3
RIGHT = 4
SOLID_DIRICHLET = 5
FLUID_DIRICHLET = 6
FLUID_NEUMANN = 7

EDGE_TAG_NAMES = {
    GAMMA: "gamma",
    TOP: "top",
    BOTTOM: "bottom",
    LEFT: "left",
    RIGHT: "right",
    SOLID_DIRICHLET: "solid_dirichlet",
    FLUID_DIRICHLET: "fluid_dirichlet",
    FLUID_NEUMANN: "fluid_neumann",
}
EDGE_TAG_CODES = {v: k for k, v in EDGE_TAG_NAMES.items()}
REGION_NAMES = {FLUID: "fluid", SOLID: "solid"}
REGION_CODES = {v: k for k, v in REGION_NAMES.items()}

FAMILIES = ("cavity", "channel", "solid")
_GEOM_TOL = 1e-12


@dataclass(frozen=True)
class CellGeometry:
    """Parametric fluid/solid partition of the reference cell.

    Parameters
    ----------
    family : str
        ``"cavity"`` (disk, ``center`` and ``radius``), ``"channel"``
        (band ``lower < y2 < upper``) or ``"solid"`` (no fluid at all).
    params : dict
        Family parameters.
    clearance : float
        Distance between the closed fluid region and the top/bottom faces.
    """

    family: str
    params: dict
    clearance: float

    @property
    def fluid_area(self) -> float:
        """Exact measure of the fluid region."""
        if self.family == "cavity":
            return math.pi * self.params["radius"] ** 2
        if self.family == "channel":
            return self.params["upper"] - self.params["lower"]
        return 0.0

    @property
    def fluid_moment(self) -> float:
        """Exact first ``y2`` moment of the fluid region."""
        if self.family == "cavity":
            return self.params["center"][1] * self.fluid_area
        if self.family == "channel":
            lo, hi = self.params["lower"], self.params["upper"]
            return 0.5 * (hi * hi - lo * lo)
        return 0.0

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for key, val in self.params.items():
            out[key] = list(val) if isinstance(val, tuple) else val
        return out


def build_cell_geometry(family: str, **params) -> CellGeometry:
    """Validate parameters and return a :class:`CellGeometry`.

    Raises
    ------
    GeometryError
        ``geometry-touches-top-bottom`` if the fluid reaches ``y2 = +-1``,
        ``degenerate-region`` for empty or inverted regions.
    """
    required = {"cavity": ("center", "radius"), "channel": ()}.get(family, ())
    missing = [k for k in required if k not in params]
    if family == "channel" and "band" not in params and not {"lower", "upper"} <= set(params):
        missing.append("band")
    if missing:
        raise GeometryError(f"{family} geometry needs parameter {missing[0]!r}", "missing-parameter")
    if family == "cavity":
        c1, c2 = (float(v) for v in params["center"])
        r = float(params["radius"])
        if r <= 0.0:
            raise GeometryError(f"cavity radius {r} must be positive", "degenerate-region")
        clearance = 1.0 - abs(c2) - r
        if clearance <= 0.0:
            raise GeometryError(
                f"cavity (center {c1, c2}, radius {r}) reaches the top/bottom faces",
                "geometry-touches-top-bottom",
            )
        if r >= min(c1, 1.0 - c1):
            raise GeometryError(
                f"cavity radius {r} crosses the lateral cell boundary", "degenerate-region"
            )
        return CellGeometry("cavity", {"center": (c1, c2), "radius": r}, clearance)
    if family == "channel":
        lo, hi = (float(v) for v in params["band"]) if "band" in params else (
            float(params["lower"]), float(params["upper"]))
        if lo >= hi:
            raise GeometryError(f"channel band ({lo}, {hi}) is empty", "degenerate-region")
        clearance = min(lo + 1.0, 1.0 - hi)
        if clearance <= 0.0:
            raise GeometryError(
                f"channel band ({lo}, {hi}) reaches the top/bottom faces",
                "geometry-touches-top-bottom",
            )
        return CellGeometry("channel", {"lower": lo, "upper": hi}, clearance)
    if family == "solid":
        return CellGeometry("solid", {}, 1.0)
    raise GeometryError(f"unknown geometry family {family!r}", "unknown-family")


@dataclass
class PeriodicMesh:
    """Triangulation with subdomain and boundary tags.

    ``edge_tris`` stores, for every boundary edge, the adjacent triangle;
    for interface edges this is the solid neighbour so the outward solid
    normal can be recovered.  ``periodic_pairs`` holds (left, right) vertex
    pairs; it is empty for layer meshes.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    tri_tags: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    edge_tris: np.ndarray
    periodic_pairs: np.ndarray
    solid_components: np.ndarray
    h: float
    _hash: str | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_solid_components(self) -> int:
        comp = self.solid_components
        return int(comp.max()) + 1 if comp.size and comp.max() >= 0 else 0

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_area(self, tag: int | None = None) -> float:
        a = self.areas()
        if tag is None:
            return float(a.sum())
        return float(a[self.tri_tags == tag].sum())

    def edges_with(self, *tags: int) -> np.ndarray:
        """Indices of boundary edges carrying any of ``tags``."""
        return np.flatnonzero(np.isin(self.edge_tags, tags))

    def hash(self) -> str:
        """Stable content hash used to key cached results."""
        if self._hash is None:
            m = hashlib.sha256()
            m.update(np.round(self.nodes, 12).astype(np.float64).tobytes())
            m.update(self.triangles.astype(np.int64).tobytes())
            m.update(self.tri_tags.astype(np.int64).tobytes())
            self._hash = m.hexdigest()[:16]
        return self._hash

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "triangles": [
                [int(i), int(j), int(k), REGION_NAMES[int(t)]]
                for (i, j, k), t in zip(self.triangles, self.tri_tags)
            ],
            "periodic_pairs": self.periodic_pairs.tolist(),
            "boundary_edges": [
                [int(i), int(j), EDGE_TAG_NAMES[int(t)]]
                for (i, j), t in zip(self.boundary_edges, self.edge_tags)
            ],
            "h": self.h,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicMesh":
        nodes = np.asarray(data["nodes"], dtype=float)
        tris = np.array([t[:3] for t in data["triangles"]], dtype=np.int64)
        tags = np.array([REGION_CODES[t[3]] for t in data["triangles"]], dtype=np.int64)
        edges = np.array([e[:2] for e in data["boundary_edges"]], dtype=np.int64).reshape(-1, 2)
        etags = np.array([EDGE_TAG_CODES[e[2]] for e in data["boundary_edges"]], dtype=np.int64)
        pairs = np.asarray(data.get("periodic_pairs", []), dtype=np.int64).reshape(-1, 2)
        return _finalize(nodes, tris, tags, pairs, float(data.get("h", 0.0)), edges, etags)


def _edge_key(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    return np.minimum(a, b) * n + np.maximum(a, b)


def _all_edges(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local edge vertex pairs (T, 3, 2) in the order (01, 12, 20)."""
    loc = tris[:, [[0, 1], [1, 2], [2, 0]]]
    return loc[..., 0], loc[..., 1]


def _solid_components(tris, tags, pairs, n_nodes) -> np.ndarray:
    canon = np.arange(n_nodes)
    if len(pairs):
        canon[pairs[:, 1]] = pairs[:, 0]
    solid = np.flatnonzero(tags == SOLID)
    comp = np.full(len(tris), -1, dtype=np.int64)
    if solid.size == 0:
        return comp
    a, b = _all_edges(canon[tris[solid]])
    keys = _edge_key(a, b, n_nodes).ravel()
    owner = np.repeat(np.arange(solid.size), 3)
    order = np.argsort(keys, kind="stable")
    ks, os_ = keys[order], owner[order]
    same = ks[1:] == ks[:-1]
    rows, cols = os_[1:][same], os_[:-1][same]
    g = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(solid.size, solid.size))
    _, labels = connected_components(g, directed=False)
    # relabel in order of first appearance so numbering is deterministic
    _, first = np.unique(labels, return_index=True)
    remap = np.empty_like(labels)
    remap[labels[np.sort(first)]] = np.arange(first.size)
    comp[solid] = remap[labels]
    return comp


def _boundary_edges(nodes, tris, tags, xlim=(0.0, 1.0), ylim=(-1.0, 1.0)):
    """Detect domain boundary and interface edges and tag them geometrically."""
    n = len(nodes)
    a, b = _all_edges(tris)
    keys = _edge_key(a, b, n).ravel()
    owner = np.repeat(np.arange(len(tris)), 3)
    va, vb = a.ravel(), b.ravel()
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    uniq, start, counts = np.unique(ks, return_index=True, return_counts=True)
    edges, etags, etris = [], [], []
    tol = 1e-9
    for s, c in zip(start, counts):
        i0 = order[s]
        if c == 1:
            p, q = nodes[va[i0]], nodes[vb[i0]]
            mid = 0.5 * (p + q)
            if abs(mid[1] - ylim[1]) < tol:
                t = TOP
            elif abs(mid[1] - ylim[0]) < tol:
                t = BOTTOM
            elif abs(mid[0] - xlim[0]) < tol:
                t = LEFT
            elif abs(mid[0] - xlim[1]) < tol:
                t = RIGHT
            else:
                raise MeshingError("boundary edge off the cell boundary", "untagged-edge")
            edges.append((va[i0], vb[i0]))
            etags.append(t)
            etris.append(owner[i0])
        else:
            i1 = order[s + 1]
            t0, t1 = owner[i0], owner[i1]
            if tags[t0] != tags[t1]:
                solid_t = t0 if tags[t0] == SOLID else t1
                k = i0 if solid_t == t0 else i1
                edges.append((va[k], vb[k]))
                etags.append(GAMMA)
                etris.append(solid_t)
    return (np.array(edges, dtype=np.int64).reshape(-1, 2),
            np.array(etags, dtype=np.int64), np.array(etris, dtype=np.int64))


def _finalize(nodes, tris, tags, pairs, h, edges=None, etags=None) -> PeriodicMesh:
    tris = np.asarray(tris, dtype=np.int64)
    # counter-clockwise orientation
    p = nodes[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = det < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    e, et, etr = _boundary_edges(nodes, tris, tags)
    if edges is not None and len(edges) != len(e):
        raise MeshingError("stored boundary edges disagree with topology", "untagged-edge")
    comp = _solid_components(tris, tags, pairs, len(nodes))
    return PeriodicMesh(nodes, tris, np.asarray(tags, dtype=np.int64), e, et, etr,
                        np.asarray(pairs, dtype=np.int64).reshape(-1, 2), comp, h)


def _match_lateral(nodes: np.ndarray) -> np.ndarray:
    tol = 1e-12
    left = np.flatnonzero(np.abs(nodes[:, 0]) < tol)
    right = np.flatnonzero(np.abs(nodes[:, 0] - 1.0) < tol)
    left = left[np.argsort(nodes[left, 1], kind="stable")]
    right = right[np.argsort(nodes[right, 1], kind="stable")]
    if left.size != right.size or np.max(np.abs(nodes[left, 1] - nodes[right, 1]),
                                         initial=0.0) > tol:
        raise MeshingError("lateral node sets do not match", "meshing-failed")
    return np.column_stack([left, right])


def _axis(breaks: list[float], h: float) -> np.ndarray:
    pts = [breaks[0]]
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((hi - lo) / h - 1e-9))
        pts.extend(lo + (hi - lo) * np.arange(1, n + 1) / n)
    return np.array(pts)


def _structured_mesh(geom: CellGeometry, h: float) -> PeriodicMesh:
    xs = _axis([0.0, 1.0], h)
    if geom.family == "channel":
        lo, hi = geom.params["lower"], geom.params["upper"]
        ys = _axis([-1.0, lo, hi, 1.0], h)
    else:
        ys = _axis([-1.0, 1.0], h)
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(ny, nx)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    tris = np.concatenate([np.column_stack([v00, v10, v11]),
                           np.column_stack([v00, v11, v01])])
    cy = nodes[tris, 1].mean(axis=1)
    tags = np.full(len(tris), SOLID, dtype=np.int64)
    if geom.family == "channel":
        tags[(cy > geom.params["lower"]) & (cy < geom.params["upper"])] = FLUID
    return _finalize(nodes, tris, tags, _match_lateral(nodes), h)


def _cavity_mesh(geom: CellGeometry, h: float) -> PeriodicMesh:
    import triangle

    (c1, c2), r = geom.params["center"], geom.params["radius"]
    xs = _axis([0.0, 1.0], h)
    ys = _axis([-1.0, 1.0], h)
    # outer boundary counter-clockwise
    bottom = [(x, -1.0) for x in xs[:-1]]
    right = [(1.0, y) for y in ys[:-1]]
    top = [(x, 1.0) for x in xs[::-1][:-1]]
    left = [(0.0, y) for y in ys[::-1][:-1]]
    outer = np.array(bottom + right + top + left)
    n_out = len(outer)
    n_c = max(12, math.ceil(2.0 * math.pi * r / h))
    ang = 2.0 * math.pi * np.arange(n_c) / n_c
    circle = np.column_stack([c1 + r * np.cos(ang), c2 + r * np.sin(ang)])
    verts = np.vstack([outer, circle])
    seg_o = np.column_stack([np.arange(n_out), (np.arange(n_out) + 1) % n_out])
    seg_c = n_out + np.column_stack([np.arange(n_c), (np.arange(n_c) + 1) % n_c])
    regions = np.array([[c1, c2, FLUID + 1, 0.0], [0.5 * h, -1.0 + 0.5 * h, SOLID + 1, 0.0]])
    area = h * h * math.sqrt(3.0) / 4.0
    out = triangle.triangulate(
        {"vertices": verts, "segments": np.vstack([seg_o, seg_c]), "regions": regions},
        f"pq30a{area:.12f}AYYQ",
    )
    if "triangles" not in out or "triangle_attributes" not in out:
        raise MeshingError("triangle returned no mesh", "meshing-failed")
    nodes = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    tags = np.rint(out["triangle_attributes"][:, 0]).astype(np.int64) - 1
    if not np.all(np.isin(tags, (FLUID, SOLID))):
        raise MeshingError("region attribute missing on some triangles", "meshing-failed")
    # snap boundary coordinates so periodic pairs match exactly
    for col, vals in ((0, (0.0, 1.0)), (1, (-1.0, 1.0))):
        for v in vals:
            nodes[np.abs(nodes[:, col] - v) < 1e-12, col] = v
    mesh = _finalize(nodes, tris, tags, _match_lateral(nodes), h)
    n_gamma = mesh.edges_with(GAMMA).size
    if n_gamma != n_c:
        raise MeshingError(f"interface resolved by {n_gamma} edges, expected {n_c}",
                           "meshing-failed")
    return mesh


def generate_periodic_cell_mesh(geom: CellGeometry, h: float) -> PeriodicMesh:
    """Interface-conforming periodic triangulation of the reference cell."""
    if not h > 0.0:
        raise MeshingError(f"mesh size {h} must be positive", "meshing-failed")
    if geom.family == "cavity":
        return _cavity_mesh(geom, h)
    return _structured_mesh(geom, h)


@dataclass
class LayerGeometry:
    """The thin layer ``Sigma x (-eps, eps)`` tiled by scaled cell copies.

    ``parent_cell[t]`` and ``parent_tri[t]`` locate the cell copy and the cell
    triangle a layer triangle was copied from; local vertex order is kept, so
    barycentric coordinates transfer unchanged.
    """

    sigma: tuple[float, float]
    epsilon: float
    n_cells: int
    dirichlet_sides: tuple[str, ...]
    mesh: PeriodicMesh
    cell_mesh: PeriodicMesh
    parent_cell: np.ndarray
    parent_tri: np.ndarray

    @property
    def neumann_sides(self) -> tuple[str, ...]:
        return tuple(s for s in ("a", "b") if s not in self.dirichlet_sides)


def extrude_layer_mesh(
    geom: CellGeometry,
    cell_mesh: PeriodicMesh,
    sigma: tuple[float, float],
    epsilon: float,
    dirichlet_sides: tuple[str, ...] = ("a",),
) -> LayerGeometry:
    """Replicate the cell mesh ``(b - a)/eps`` times and scale it by ``eps``.

    Raises
    ------
    GeometryError
        ``noninteger-cell-count`` if ``eps`` does not tile ``sigma``.
    """
    a, b = float(sigma[0]), float(sigma[1])
    if not b > a or not epsilon > 0:
        raise GeometryError(f"invalid layer sigma={sigma} eps={epsilon}", "invalid-layer")
    ratio = (b - a) / epsilon
    n_cells = int(round(ratio))
    if n_cells < 1 or abs(ratio - n_cells) > 1e-9 * max(1.0, ratio):
        raise GeometryError(f"(b - a)/eps = {ratio} is not an integer", "noninteger-cell-count")
    if set(dirichlet_sides) - {"a", "b"}:
        raise GeometryError(f"unknown sides {dirichlet_sides}", "invalid-layer")
    sides = tuple(s for s in ("a", "b") if s in dirichlet_sides)
    if len(sides) != 1:
        # both a Dirichlet and a Neumann end are required
        raise GeometryError("exactly one Dirichlet end is required", "empty-boundary-part")

    nn = cell_mesh.n_nodes
    pairs = cell_mesh.periodic_pairs
    is_slave = np.zeros(nn, dtype=bool)
    is_slave[pairs[:, 1]] = True
    masters = np.flatnonzero(~is_slave)
    rank = np.full(nn, -1, dtype=np.int64)
    rank[masters] = np.arange(masters.size)
    slave_of = np.full(nn, -1, dtype=np.int64)
    slave_of[pairs[:, 1]] = pairs[:, 0]
    slaves = pairs[:, 1]
    stride = masters.size

    maps = []
    for k in range(n_cells):
        g = np.empty(nn, dtype=np.int64)
        g[masters] = k * stride + rank[masters]
        if k < n_cells - 1:
            g[slaves] = (k + 1) * stride + rank[slave_of[slaves]]
        else:
            g[slaves] = n_cells * stride + np.arange(slaves.size)
        maps.append(g)
    n_layer = n_cells * stride + slaves.size
    nodes = np.empty((n_layer, 2))
    for k, g in enumerate(maps):
        nodes[g, 0] = a + epsilon * (cell_mesh.nodes[:, 0] + k)
        nodes[g, 1] = epsilon * cell_mesh.nodes[:, 1]
    nodes[:, 0] = np.where(np.abs(nodes[:, 0] - b) < 1e-12 * max(1.0, abs(b)), b, nodes[:, 0])

    nt = len(cell_mesh.triangles)
    tris = np.concatenate([g[cell_mesh.triangles] for g in maps])
    tags = np.tile(cell_mesh.tri_tags, n_cells)
    parent_cell = np.repeat(np.arange(n_cells), nt)
    parent_tri = np.tile(np.arange(nt), n_cells)

    edges, etags, etris = [], [], []
    ce, ct, ctr = cell_mesh.boundary_edges, cell_mesh.edge_tags, cell_mesh.edge_tris
    for k, g in enumerate(maps):
        keep = np.isin(ct, (GAMMA, TOP, BOTTOM))
        if k == 0:
            keep |= ct == LEFT
        if k == n_cells - 1:
            keep |= ct == RIGHT
        edges.append(g[ce[keep]])
        etags.append(ct[keep])
        etris.append(k * nt + ctr[keep])
    edges = np.concatenate(edges)
    etags = np.concatenate(etags)
    etris = np.concatenate(etris)
    for side_tag, side in ((LEFT, "a"), (RIGHT, "b")):
        on = etags == side_tag
        solid_side = on & (tags[etris] == SOLID)
        fluid_side = on & (tags[etris] == FLUID)
        etags[solid_side] = SOLID_DIRICHLET
        etags[fluid_side] = FLUID_DIRICHLET if side in sides else FLUID_NEUMANN

    comp = _solid_components(tris, tags, np.zeros((0, 2), dtype=np.int64), n_layer)
    mesh = PeriodicMesh(nodes, tris, tags, edges, etags, etris,
                        np.zeros((0, 2), dtype=np.int64), comp, cell_mesh.h * epsilon)
    return LayerGeometry((a, b), float(epsilon), n_cells, sides, mesh, cell_mesh,
                         parent_cell, parent_tri)


def classify_boundaries(layer: LayerGeometry) -> dict[str, np.ndarray]:
    """Boundary edge index sets of the layer keyed by tag name."""
    mesh = layer.mesh
    valid = (GAMMA, TOP, BOTTOM, SOLID_DIRICHLET, FLUID_DIRICHLET, FLUID_NEUMANN)
    bad = ~np.isin(mesh.edge_tags, valid)
    if bad.any():
        raise MeshingError(f"{int(bad.sum())} layer edges without a valid tag", "untagged-edge")
    return {EDGE_TAG_NAMES[t]: np.flatnonzero(mesh.edge_tags == t) for t in valid}


def mesh_quality_report(mesh: PeriodicMesh) -> dict[str, float]:
    """Minimum angle (degrees), maximum aspect ratio and edge-length extremes.

    The aspect ratio is circumradius over twice the inradius (1 for an
    equilateral triangle).
    """
    if len(mesh.triangles) == 0:
        raise MeshingError("mesh has no triangles", "empty-mesh")
    p = mesh.nodes[mesh.triangles]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    lens = np.linalg.norm(e, axis=2)
    cosang = np.empty_like(lens)
    for i in range(3):
        u, v = -e[:, (i + 1) % 3], e[:, (i + 2) % 3]
        cosang[:, i] = np.sum(u * v, axis=1) / (lens[:, (i + 1) % 3] * lens[:, (i + 2) % 3])
    ang = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    area = np.abs(mesh.areas())
    s = 0.5 * lens.sum(axis=1)
    inr = area / s
    circ = lens.prod(axis=1) / (4.0 * area)
    return {
        "min_angle": float(ang.min()),
        "max_aspect": float((circ / (2.0 * inr)).max()),
        "h_min": float(lens.min()),
        "h_max": float(lens.max()),
        "n_triangles": int(len(mesh.triangles)),
        "n_nodes": int(mesh.n_nodes),
    }

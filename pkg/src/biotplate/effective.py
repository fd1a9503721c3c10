"""Homogenised coefficients assembled from the cell solutions.

In two dimensions every tensor over the in-plane index reduces to a scalar:
``a_star``, ``b_star``, ``c_star`` (membrane, coupling and bending
stiffness), the pressure couplings ``B1``, ``B2``, the storage coefficient
``alpha_h`` and the permeability ``K``.  The elastic coefficients are plain
integrals over the solid part (no division by the solid volume); the
normalised values are reported alongside.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .cells import CellSolutionSet, unit_strain
from .errors import CheckFailure
from .fem.assembly import edge_data, element_data, eval_edge_field, eval_field, sym
from .geometry import FLUID, GAMMA, SOLID, PeriodicMesh


@dataclass
class EffectiveCoefficients:
    a_star: float
    b_star: float
    c_star: float
    B1: float
    B2: float
    alpha_h: float
    K: float
    d_n_f: float
    d_n_s: float
    vol_f: float
    vol_s: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EffectiveCoefficients":
        keys = ("a_star", "b_star", "c_star", "B1", "B2", "alpha_h", "K",
                "d_n_f", "d_n_s", "vol_f", "vol_s")
        missing = [k for k in keys if k not in data]
        if missing:
            from .errors import SchemaViolation
            raise SchemaViolation(f"coefficients missing fields {missing}")
        return cls(**{k: float(data[k]) for k in keys}, provenance=dict(data.get("provenance", {})))

    @property
    def membrane_coupling(self) -> float:
        """``B1 - |Z_f|``: pressure coupling of the in-plane strain."""
        return self.B1 - self.vol_f

    @property
    def bending_coupling(self) -> float:
        """``B2 + d_n^f``: pressure coupling of the curvature."""
        return self.B2 + self.d_n_f

    @property
    def percolating(self) -> bool:
        """Whether the fluid carries a Darcy flux (``K`` not zero)."""
        return self.K > 1e-10


def _strain_integrals(cells: CellSolutionSet):
    V = cells.solid_space
    tris = V.tri_index
    ed = element_data(cells.mesh, tris)
    M = unit_strain(0, 0)
    y2 = ed.xq[..., 1][..., None, None]
    _, g = eval_field(V, cells.chi[(0, 0)], tris)
    _, gB = eval_field(V, cells.chiB[(0, 0)], tris)
    E_m = sym(g) + M           # D(chi_11) + M_11
    E_b = sym(gB) - y2 * M     # D(chiB_11) - y2 M_11
    return ed, E_m, E_b


def assemble_elastic_tensors(cells: CellSolutionSet) -> tuple[float, float, float]:
    """Membrane, coupling and bending stiffness ``(a*, b*, c*)``."""
    if cells.solid_space is None:
        raise CheckFailure("no solid correctors available", "mismatched-mesh")
    A = cells.A.A
    ed, E_m, E_b = _strain_integrals(cells)

    def form(X, Y):
        return float(np.einsum("ijkl,tqkl,tqij,tq->", A, X, Y, ed.wq))

    return form(E_m, E_m), form(E_b, E_m), form(E_b, E_b)


def coupling_transpose_gap(cells: CellSolutionSet) -> float:
    """``|int A E_b : E_m - int A E_m : E_b|`` (zero by symmetry of ``A``)."""
    A = cells.A.A
    ed, E_m, E_b = _strain_integrals(cells)
    b1 = np.einsum("ijkl,tqkl,tqij,tq->", A, E_b, E_m, ed.wq)
    b2 = np.einsum("ijkl,tqkl,tqij,tq->", A, E_m, E_b, ed.wq)
    return float(abs(b1 - b2))


def interface_flux(cells: CellSolutionSet, u: np.ndarray) -> float:
    """``int_Gamma u . nu`` with ``nu`` the outward solid normal."""
    edges = cells.mesh.edges_with(GAMMA)
    if edges.size == 0:
        return 0.0
    ed = edge_data(cells.mesh, edges)
    vals = eval_edge_field(cells.solid_space, u, ed)
    return float(np.einsum("eq,eqd,ed->", ed.wq, vals, ed.normal))


def assemble_pressure_couplings(cells: CellSolutionSet, tol: float = 1e-7) -> tuple[float, float, dict]:
    """Volume formulas for ``B1``, ``B2`` and their interface duals.

    Returns ``(B1, B2, report)``; raises ``duality-violation`` if a volume and
    interface value differ by more than ``tol``.
    """
    V = cells.solid_space
    tris = V.tri_index
    ed = element_data(cells.mesh, tris)
    _, g0 = eval_field(V, cells.chi0, tris)
    AD0 = np.einsum("ijkl,tqkl->tqij", cells.A.A, sym(g0))
    M = unit_strain(0, 0)
    B1 = float(np.einsum("tqij,ij,tq->", AD0, M, ed.wq))
    B2 = 0.0 - float(np.einsum("tqij,ij,tq,tq->", AD0, M, ed.xq[..., 1], ed.wq))
    flux1 = interface_flux(cells, cells.chi[(0, 0)])
    flux2 = interface_flux(cells, cells.chiB[(0, 0)])
    report = {
        "B1_volume": B1, "B1_interface": flux1, "B1_gap": abs(B1 - flux1),
        "B2_volume": B2, "B2_interface": flux2, "B2_gap": abs(B2 - flux2),
        "tol": tol,
    }
    report["passed"] = report["B1_gap"] <= tol and report["B2_gap"] <= tol
    if not report["passed"]:
        raise CheckFailure(f"duality gaps {report['B1_gap']:.2e}, {report['B2_gap']:.2e}",
                           "duality-violation")
    return B1, B2, report


def assemble_alpha_h(cells: CellSolutionSet, allow_degenerate: bool = False) -> tuple[float, float]:
    """``alpha_h = -int_Gamma chi0 . nu`` and the strain energy of ``chi0``.

    Without an interface both vanish; this is rejected unless
    ``allow_degenerate``.
    """
    alpha = 0.0 - interface_flux(cells, cells.chi0)
    V = cells.solid_space
    tris = V.tri_index
    ed = element_data(cells.mesh, tris)
    _, g0 = eval_field(V, cells.chi0, tris)
    D0 = sym(g0)
    energy = float(np.einsum("ijkl,tqkl,tqij,tq->", cells.A.A, D0, D0, ed.wq))
    if alpha <= 0.0 and not allow_degenerate:
        raise CheckFailure(f"alpha_h = {alpha:.3e} is not positive", "nonpositive-alpha")
    return alpha, energy


def assemble_permeability(cells: CellSolutionSet) -> np.ndarray:
    """Full 2x2 matrix ``K_ij = int_{Z_f} D(q_i) : D(q_j)``."""
    if cells.fluid_space is None:
        return np.zeros((2, 2))
    Vf = cells.fluid_space
    tris = Vf.tri_index
    ed = element_data(cells.mesh, tris)
    D = [sym(eval_field(Vf, cells.q[i], tris)[1]) for i in range(2)]
    K = np.array([[np.einsum("tqij,tqij,tq->", D[i], D[j], ed.wq) for j in range(2)]
                  for i in range(2)])
    return K


def permeability_flux(cells: CellSolutionSet) -> np.ndarray:
    """Alternative route ``K_ij = int_{Z_f} q_i . e_j``."""
    if cells.fluid_space is None:
        return np.zeros((2, 2))
    Vf = cells.fluid_space
    tris = Vf.tri_index
    ed = element_data(cells.mesh, tris)
    out = np.zeros((2, 2))
    for i in range(2):
        vals, _ = eval_field(Vf, cells.q[i], tris)
        out[i] = np.einsum("tqc,tq->c", vals, ed.wq)
    return out


def geometric_moments(mesh: PeriodicMesh) -> tuple[float, float, float, float]:
    """``(|Z_f|, |Z_s|, int_{Z_f} y2, int_{Z_s} y2)`` measured on the mesh."""
    out = []
    for tag in (FLUID, SOLID):
        tris = np.flatnonzero(mesh.tri_tags == tag)
        if tris.size == 0:
            out.append((0.0, 0.0))
            continue
        ed = element_data(mesh, tris)
        out.append((float(ed.wq.sum()), float(np.sum(ed.wq * ed.xq[..., 1]))))
    (vf, df), (vs, ds) = out
    return vf, vs, df, ds


def check_positivity(coeffs: EffectiveCoefficients, tol: float = 0.0) -> dict:
    """Smallest eigenvalue of ``[[a*, b*], [b*, c*]]`` and of ``K``.

    ``K`` only has to be non-negative: a fluid region that does not cross
    the cell (an enclosed cavity) has zero permeability.
    """
    block = np.array([[coeffs.a_star, coeffs.b_star], [coeffs.b_star, coeffs.c_star]])
    lam = float(np.linalg.eigvalsh(block).min())
    report = {"block_min_eig": lam, "K": coeffs.K, "alpha_h": coeffs.alpha_h,
              "passed": lam > tol and coeffs.K >= -1e-12}
    if not report["passed"]:
        raise CheckFailure(f"block form min eigenvalue {lam:.3e}, K = {coeffs.K:.3e}",
                           "positivity-violation")
    return report


def compute_coefficients(cells: CellSolutionSet, geometry: dict | None = None,
                         h: float | None = None, duality_tol: float = 1e-7) -> tuple[EffectiveCoefficients, dict]:
    """Assemble every coefficient and a report of the accompanying checks."""
    a, b, c = assemble_elastic_tensors(cells)
    B1, B2, duality = assemble_pressure_couplings(cells, duality_tol)
    degenerate = cells.mesh.edges_with(GAMMA).size == 0
    alpha, energy = assemble_alpha_h(cells, allow_degenerate=degenerate)
    Kfull = assemble_permeability(cells)
    vf, vs, df, ds = geometric_moments(cells.mesh)
    coeffs = EffectiveCoefficients(
        a_star=a, b_star=b, c_star=c, B1=B1, B2=B2, alpha_h=alpha, K=float(Kfull[0, 0]),
        d_n_f=df, d_n_s=ds, vol_f=vf, vol_s=vs,
        provenance={
            "geometry": geometry or {},
            "h": cells.mesh.h if h is None else h,
            "A": cells.A.to_dict(),
            "mesh_hash": cells.mesh.hash(),
        },
    )
    report = {
        "duality": duality,
        "alpha_energy_gap": abs(alpha - energy),
        "K_matrix": Kfull.tolist(),
        "K_flux_route": permeability_flux(cells).tolist(),
        "normalised_elastic": {"a_star": a / vs, "b_star": b / vs, "c_star": c / vs},
        "b_transpose_gap": coupling_transpose_gap(cells),
        "solid_components": cells.mesh.n_solid_components,
        "degenerate_interface": degenerate,
    }
    return coeffs, report

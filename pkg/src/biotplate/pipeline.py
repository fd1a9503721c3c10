"""Pipeline stages behind the command line: cell, macro, micro, compare, check.

Every stage writes its files into the output directory and records them in
``manifest.json`` together with their SHA-256 and the stage verdict.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cells import ElasticityTensor, solve_cells, verify_analytic_cells
from .config import RunSpec
from .effective import EffectiveCoefficients, check_positivity, compute_coefficients
from .errors import BiotPlateError, CheckFailure, InputError
from .forcing import FIELDS, MacroForcing
from .geometry import (build_cell_geometry, extrude_layer_mesh, generate_periodic_cell_mesh,
                       mesh_quality_report)
from .io import file_sha256, read_json, write_csv, write_json
from .macro import build_macro_spaces, darcy_velocity, run, uniform_nodes
from .micro.fsi import (MicroStepper, apriori_monitors, micro_forcing, norm_forms, run_micro,
                        time_norms)
from .micro.galerkin import compare_dae_vs_monolithic
from .micro.twoscale import compare_scale, trend_ratios, unfolding_check

log = logging.getLogger("biotplate")

CONVENTION_NOTE = ("elastic coefficients a*, b*, c* are plain integrals over the solid part "
                   "of the cell (no division by |Z_s|); normalised values are listed in the "
                   "cell report")
ERROR_RATIO = 0.75
MONITOR_RATIO = 2.0
MONITOR_KEYS = ("r_v", "r_u", "r_p", "r_w", "r_vi")
ERROR_KEYS = ("e_p", "e_v", "e_u", "e_rec")


# ----------------------------------------------------------------------
# shared builders
def build_material(spec: RunSpec) -> ElasticityTensor:
    mat = spec.material
    if "voigt" in mat:
        return ElasticityTensor.from_voigt(np.asarray(mat["voigt"], dtype=float))
    return ElasticityTensor.isotropic(float(mat["lambda"]), float(mat["mu"]))


def build_geometry(spec: RunSpec, h: float | None = None):
    g = spec.geometry
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in g["params"].items()}
    geom = build_cell_geometry(g["family"], **params)
    mesh = generate_periodic_cell_mesh(geom, g["h_cell"] if h is None else h)
    return geom, mesh


def _sides(spec: RunSpec) -> tuple[str, str]:
    d = spec.macro["dirichlet"]
    return d, ("b" if d == "a" else "a")


class Manifest:
    """Accumulates stage outputs and verdicts into ``manifest.json``."""

    def __init__(self, spec: RunSpec, out: Path):
        self.spec = spec
        self.out = out
        self.path = out / "manifest.json"
        self.data = read_json(self.path) if self.path.is_file() else {}
        if self.data.get("config_hash") != spec.hash():
            self.data = {}
        self.data.update({"config_hash": spec.hash(), "artifact_version": __version__})
        self.data.setdefault("stages", {})
        self.timings: dict[str, float] = {}

    def record(self, stage: str, paths: list[Path], passed: bool, seconds: float) -> None:
        files = [{"path": p.relative_to(self.out).as_posix(), "sha256": file_sha256(p)}
                 for p in sorted(paths)]
        entry = {"outputs": files, "passed": bool(passed)}
        if not self.spec["deterministic"]:
            entry["seconds"] = round(seconds, 3)
        self.data["stages"][stage] = entry
        write_json(self.path, self.data)
        if self.spec["deterministic"]:
            # wall-clock stays out of the hashed outputs
            path = self.out / "timings.txt"
            lines = path.read_text(encoding="utf-8").splitlines() if path.is_file() else []
            times = dict(line.split(" ", 1) for line in lines if " " in line)
            times[stage] = f"{seconds:.3f}"
            path.write_text("".join(f"{k} {v}\n" for k, v in sorted(times.items())),
                            encoding="utf-8")


# ----------------------------------------------------------------------
# cell stage
def solve_cell_stage(spec: RunSpec):
    A = build_material(spec)
    geom, mesh = build_geometry(spec)
    cells = solve_cells(mesh, A, spec.tol)
    coeffs, report = compute_coefficients(cells, geom.to_dict(), spec.geometry["h_cell"])
    return geom, mesh, A, cells, coeffs, report


def coefficient_certificates(coeffs: EffectiveCoefficients, report: dict) -> list[dict]:
    """Sign, energy and symmetry certificates of the homogenised coefficients."""
    K = np.asarray(report["K_matrix"])
    out = []
    if not report["degenerate_interface"]:
        out.append({"check": "alpha_h > 0", "value": coeffs.alpha_h, "passed": coeffs.alpha_h > 0})
    out.append({"check": "alpha_h = energy of chi0", "value": report["alpha_energy_gap"],
                "tol": 1e-8, "passed": report["alpha_energy_gap"] <= 1e-8})
    for name, v in (("K_12", K[0, 1]), ("K_21", K[1, 0]), ("K_22", K[1, 1])):
        out.append({"check": f"{name} = 0", "value": float(v), "tol": 1e-10,
                    "passed": abs(v) <= 1e-10})
    block = np.array([[coeffs.a_star, coeffs.b_star], [coeffs.b_star, coeffs.c_star]])
    lam = float(np.linalg.eigvalsh(block).min())
    out.append({"check": "[[a*, b*], [b*, c*]] positive definite", "value": lam,
                "passed": lam > 0})
    return out


def cmd_cell(spec: RunSpec, out: Path) -> dict:
    t0 = time.perf_counter()
    geom, mesh, A, cells, coeffs, report = solve_cell_stage(spec)
    analytic = verify_analytic_cells(cells, 1e-8)
    certs = coefficient_certificates(coeffs, report)
    passed = all(r["passed"] for r in analytic if not r.get("informational")) \
        and all(c["passed"] for c in certs) and report["duality"]["passed"]
    notes = [CONVENTION_NOTE]
    if mesh.n_solid_components > 1:
        notes.append(f"solid part has {mesh.n_solid_components} periodic components; "
                     "correctors are normalised per component")
    if not coeffs.percolating:
        notes.append("fluid region does not cross the cell: K = 0 and the macro pressure "
                     "equation carries no Darcy flux")
    cell_report = {
        "geometry": geom.to_dict(), "mesh": mesh_quality_report(mesh), "mesh_hash": mesh.hash(),
        "analytic": analytic, "certificates": certs, "coefficients_report": report,
        "diagnostics": cells.diagnostics, "notes": notes, "passed": passed,
    }
    paths = [write_json(out / "coefficients.json", coeffs.to_dict()),
             write_json(out / "cell_report.json", cell_report)]
    Manifest(spec, out).record("cell", paths, passed, time.perf_counter() - t0)
    if not passed:
        raise CheckFailure("cell identities or certificates failed", "cell-check-failed")
    return cell_report


# ----------------------------------------------------------------------
# macro stage
def load_coefficients(spec: RunSpec, out: Path) -> EffectiveCoefficients:
    path = spec.macro["coefficients"] or (out / "coefficients.json")
    return EffectiveCoefficients.from_dict(read_json(path))


def macro_spaces_for(spec: RunSpec, coeffs: EffectiveCoefficients):
    d, n = _sides(spec)
    nodes = uniform_nodes(tuple(spec.macro["sigma"]), spec.macro["n_nodes"])
    return build_macro_spaces(nodes, (d,), (n,), pressure_bc=coeffs.percolating)


def cmd_macro(spec: RunSpec, out: Path) -> dict:
    t0 = time.perf_counter()
    coeffs = load_coefficients(spec, out)
    forcing = spec.forcing()
    spaces = macro_spaces_for(spec, coeffs)
    T, dt = spec.macro["T"], spec.macro["dt"]
    traj = run(coeffs, forcing, T, dt, spaces=spaces, tol=spec.tol)
    n_p, n_u, n_w = spaces.p.n_raw, spaces.u1.n_raw, spaces.w.n_raw
    header = (["t"] + [f"p_{i}" for i in range(n_p)] + [f"u1_{i}" for i in range(n_u)]
              + [f"w_{i}" for i in range(n_w)])
    rows = (np.concatenate([[t], traj.p[k], traj.u1[k], traj.w[k]])
            for k, t in enumerate(traj.times))
    paths = [write_csv(out / "macro_trajectory.csv", header, rows)]
    paths.append(write_csv(out / "macro_energy.csv", ["t", "E", "dissipation", "forcing_free"],
                           zip(traj.times, traj.energy, traj.dissipation, traj.forcing_free)))
    summary = {
        "n_steps": len(traj.times) - 1, "T": T, "dt": dt, "nodes": spaces.nodes,
        "pressure_bc": spaces.pressure_bc, "transpose_gap": traj.transpose_gap,
        "final": traj.state(len(traj.times) - 1),
        "max_energy": float(traj.energy.max()),
        "energy_nonincreasing_when_unforced": True,
        "zero_trajectory": bool(not np.any(traj.p) and not np.any(traj.u1) and not np.any(traj.w)),
    }
    if len(traj.times) > 1:
        k = len(traj.times) - 1
        summary["darcy_velocity"] = darcy_velocity(
            spaces, coeffs, traj.state(k - 1), traj.state(k), dt,
            lambda x, t=traj.times[k]: forcing.f0(t, x))
    paths.append(write_json(out / "macro_summary.json", summary))
    Manifest(spec, out).record("macro", paths, True, time.perf_counter() - t0)
    return summary


# ----------------------------------------------------------------------
# micro stage
def _eps_tag(eps: float) -> str:
    return f"eps{eps:.6g}"


def resolve_eps(spec: RunSpec, eps: float | None) -> float:
    if eps is None:
        return spec.micro["eps"][0]
    for e in spec.micro["eps"]:
        if abs(e - eps) <= 1e-12 * max(1.0, e):
            return e
    raise InputError(f"eps = {eps} is not listed in micro.eps", "eps-not-in-spec")


def cmd_micro(spec: RunSpec, out: Path, eps: float | None = None) -> dict:
    t0 = time.perf_counter()
    eps = resolve_eps(spec, eps)
    A = build_material(spec)
    geom, mesh = build_geometry(spec)
    forcing = spec.forcing()
    d, _ = _sides(spec)
    layer = extrude_layer_mesh(geom, mesh, tuple(spec.macro["sigma"]), eps, (d,))
    stepper = MicroStepper(layer, A, spec.micro["dt"], spec.tol)
    traj = run_micro(stepper, micro_forcing(forcing, layer), spec.macro["T"])
    forms = norm_forms(stepper)
    mon = apriori_monitors(traj, forms)
    P = stepper.V.P
    Wr, Xr = (P @ traj.w.T).T, (P @ traj.X.T).T

    def norms(M, S):
        return np.sqrt(np.maximum(np.einsum("ki,ki->k", S, (M @ S.T).T), 0.0))

    dv = norms(forms.Df, Wr)
    du = norms(forms.Ds, Xr)
    pn = norms(forms.Mp, traj.p) if stepper.has_fluid else np.zeros(len(traj.times))
    tag = _eps_tag(eps)
    paths = [
        write_csv(out / f"micro_{tag}_norms.csv",
                  ["t", "Dv_fluid", "Du_solid", "p_fluid", "energy_balance", "divergence"],
                  zip(traj.times, dv, du, pn, traj.step_energy, traj.divergence)),
        write_csv(out / f"micro_{tag}_monitors.csv", ["epsilon", *MONITOR_KEYS],
                  [[eps] + [mon[k] for k in MONITOR_KEYS]]),
        write_json(out / f"micro_{tag}_final.json", {
            "epsilon": eps, "t": float(traj.times[-1]), "mesh": layer.mesh.to_dict(),
            "fields": {"velocity": Wr[-1], "displacement": Xr[-1],
                       "pressure": traj.p[-1] if stepper.has_fluid else []},
        }),
    ]
    result = {"epsilon": eps, "monitors": mon, "n_velocity": stepper.n_velocity,
              "n_pressure": stepper.n_pressure, "max_divergence": float(traj.divergence.max()),
              "H1_Dv": time_norms(forms.Df, Wr, traj.dt)["H1"]}
    Manifest(spec, out).record(f"micro_{tag}", paths, True, time.perf_counter() - t0)
    return result


# ----------------------------------------------------------------------
# compare stage
def check_forcing_consistency(spec: RunSpec) -> None:
    micro_f = spec.micro["forcing"]
    if micro_f is None:
        return
    macro_f = spec["forcing"]
    a = MacroForcing.from_dict(micro_f, tuple(spec.macro["sigma"])).to_dict()
    b = MacroForcing.from_dict(macro_f, tuple(spec.macro["sigma"])).to_dict()
    if a != b:
        raise InputError("micro and macro blocks use different forcing", "inconsistent-data")


def run_study(spec: RunSpec) -> tuple[list, dict]:
    """Convergence rows for every eps in the spec, plus a verdict."""
    check_forcing_consistency(spec)
    geom, mesh, A, cells, coeffs, _ = solve_cell_stage(spec)
    forcing = spec.forcing()
    spaces = macro_spaces_for(spec, coeffs)
    dt = spec.micro["dt"]
    macro = run(coeffs, forcing, spec.macro["T"], dt, spaces=spaces, tol=spec.tol)
    d, _ = _sides(spec)

    def one(eps):
        layer = extrude_layer_mesh(geom, mesh, tuple(spec.macro["sigma"]), eps, (d,))
        return compare_scale(layer, A, forcing, macro, cells, coeffs)

    eps_list = spec.micro["eps"]
    with ThreadPoolExecutor(max_workers=max(1, len(eps_list))) as pool:
        rows = list(pool.map(one, eps_list))
    verdict = trend_verdict(rows)
    return rows, verdict


def trend_verdict(rows: list) -> dict:
    verdict = {"error_ratio_max": ERROR_RATIO, "monitor_ratio_max": MONITOR_RATIO,
               "ratios": {}, "checks": {}, "warnings": []}
    if len(rows) < 2:
        verdict["warnings"].append("single eps value: trend check skipped")
        verdict["passed"] = True
        return verdict
    for key in ERROR_KEYS:
        r = trend_ratios(rows, key)
        verdict["ratios"][key] = r
        verdict["checks"][key] = all(x <= ERROR_RATIO for x in r)
    for key in MONITOR_KEYS:
        r = trend_ratios(rows, key)
        verdict["ratios"][key] = r
        verdict["checks"][key] = all(x <= MONITOR_RATIO for x in r)
    verdict["checks"]["unfolding"] = all(r.unfolding <= 1e-10 for r in rows)
    verdict["passed"] = all(verdict["checks"].values())
    return verdict


STUDY_COLUMNS = ["epsilon", *MONITOR_KEYS, *ERROR_KEYS, "e_rec_p", "e_rec_v", "unfolding"]


def cmd_compare(spec: RunSpec, out: Path) -> dict:
    t0 = time.perf_counter()
    rows, verdict = run_study(spec)
    for w in verdict["warnings"]:
        log.warning(w)
    table = [[r.to_dict()[c] for c in STUDY_COLUMNS] for r in rows]
    paths = [write_csv(out / "convergence.csv", STUDY_COLUMNS, table),
             write_json(out / "compare_verdict.json", verdict)]
    Manifest(spec, out).record("compare", paths, verdict["passed"], time.perf_counter() - t0)
    if not verdict["passed"]:
        raise CheckFailure("convergence trends not met", "trend-failed")
    return {"rows": [r.to_dict() for r in rows], "verdict": verdict}


# ----------------------------------------------------------------------
# check stage
def _suite(name: str, fn) -> dict:
    try:
        records = fn()
        return {"suite": name, "records": records, "passed": all(r["passed"] for r in records)}
    except BiotPlateError as exc:
        return {"suite": name, "records": [], "passed": False, "error": f"{exc.code}: {exc}"}


def _with_cutoff(forcing: MacroForcing, t_off: float) -> MacroForcing:
    return MacroForcing(forcing.sigma, {k: replace(forcing.profiles[k], t_off=t_off)
                                        for k in FIELDS})


def cmd_check(spec: RunSpec, out: Path) -> dict:
    t0 = time.perf_counter()
    chk = spec["check"]
    state: dict = {}

    def cell_suite():
        geom, mesh, A, cells, coeffs, report = solve_cell_stage(spec)
        state.update(geom=geom, mesh=mesh, A=A, coeffs=coeffs)
        recs = [dict(r, check=r["identity"]) for r in verify_analytic_cells(cells, 1e-8)
                if not r.get("informational")]
        du = report["duality"]
        recs.append({"check": "B1 volume = interface", "value": du["B1_gap"], "passed": du["B1_gap"] <= 1e-7})
        recs.append({"check": "B2 volume = interface", "value": du["B2_gap"], "passed": du["B2_gap"] <= 1e-7})
        recs.extend(coefficient_certificates(coeffs, report))
        return recs

    def positivity_suite():
        coeffs = state.get("coeffs")
        if coeffs is None:
            raise CheckFailure("coefficients unavailable", "missing-cell-solutions")
        over = {k: float(v) for k, v in chk["coefficient_overrides"].items()}
        coeffs = replace(coeffs, **over)
        state["coeffs"] = coeffs
        rep = check_positivity(coeffs)
        return [{"check": "effective block positive, K >= 0", "value": rep["block_min_eig"],
                 "passed": rep["passed"]}]

    def macro_suite():
        coeffs = state["coeffs"]
        check_positivity(coeffs)
        spaces = macro_spaces_for(spec, coeffs)
        T = spec.macro["T"]
        n_steps = 200
        dt = T / n_steps
        zero = run(coeffs, MacroForcing.zero(spaces.sigma), T, dt, spaces=spaces)
        cut = run(coeffs, _with_cutoff(spec.forcing(), T / 2), T, dt, spaces=spaces)
        after = cut.times > T / 2 + 1e-12
        dE = np.diff(cut.energy)[after[1:]]
        return [
            {"check": "zero forcing gives zero trajectory",
             "passed": not (np.any(zero.p) or np.any(zero.u1) or np.any(zero.w))},
            {"check": "coupling transpose identity", "value": cut.transpose_gap,
             "tol": 1e-12, "passed": cut.transpose_gap <= 1e-12},
            {"check": "energy non-increasing after cutoff",
             "value": float(dE.max(initial=0.0)),
             "passed": bool(np.all(dE <= 1e-9 * cut.energy.max()))},
        ]

    def micro_suite():
        A = state["A"]
        geom, mesh = build_geometry(spec, chk["micro_h_cell"])
        d, _ = _sides(spec)
        layer = extrude_layer_mesh(geom, mesh, tuple(spec.macro["sigma"]), chk["micro_eps"], (d,))
        n_steps = int(chk["micro_steps"])
        T = spec.macro["T"]
        dt = T / n_steps
        forcing = micro_forcing(spec.forcing(), layer)
        rep = compare_dae_vs_monolithic(layer, A, forcing, T, dt)
        st = MicroStepper(layer, A, dt)
        zero = run_micro(st, micro_forcing(MacroForcing.zero(layer.sigma), layer), T)
        mon = apriori_monitors(zero)
        unf = unfolding_check(layer)
        return [
            {"check": "DAE vs monolithic (u)", "value": rep["u_discrepancy"], "tol": 1e-6,
             "passed": rep["u_discrepancy"] <= 1e-6},
            {"check": "DAE vs monolithic (v)", "value": rep["v_discrepancy"], "tol": 1e-6,
             "passed": rep["v_discrepancy"] <= 1e-6},
            {"check": "B + C = I", "value": rep["identity_gap"], "tol": 1e-10,
             "passed": rep["identity_gap"] <= 1e-10},
            {"check": "eigenvalues of B in [0, 1]", "value": [rep["eig_min"], rep["eig_max"]],
             "passed": rep["eig_min"] >= -1e-12 and rep["eig_max"] <= 1 + 1e-12},
            {"check": "step matrix symmetric", "value": st.symmetry_gap,
             "passed": st.symmetry_gap <= 1e-12 * max(abs(st.matrix).max(), 1.0)},
            {"check": "zero forcing gives zero monitors",
             "passed": all(mon[k] == 0.0 for k in MONITOR_KEYS)},
            {"check": "exact unfolding of a periodic field", "value": unf["error"],
             "tol": 1e-10, "passed": unf["error"] <= 1e-10},
        ]

    suites = [_suite("cells", cell_suite), _suite("positivity", positivity_suite)]
    suites.append(_suite("macro", macro_suite) if suites[1]["passed"] else
                  {"suite": "macro", "records": [], "passed": False,
                   "error": "skipped: coefficients not positive"})
    suites.append(_suite("micro", micro_suite) if "A" in state else
                  {"suite": "micro", "records": [], "passed": False, "error": "skipped"})
    report = {"suites": suites, "notes": [CONVENTION_NOTE],
              "passed": all(s["passed"] for s in suites)}
    paths = [write_json(out / "check_report.json", report)]
    Manifest(spec, out).record("check", paths, report["passed"], time.perf_counter() - t0)
    if not report["passed"]:
        failed = [s["suite"] for s in suites if not s["passed"]]
        raise CheckFailure(f"failed suites: {', '.join(failed)}", "check-failed")
    return report

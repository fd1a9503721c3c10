"""Acceptance gate: one verdict line per criterion, at the stated tolerances."""
from __future__ import annotations

import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from biotplate.cells import ElasticityTensor, l2_error, solve_cells
from biotplate.cli import main
from biotplate.config import load_config
from biotplate.effective import compute_coefficients
from biotplate.fem.assembly import element_data
from biotplate.forcing import MacroForcing, Profile
from biotplate.geometry import SOLID, build_cell_geometry, extrude_layer_mesh, generate_periodic_cell_mesh
from biotplate.macro import (assemble_macro_system, build_macro_spaces, l2_error_1d, manufactured_case,
                             run, uniform_nodes)
from biotplate.micro.fsi import micro_forcing
from biotplate.micro.galerkin import compare_dae_vs_monolithic
from biotplate.pipeline import ERROR_KEYS, MONITOR_KEYS, coefficient_certificates, run_study

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ISO = ElasticityTensor.isotropic(1.0, 1.0)
CAVITY = build_cell_geometry("cavity", center=(0.5, 0.0), radius=0.25)
CHANNEL = build_cell_geometry("channel", band=(-0.3, 0.3))
H0 = 0.3


@pytest.fixture(scope="module")
def cavity_h05():
    t0 = time.perf_counter()
    cells = solve_cells(generate_periodic_cell_mesh(CAVITY, 0.05), ISO)
    return cells, time.perf_counter() - t0


@pytest.fixture(scope="module")
def geometries():
    out = {}
    for name, geom in (("cavity", CAVITY), ("channel", CHANNEL)):
        cells = solve_cells(generate_periodic_cell_mesh(geom, 0.05), ISO)
        out[name] = compute_coefficients(cells, geom.to_dict())
    return out


@pytest.fixture(scope="module")
def study():
    t0 = time.perf_counter()
    rows, verdict = run_study(load_config(CONFIGS / "cavity.json"))
    return rows, verdict, time.perf_counter() - t0


def _solid_mean_free(cells, f):
    """``f - mean_{Z_s} f`` from the solid quadrature (single solid component)."""
    mesh = cells.mesh
    ed = element_data(mesh, np.flatnonzero(mesh.tri_tags == SOLID))
    mean = np.einsum("tq,tqc->c", ed.wq, f(ed.xq)) / ed.wq.sum()
    return lambda x: f(x) - mean


def _membrane_errors(cells, sign):
    V = cells.solid_space
    errs = []
    for i in range(2):
        e = np.eye(2)[i]
        ref = _solid_mean_free(cells, lambda x, e=e: sign * x[..., 1, None] * e)
        errs.append(l2_error(V, cells.chi[(i, 1)], ref))
    return max(errs)


def _common_cell_errors(cells):
    V = cells.solid_space
    errs = []
    for i in range(2):
        e = np.eye(2)[i]
        ref = _solid_mean_free(cells, lambda x, e=e: 0.5 * x[..., 1, None] ** 2 * e)
        errs.append(l2_error(V, cells.chiB[(i, 1)], ref))
    Q = cells.pressure_space
    ed = element_data(cells.mesh, Q.tri_index)
    ymean = np.sum(ed.wq * ed.xq[..., 1]) / ed.wq.sum()
    errs.append(l2_error(cells.fluid_space, cells.q[1], lambda x: np.zeros(x.shape)))
    errs.append(l2_error(Q, cells.pi[1], lambda x: x[..., 1:2] - ymean))
    return max(errs)


def test_criterion_1_literal_sign(cavity_h05, criterion):
    cells, secs = cavity_h05
    err = max(_membrane_errors(cells, +1.0), _common_cell_errors(cells))
    ok = criterion("1 (chi_i2 = +(y2 e_i - mean) as stated)", err <= 1e-8 and secs <= 30,
                   f"L2 error {err:.3e} (tol 1e-8), runtime {secs:.1f} s (budget 30 s)")
    assert ok


def test_criterion_1_corrected_sign(cavity_h05, criterion):
    cells, secs = cavity_h05
    err = max(_membrane_errors(cells, -1.0), _common_cell_errors(cells))
    ok = criterion("1 (chi_i2 = -(y2 e_i - mean))", err <= 1e-8 and secs <= 30,
                   f"L2 error {err:.3e} (tol 1e-8), runtime {secs:.1f} s (budget 30 s)")
    assert ok


def test_criterion_2_duality(geometries, criterion):
    gaps = {name: max(rep["duality"]["B1_gap"], rep["duality"]["B2_gap"])
            for name, (_, rep) in geometries.items()}
    ok = criterion("2 (duality identities)", all(g <= 1e-7 for g in gaps.values()),
                   ", ".join(f"{k} max gap {v:.2e}" for k, v in gaps.items()) + " (tol 1e-7)")
    assert ok


def test_criterion_3_certificates(geometries, criterion):
    failed, worst = [], {}
    for name, (coeffs, rep) in geometries.items():
        certs = coefficient_certificates(coeffs, rep)
        failed += [f"{name}: {c['check']}" for c in certs if not c["passed"]]
        worst[name] = (coeffs.alpha_h, rep["alpha_energy_gap"],
                       float(np.abs(np.asarray(rep["K_matrix"]))[[0, 1, 1], [1, 0, 1]].max()))
    detail = "; ".join(f"{k}: alpha_h {a:.5f}, energy gap {g:.1e}, max|K12,K21,K22| {kk:.1e}"
                       for k, (a, g, kk) in worst.items())
    ok = criterion("3 (coefficient certificates)", not failed, detail + (f"; failed {failed}" if failed else ""))
    assert ok


@pytest.fixture(scope="module")
def channel_fine():
    cells = solve_cells(generate_periodic_cell_mesh(CHANNEL, 0.025), ISO)
    return compute_coefficients(cells, CHANNEL.to_dict())[0]


def test_criterion_4_literal_oracle(channel_fine, criterion):
    oracle = (2 * H0) ** 3 / 12
    rel = abs(channel_fine.K - oracle) / oracle
    ok = criterion("4 (K11 vs (2h0)^3/12 as stated)", rel <= 0.02,
                   f"K11 {channel_fine.K:.6f} vs {oracle:.6f}, rel. diff {rel:.3f} (tol 0.02)")
    assert ok


def test_criterion_4_symmetric_gradient_oracle(channel_fine, criterion):
    oracle = 4 * H0 ** 3 / 3
    rel = abs(channel_fine.K - oracle) / oracle
    ok = criterion("4 (K11 vs 4 h0^3 / 3 for the D(q) Stokes cell)", rel <= 0.02,
                   f"K11 {channel_fine.K:.6f} vs {oracle:.6f}, rel. diff {rel:.1e} (tol 0.02)")
    assert ok


def test_criterion_5_macro(geometries, criterion):
    t0 = time.perf_counter()
    coeffs = geometries["channel"][0]
    sigma = (0.0, 1.0)
    checks = {}
    # (a) zero forcing
    z = run(coeffs, MacroForcing.zero(sigma), 1.0, 0.005, n_nodes=41)
    checks["a"] = not (np.any(z.p) or np.any(z.u1) or np.any(z.w))
    # (b) 200 steps, forcing switched off after step 100
    forcing = MacroForcing(sigma, {
        "f0": Profile(1.0, "ramp-hold", "sin", 0.1, t_off=0.5),
        "g1bar": Profile(1.0, "smoothstep", "bump", 0.2, t_off=0.5)})
    tr = run(coeffs, forcing, 1.0, 0.005, n_nodes=41, check_energy=False)
    free = np.flatnonzero(tr.forcing_free[1:]) + 1
    dE = tr.energy[free] - tr.energy[free - 1]
    checks["b"] = bool(free.size == 100 and np.all(dE <= 1e-12 * tr.energy.max()))
    # (c) manufactured order over three halvings
    orders = []
    for c in (coeffs, geometries["cavity"][0]):
        man, exact = manufactured_case(c, sigma)
        errs = []
        for n in (11, 21, 41, 81):
            sp_ = build_macro_spaces(uniform_nodes(sigma, n), pressure_bc=c.percolating)
            t = run(c, man, 1.0, 0.5, spaces=sp_, check_energy=False)
            errs.append([l2_error_1d(getattr(sp_, k), getattr(t, k)[-1],
                                     lambda x, k=k: exact[k](1.0, x)) for k in ("p", "u1")])
        e = np.array(errs)
        orders.append(np.log2(e[:-1] / e[1:]))
    orders = np.concatenate(orders)
    checks["c"] = bool(np.all(np.abs(orders - 2.0) <= 0.3))
    # (d) transpose identity at every assembly
    gaps = [assemble_macro_system(c, build_macro_spaces(uniform_nodes(sigma, n),
                                                        pressure_bc=c.percolating), dt).transpose_gap
            for c in (coeffs, geometries["cavity"][0]) for n in (11, 41, 161) for dt in (0.5, 0.005)]
    checks["d"] = max(gaps) <= 1e-12
    secs = time.perf_counter() - t0
    ok = criterion("5 (macro solver)", all(checks.values()) and secs <= 60,
                   f"zero {checks['a']}, max dE {dE.max():.1e} over {free.size} free steps, "
                   f"orders {orders.min():.2f}..{orders.max():.2f}, transpose gap {max(gaps):.1e}, "
                   f"runtime {secs:.1f} s")
    assert ok


def test_criterion_6_dae(criterion):
    t0 = time.perf_counter()
    mesh = generate_periodic_cell_mesh(CHANNEL, 0.5)
    layer = extrude_layer_mesh(CHANNEL, mesh, (0.0, 0.5), 0.25)
    forcing = micro_forcing(MacroForcing((0.0, 0.5), {
        "f0": Profile(1.0, "ramp-hold", "sin", 0.3),
        "g1bar": Profile(1.0, "sine", "bump", omega=2 * np.pi)}), layer)
    rep = compare_dae_vs_monolithic(layer, ISO, forcing, 1.0, 1.0 / 50)
    secs = time.perf_counter() - t0
    ok = (rep["n_velocity"] <= 500 and rep["u_discrepancy"] <= 1e-6 and rep["v_discrepancy"] <= 1e-6
          and rep["identity_gap"] <= 1e-10 and rep["eig_min"] >= -1e-12 and rep["eig_max"] <= 1 + 1e-12
          and secs <= 60)
    ok = criterion("6 (DAE vs monolithic)", ok,
                   f"{rep['n_velocity']} velocity dofs, u {rep['u_discrepancy']:.1e}, "
                   f"v {rep['v_discrepancy']:.1e}, |B+C-I| {rep['identity_gap']:.1e}, "
                   f"eig [{rep['eig_min']:.1e}, {rep['eig_max']:.6f}], runtime {secs:.1f} s")
    assert ok


def _ratios(rows, key):
    vals = [r.to_dict()[key] for r in rows]
    return [b / a for a, b in zip(vals, vals[1:])]


@pytest.mark.slow
def test_criterion_7_monitors(study, criterion):
    rows, _, secs = study
    assert [r.epsilon for r in rows] == [0.25, 0.125, 0.0625]
    ratios = {k: _ratios(rows, k) for k in MONITOR_KEYS}
    worst = max(max(r) for r in ratios.values())
    ok = criterion("7 (eps-scaling monitors)", worst <= 2.0 and secs <= 600,
                   ", ".join(f"{k} {max(r):.3f}" for k, r in ratios.items())
                   + f" (max growth 2), runtime {secs:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_8_two_scale(study, criterion):
    rows, _, _ = study
    ratios = {k: _ratios(rows, k) for k in ERROR_KEYS}
    unf = max(r.unfolding for r in rows)
    ok = criterion("8 (two-scale convergence)",
                   all(max(r) <= 0.75 for r in ratios.values()) and unf <= 1e-10,
                   ", ".join(f"{k} {max(r):.3f}" for k, r in ratios.items())
                   + f" (max ratio 0.75), unfolding {unf:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path, criterion):
    cfg = CONFIGS / "channel.json"
    outs = [tmp_path / "run1", tmp_path / "run2"]
    for out in outs:
        for cmd in ("cell", "macro", "micro", "compare", "check"):
            assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
    names = sorted(p.relative_to(outs[0]).as_posix() for p in outs[0].rglob("*")
                   if p.suffix in (".csv", ".json"))
    diff = [n for n in names if (outs[0] / n).read_bytes() != (outs[1] / n).read_bytes()]
    ok = criterion("9 (determinism)", bool(names) and not diff,
                   f"{len(names)} CSV/JSON files compared, {len(diff)} differ")
    shutil.rmtree(tmp_path, ignore_errors=True)
    assert ok

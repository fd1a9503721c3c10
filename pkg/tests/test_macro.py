from __future__ import annotations

import math

import numpy as np
import pytest
import sympy

from biotplate.effective import EffectiveCoefficients
from biotplate.errors import CheckFailure, GeometryError, InputError
from biotplate.forcing import MacroForcing, Profile
from biotplate.macro import (assemble_macro_system, build_macro_spaces, darcy_velocity, l2_error_1d,
                             manufactured_case, run, stationary_solve, uniform_nodes)

SIGMA = (0.0, 1.0)


def _sympy_sources(coeffs: EffectiveCoefficients, dirichlet: str = "a"):
    """Residual sources of the strong macro equations, derived symbolically."""
    t, x = sympy.symbols("t x", real=True)
    s = x if dirichlet == "a" else 1 - x
    p = t * sympy.cos(sympy.pi * s / 2)
    u = t * sympy.sin(sympy.pi * s)
    w = t * sympy.sin(sympy.pi * s) ** 2
    c = coeffs
    b1, b2 = c.B1 - c.vol_f, c.B2 + c.d_n_f
    d = sympy.diff
    src_p = c.alpha_h * d(p, t) - c.K * d(p, x, 2) - b1 * d(u, t, x) - b2 * d(w, t, x, 2)
    src_u = -d(c.a_star * d(u, x) + c.b_star * d(w, x, 2) + b1 * p, x)
    src_w = d(c.b_star * d(u, x) + c.c_star * d(w, x, 2) + b2 * p, x, 2)
    lam = {k: sympy.lambdify((t, x), e, "numpy") for k, e in
           (("p", src_p), ("u1", src_u), ("w", src_w), ("ep", p), ("eu", u), ("ew", w))}

    def wrap(f, zero_at_start=False):
        def g(tt, xx):
            xx = np.asarray(xx, dtype=float)
            if zero_at_start and tt == 0:
                return np.zeros_like(xx)
            return np.broadcast_to(f(tt, xx), xx.shape).astype(float)
        return g

    forcing = MacroForcing(SIGMA, extra={"p": wrap(lam["p"], True), "u1": wrap(lam["u1"]),
                                         "w": wrap(lam["w"])})
    exact = {"p": wrap(lam["ep"]), "u1": wrap(lam["eu"]), "w": wrap(lam["ew"])}
    return forcing, exact


def _errors(coeffs, n, dirichlet="a", T=1.0, dt=0.5):
    forcing, exact = _sympy_sources(coeffs, dirichlet)
    neumann = "b" if dirichlet == "a" else "a"
    spaces = build_macro_spaces(uniform_nodes(SIGMA, n), (dirichlet,), (neumann,),
                                pressure_bc=coeffs.percolating)
    traj = run(coeffs, forcing, T, dt, spaces=spaces, check_energy=False)
    return [l2_error_1d(getattr(spaces, k), getattr(traj, k)[-1], lambda xx: exact[k](T, xx))
            for k in ("p", "u1")]


@pytest.mark.parametrize("which", ["channel_coeffs", "cavity_coeffs"])
@pytest.mark.parametrize("dirichlet", ["a", "b"])
def test_manufactured_order(which, dirichlet, request):
    coeffs = request.getfixturevalue(which)[0]
    e = np.array([_errors(coeffs, n, dirichlet) for n in (11, 21, 41)])
    orders = np.log2(e[:-1] / e[1:])
    assert np.all(np.abs(orders - 2.0) <= 0.3), orders


def test_module_sources_match_sympy(channel_coeffs):
    coeffs = channel_coeffs[0]
    xs = np.linspace(0.0, 1.0, 13)
    for side in ("a", "b"):
        mine, _ = manufactured_case(coeffs, SIGMA, side)
        ref, _ = _sympy_sources(coeffs, side)
        for k in ("p", "u1", "w"):
            np.testing.assert_allclose(mine.extra[k](0.7, xs), ref.extra[k](0.7, xs),
                                       rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("n", [5, 11, 40])
def test_dof_counts(n, channel_coeffs):
    sp_ = build_macro_spaces(uniform_nodes(SIGMA, n))
    assert sp_.n_p == n - 1
    assert sp_.u1.n_free == n - 2
    assert sp_.w.n_free == 2 * n - 4
    assert build_macro_spaces(uniform_nodes(SIGMA, n), pressure_bc=False).n_p == n


@pytest.mark.parametrize("d,nm", [((), ("b",)), (("a",), ()), (("a",), ("a",)), (("a", "b"), ("b",))])
def test_boundary_parts(d, nm):
    with pytest.raises(GeometryError) as exc:
        build_macro_spaces(uniform_nodes(SIGMA, 5), d, nm)
    assert exc.value.code == "empty-boundary-part"


def test_invalid_inputs(channel_coeffs):
    coeffs = channel_coeffs[0]
    with pytest.raises(GeometryError):
        uniform_nodes(SIGMA, 2)
    with pytest.raises(InputError):
        assemble_macro_system(coeffs, build_macro_spaces(uniform_nodes(SIGMA, 5)), 0.0)
    with pytest.raises(InputError):
        run(coeffs, MacroForcing.zero(SIGMA), 1.0, 0.3)


@pytest.mark.parametrize("which", ["channel_coeffs", "cavity_coeffs"])
def test_transpose_and_symmetry(which, request):
    coeffs = request.getfixturevalue(which)[0]
    system = assemble_macro_system(coeffs, build_macro_spaces(uniform_nodes(SIGMA, 41),
                                                              pressure_bc=coeffs.percolating), 0.01)
    assert system.transpose_gap <= 1e-12
    assert abs(system.matrix - system.matrix.T).max() <= 1e-12


def test_zero_forcing_stays_zero(channel_coeffs):
    traj = run(channel_coeffs[0], MacroForcing.zero(SIGMA), 0.5, 0.05, n_nodes=21)
    for arr in (traj.p, traj.u1, traj.w, traj.energy):
        assert np.abs(arr).max() == 0.0


def test_decoupled_pressure(channel_coeffs):
    # without couplings the plate stays at rest under a pure pressure source
    c = channel_coeffs[0]
    dec = EffectiveCoefficients(**{**c.to_dict(), "B1": c.vol_f, "B2": -c.d_n_f})
    assert dec.membrane_coupling == 0.0 and dec.bending_coupling == 0.0
    src = MacroForcing(SIGMA, extra={"p": lambda t, x: t * np.sin(np.pi * x)})
    traj = run(dec, src, 0.2, 0.05, n_nodes=21)
    assert np.abs(traj.p).max() > 0
    assert np.abs(traj.u1).max() == 0.0 and np.abs(traj.w).max() == 0.0


@pytest.mark.parametrize("which", ["channel_coeffs", "cavity_coeffs"])
def test_energy_after_cutoff(which, request):
    coeffs = request.getfixturevalue(which)[0]
    prof = Profile(1.0, "sine", "bump", omega=2 * math.pi, t_off=0.5)
    forcing = MacroForcing(SIGMA, {"f1bar": prof, "f0": Profile(0.5, "ramp-hold", "sin", 0.25, t_off=0.5)})
    traj = run(coeffs, forcing, 1.0, 0.01, n_nodes=41)
    k = np.flatnonzero(traj.times > 0.5 + 1e-12)
    assert traj.forcing_free[k].all()
    assert np.all(np.diff(traj.energy[k[0] - 1:]) <= 1e-9 * traj.energy[k[0] - 1])
    assert traj.energy[-1] > 0


def test_percolating_energy_strictly_decays(channel_coeffs):
    forcing = MacroForcing(SIGMA, {"g1bar": Profile(1.0, "ramp-hold", "bump", 0.1, t_off=0.1)})
    traj = run(channel_coeffs[0], forcing, 0.5, 0.01, n_nodes=21)
    tail = traj.energy[traj.times > 0.1 + 1e-12]
    assert np.all(np.diff(tail) < 0)


def test_stationary_limit(channel_coeffs):
    # with constant loads the transient settles to the stationary solve
    c = channel_coeffs[0]
    forcing = MacroForcing(SIGMA, {"g1bar": Profile(1.0, "ramp-hold", "bump", 0.05)})
    spaces = build_macro_spaces(uniform_nodes(SIGMA, 21))
    system = assemble_macro_system(c, spaces, 1.0)
    p_s, x_s = stationary_solve(system, forcing, 1.0)
    traj = run(c, forcing, 20.0, 1.0, spaces=spaces)
    u, w = spaces.split_x(x_s)
    np.testing.assert_allclose(traj.w[-1], w, atol=1e-6 * np.abs(w).max())


def test_darcy_velocity_constant_pressure(channel_coeffs):
    c = channel_coeffs[0]
    spaces = build_macro_spaces(uniform_nodes(SIGMA, 11), pressure_bc=False)
    zero = {"p": np.zeros(spaces.p.n_raw), "u1": np.zeros(spaces.u1.n_raw),
            "w": np.zeros(spaces.w.n_raw)}
    state = dict(zero, p=np.full(spaces.p.n_raw, 3.0))
    v = darcy_velocity(spaces, c, zero, state, 0.1)
    assert np.abs(v["v1"]).max() <= 1e-14 and np.abs(v["v2"]).max() == 0.0
    v = darcy_velocity(spaces, c, zero, state, 0.1, f0=lambda x: np.ones_like(x))
    np.testing.assert_allclose(v["v1"], c.K)


def test_nonzero_initial_forcing_rejected(channel_coeffs):
    bad = MacroForcing(SIGMA, extra={"w": lambda t, x: np.ones_like(x)})
    with pytest.raises(InputError):
        run(channel_coeffs[0], bad, 0.1, 0.05)


def test_positivity_gate(channel_coeffs):
    c = channel_coeffs[0]
    bad = EffectiveCoefficients(**{**c.to_dict(), "c_star": -1.0})
    with pytest.raises(CheckFailure):
        assemble_macro_system(bad, build_macro_spaces(uniform_nodes(SIGMA, 5)), 0.1)

from __future__ import annotations

import numpy as np
import pytest

from biotplate.errors import CheckFailure
from biotplate.forcing import MacroForcing, Profile
from biotplate.geometry import extrude_layer_mesh
from biotplate.micro.fsi import MicroStepper, micro_forcing
from biotplate.micro.galerkin import (compare_dae_vs_monolithic, dae_solve, divergence_free_basis,
                                      galerkin_reduce)

SIGMA = (0.0, 0.5)


@pytest.fixture(scope="module")
def layer(channel_geom, coarse_channel):
    return extrude_layer_mesh(channel_geom, coarse_channel, SIGMA, 0.25)


@pytest.fixture(scope="module")
def system(layer, iso):
    return galerkin_reduce(layer, iso, dt=0.02)


@pytest.fixture(scope="module")
def forcing(layer):
    return micro_forcing(MacroForcing(SIGMA, {"f0": Profile(1.0, "smoothstep", "sin", 0.4),
                                              "g1bar": Profile(0.5, "sine", "bump", omega=3.0)}),
                         layer)


def test_basis_is_divergence_free(system):
    B = system.stepper.B
    N = divergence_free_basis(system.stepper)
    assert np.abs(B @ N).max() <= 1e-12
    assert N.shape[1] == system.stepper.n_velocity - np.linalg.matrix_rank(B.toarray())


def test_orthonormal_and_identity(system):
    assert system.orthonormality_gap <= 1e-10
    assert system.identity_gap <= 1e-10
    np.testing.assert_allclose(system.B, system.B.T, atol=0)
    assert system.D.min() >= -1e-12 and system.D.max() <= 1 + 1e-12
    assert np.all(np.diff(system.D) <= 1e-14)


def test_eigendecomposition_reconstructs(system):
    Q, D = system.Q, system.D
    np.testing.assert_allclose(Q.T @ np.diag(D) @ Q, system.B, atol=1e-12)


def test_algebraic_modes_exist(system):
    # solid-only velocity fields give D = 0 (no viscous energy)
    assert 0 < system.rank < system.m


@pytest.mark.parametrize("m", [1, 10, 40])
def test_nested_basis(layer, iso, system, m):
    sub = galerkin_reduce(layer, iso, m=m, dt=0.02)
    np.testing.assert_allclose(sub.Phi, system.Phi[:, :m], atol=1e-12)


@pytest.mark.parametrize("m", [0, 10 ** 6])
def test_basis_size_errors(system, m):
    with pytest.raises(CheckFailure) as exc:
        galerkin_reduce(system.stepper, m=m)
    assert exc.value.code == "basis-deficient"


def test_dae_matches_monolithic(layer, iso, forcing):
    rep = compare_dae_vs_monolithic(layer, iso, forcing, 1.0, 0.02)
    assert rep["u_discrepancy"] <= 1e-6 and rep["v_discrepancy"] <= 1e-6
    assert rep["identity_gap"] <= 1e-10


def test_algebraic_modes_follow_load(system, forcing):
    tr = dae_solve(system, forcing, 0.2, 0.02)
    alg = np.arange(system.m) >= system.rank
    h = system.reduced_load(forcing, 0.2)
    np.testing.assert_allclose(tr.alpha_star[-1, alg], h[alg], atol=1e-14)


def test_unforced_modes_decay(system, layer):
    prof = Profile(1.0, "ramp-hold", "sin", 0.1, t_off=0.1)
    f = micro_forcing(MacroForcing(SIGMA, {"f0": prof}), layer)
    tr = dae_solve(system, f, 1.0, 0.02)
    amp = np.abs(tr.alpha_star[tr.times > 0.1 + 1e-12]).max(axis=1)
    assert np.all(np.diff(amp) <= 1e-15)


def test_incompatible_initial_load(system, layer):
    bad = micro_forcing(MacroForcing(SIGMA), layer)
    bad.macro.profiles["g0"] = _Constant()
    with pytest.raises(CheckFailure) as exc:
        dae_solve(system, bad, 0.1, 0.05)
    assert exc.value.code == "compatibility-violated"


class _Constant(Profile):
    """A load that is already on at t = 0."""

    def time_factor(self, t):
        return 1.0

    def __call__(self, t, x, sigma):
        return np.ones_like(np.asarray(x, dtype=float))

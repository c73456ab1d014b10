"""Field evaluations of the coupled SDE.

Key oracle: the Ito-Stratonovich conversion. The Stratonovich drift of
d rho = L dt + G dW is L - (1/2) DG[G], with DG[G] the directional
derivative of G along itself, here evaluated by central finite
differences. The control-affine drift satisfies

    L(rho) - 1/2 DG[G](rho) = L~(rho) + 2 sqrt(eta M) Tr(Jz rho) G(rho),

the offset being the part the deterministic system carries inside V(t).
"""

import numpy as np
import pytest

from spinfilter import build_basis, projector
from spinfilter.dynamics import (
    deterministic_rhs,
    diffusion_G,
    drift_L,
    filter_correction,
    observation_increment,
    stratonovich_drift,
)
from spinfilter.states import expect_jz, innovation_gap

from conftest import SIM_PARAMS, random_pair

TOL = 1e-10


def _fd_dg_along_g(basis, rho, eta, M, step=1e-6):
    """Central finite-difference directional derivative of G along G."""
    g = diffusion_G(basis, rho, eta, M)
    plus = diffusion_G(basis, rho + step * g, eta, M)
    minus = diffusion_G(basis, rho - step * g, eta, M)
    return (plus - minus) / (2.0 * step)


def test_drift_vanishes_at_eigenstates(basis3, params):
    for n in range(3):
        rho = projector(basis3, n)
        assert np.max(np.abs(drift_L(basis3, rho, 0.0, params.omega, params.M))) < 1e-14
        assert np.max(np.abs(diffusion_G(basis3, rho, params.eta, params.M))) < 1e-14


def test_two_level_drift_example():
    b = build_basis(2)
    rho = 0.5 * np.ones((2, 2), dtype=complex)
    out = drift_L(b, rho, u=0.0, omega=0.0, M=1.0)
    assert np.allclose(out, np.array([[0, -0.25], [-0.25, 0]]), atol=1e-14)


def test_diffusion_example(basis3):
    rho = np.eye(3, dtype=complex) / 3
    out = diffusion_G(basis3, rho, eta=0.5, M=1.5)
    expected = np.sqrt(0.75) * (2.0 / 3.0) * np.diag([1.0, 0.0, -1.0])
    assert np.allclose(out, expected, atol=1e-14)


@pytest.mark.parametrize("n_dim", [2, 3, 4, 5, 6])
def test_trace_and_hermiticity_preservation(n_dim, params):
    basis = build_basis(n_dim)
    rng = np.random.default_rng(11)
    for seed in range(200 if n_dim == 3 else 100):
        pair = random_pair(n_dim, 1000 * n_dim + seed)
        u = float(rng.standard_normal())
        for field in (
            drift_L(basis, pair.rho, u, params.omega, params.M),
            diffusion_G(basis, pair.rho, params.eta, params.M),
            filter_correction(basis, pair.rho, pair.rho_hat, params),
        ):
            assert abs(np.trace(field)) < TOL
            assert np.max(np.abs(field - field.conj().T)) < TOL


def test_filter_correction_structure(basis3, params):
    # vanishes when predictions agree
    matched = type(params)(
        omega=params.omega, eta=params.eta, M=params.M,
        omega_hat=params.omega, eta_hat=params.eta, M_hat=params.M,
    )
    pair = random_pair(3, 3)
    same = filter_correction(basis3, pair.rho, pair.rho, matched)
    assert np.max(np.abs(same)) < 1e-14
    # vanishes at filter eigenstates regardless of the gap
    corr = filter_correction(basis3, projector(basis3, 2), projector(basis3, 0), params)
    assert np.max(np.abs(corr)) < 1e-14
    # compositional identity: 2 * gap * G(rho_hat)
    for seed in range(10):
        pair = random_pair(3, 50 + seed)
        gap = innovation_gap(params, basis3, pair.rho, pair.rho_hat)
        expected = 2.0 * gap * diffusion_G(basis3, pair.rho_hat, params.eta_hat, params.M_hat)
        got = filter_correction(basis3, pair.rho, pair.rho_hat, params)
        assert np.max(np.abs(got - expected)) < 1e-12


def test_stratonovich_drift_zero_at_eigenstates(basis3):
    for eta in (0.4, 1.0):
        for n in range(3):
            out = stratonovich_drift(basis3, projector(basis3, n), 0.0, 0.7, eta, 1.4)
            assert np.max(np.abs(out)) < 1e-14


@pytest.mark.parametrize("n_dim", [2, 3, 5])
def test_ito_stratonovich_conversion_oracle(n_dim, params):
    """L - DG[G]/2 equals the displayed control-affine drift plus its V-offset."""
    basis = build_basis(n_dim)
    rng = np.random.default_rng(7)
    for seed in range(10):
        pair = random_pair(n_dim, 300 + seed)
        u = float(rng.standard_normal())
        lhs = drift_L(basis, pair.rho, u, params.omega, params.M) - 0.5 * _fd_dg_along_g(
            basis, pair.rho, params.eta, params.M
        )
        offset = 2.0 * params.root_em * expect_jz(basis, pair.rho)
        rhs = stratonovich_drift(
            basis, pair.rho, u, params.omega, params.eta, params.M
        ) + offset * diffusion_G(basis, pair.rho, params.eta, params.M)
        assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_deterministic_rhs_composition(basis3, params):
    pair = random_pair(3, 17)
    v_val = 0.37
    expected = stratonovich_drift(
        basis3, pair.rho, 1.2, params.omega, params.eta, params.M
    ) + v_val * diffusion_G(basis3, pair.rho, params.eta, params.M)
    got = deterministic_rhs(basis3, pair.rho, 1.2, v_val, params.omega, params.eta, params.M)
    assert np.max(np.abs(got - expected)) < 1e-14


def test_observation_increment(basis3, params):
    mixed = np.eye(3, dtype=complex) / 3
    assert observation_increment(basis3, mixed, params, dW=0.01, dt=1e-3) == pytest.approx(0.01)
    rho0 = projector(basis3, 0)
    dy = observation_increment(basis3, rho0, params, dW=0.0, dt=1e-3)
    assert dy == pytest.approx(2 * np.sqrt(0.56) * 1e-3, abs=1e-15)
    assert dy == pytest.approx(1.4966630e-3, abs=1e-9)
    # linear in dW at fixed state and dt
    base = observation_increment(basis3, rho0, params, dW=0.0, dt=1e-3)
    for dw in (0.5, -0.2, 3.0):
        assert observation_increment(basis3, rho0, params, dW=dw, dt=1e-3) == pytest.approx(
            base + dw, abs=1e-15
        )
    with pytest.raises(ValueError):
        observation_increment(basis3, rho0, params, dW=0.0, dt=0.0)

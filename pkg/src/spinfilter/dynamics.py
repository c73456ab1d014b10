"""Drift and diffusion fields of the coupled stochastic master equation.

Ito form, driven by a single Wiener process shared by the true state and
the filter:

    d rho  = L(rho; u, omega, M) dt + G(rho; eta, M) dW
    d rho^ = L(rho^; u, omega^, M^) dt + G(rho^; eta^, M^) dW
             + 2 T(rho, rho^) G(rho^; eta^, M^) dt

with innovation gap T = sqrt(eta M) Tr(Jz rho) - sqrt(eta^ M^) Tr(Jz rho^).
The observation process satisfies dY = dW + 2 sqrt(eta M) Tr(Jz rho) dt, so
driving the filter with dY - 2 sqrt(eta^ M^) Tr(Jz rho^) dt is pathwise the
same as the shared-Wiener form above.
"""

import numpy as np

from .spin import SpinBasis
from .states import SystemParams, expect_jz, innovation_gap

__all__ = [
    "drift_L",
    "diffusion_G",
    "filter_correction",
    "stratonovich_drift",
    "deterministic_rhs",
    "observation_increment",
]


def drift_L(basis: SpinBasis, rho: np.ndarray, u: float, omega: float, M: float) -> np.ndarray:
    """Lindblad drift -i[omega Jz + u Jy, rho] + M/2 (2 Jz rho Jz - Jz^2 rho - rho Jz^2)."""
    h = omega * basis.jz + u * basis.jy
    jz_rho_jz = basis.z[:, None] * rho * basis.z[None, :]
    z2 = basis.z**2
    return -1j * (h @ rho - rho @ h) + 0.5 * M * (
        2.0 * jz_rho_jz - z2[:, None] * rho - rho * z2[None, :]
    )


def diffusion_G(basis: SpinBasis, rho: np.ndarray, eta: float, M: float) -> np.ndarray:
    """Measurement back-action sqrt(eta M) (Jz rho + rho Jz - 2 Tr(Jz rho) rho)."""
    t = expect_jz(basis, rho)
    return np.sqrt(eta * M) * (
        basis.z[:, None] * rho + rho * basis.z[None, :] - 2.0 * t * rho
    )


def filter_correction(
    basis: SpinBasis, rho: np.ndarray, rho_hat: np.ndarray, params: SystemParams
) -> np.ndarray:
    """Innovation drift 2 T(rho, rho^) G(rho^; eta^, M^) of the filter equation."""
    gap = innovation_gap(params, basis, rho, rho_hat)
    return 2.0 * gap * diffusion_G(basis, rho_hat, params.eta_hat, params.M_hat)


def stratonovich_drift(
    basis: SpinBasis, rho: np.ndarray, u: float, omega: float, eta: float, M: float
) -> np.ndarray:
    """Drift of the control-affine deterministic system.

    -i[omega Jz + u Jy, rho] + M ((1-eta) Jz rho Jz
        - (1+eta)/2 (Jz^2 rho + rho Jz^2) + 2 eta Tr(Jz^2 rho) rho)

    The full Stratonovich drift of the SDE is this plus
    2 sqrt(eta M) Tr(Jz rho) G(rho); that offset is carried by the control
    V(t) in :func:`deterministic_rhs`.
    """
    h = omega * basis.jz + u * basis.jy
    jz_rho_jz = basis.z[:, None] * rho * basis.z[None, :]
    z2 = basis.z**2
    tr_z2 = float(np.real(np.sum(z2 * np.diagonal(rho))))
    return -1j * (h @ rho - rho @ h) + M * (
        (1.0 - eta) * jz_rho_jz
        - 0.5 * (1.0 + eta) * (z2[:, None] * rho + rho * z2[None, :])
        + 2.0 * eta * tr_z2 * rho
    )


def deterministic_rhs(
    basis: SpinBasis, rho: np.ndarray, u: float, V: float, omega: float, eta: float, M: float
) -> np.ndarray:
    """Right-hand side of one component of the deterministic coupled system."""
    return stratonovich_drift(basis, rho, u, omega, eta, M) + V * diffusion_G(basis, rho, eta, M)


def observation_increment(
    basis: SpinBasis, rho: np.ndarray, params: SystemParams, dW: float, dt: float
) -> float:
    """dY = dW + 2 sqrt(eta M) Tr(Jz rho) dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(dW) + 2.0 * params.root_em * expect_jz(basis, rho) * dt

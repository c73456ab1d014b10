"""Density matrices: validity, distances, and the scalar state functionals.

Density matrices are plain complex ndarrays; functions here enforce or
measure the Hermitian / unit-trace / PSD invariants and evaluate the
functionals that drive the feedback analysis:

    theta_n(rho)   = Tr(i [Jy, rho] P_n)          (control response of pop. n)
    p_n(rho)       = J - n - Tr(Jz rho)           (signed distance in <Jz>)
    lambda_n(rho)  = Tr(Jz^2 rho) - (J - n)^2
    variance_z     = Tr(Jz^2 rho) - Tr(Jz rho)^2
    innovation_gap = sqrt(eta M) Tr(Jz rho) - sqrt(eta^ M^) Tr(Jz rho^)
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spin import SpinBasis

__all__ = [
    "TOL_HERM",
    "TOL_TRACE",
    "TOL_PSD",
    "CoupledState",
    "SystemParams",
    "ValidityReport",
    "validate",
    "require_valid",
    "population",
    "populations",
    "expect_jz",
    "purity",
    "fidelity",
    "bures_distance",
    "bures_to_eigenstate",
    "coupled_distance",
    "Functionals",
    "functionals",
    "theta_n",
    "variance_z",
    "innovation_gap",
    "random_density",
]

TOL_HERM = 1e-9
TOL_TRACE = 1e-9
TOL_PSD = 1e-9

# Negative fidelity eigenvalues within this are rounding noise and clamped.
_EIG_CLAMP = 1e-12


class CoupledState(NamedTuple):
    """Pair of true and estimated density matrices."""

    rho: np.ndarray
    rho_hat: np.ndarray


@dataclass(frozen=True)
class SystemParams:
    """True (omega, eta, M) and estimated (omega_hat, eta_hat, M_hat) parameters."""

    omega: float
    eta: float
    M: float
    omega_hat: float
    eta_hat: float
    M_hat: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if not 0.0 < self.eta_hat <= 1.0:
            raise ValueError(f"eta_hat must be in (0, 1], got {self.eta_hat}")
        if self.M <= 0.0 or self.M_hat <= 0.0:
            raise ValueError("measurement strengths M, M_hat must be > 0")
        if self.omega < 0.0 or self.omega_hat < 0.0:
            raise ValueError("omega, omega_hat must be >= 0")

    @property
    def root_em(self) -> float:
        return float(np.sqrt(self.eta * self.M))

    @property
    def root_em_hat(self) -> float:
        return float(np.sqrt(self.eta_hat * self.M_hat))


@dataclass(frozen=True)
class ValidityReport:
    herm_defect: float
    trace_defect: float
    min_eigenvalue: float
    herm_ok: bool
    trace_ok: bool
    psd_ok: bool

    @property
    def ok(self) -> bool:
        return self.herm_ok and self.trace_ok and self.psd_ok


def validate(
    rho: np.ndarray,
    tol_herm: float = TOL_HERM,
    tol_trace: float = TOL_TRACE,
    tol_psd: float = TOL_PSD,
) -> ValidityReport:
    """Measure the Hermiticity, trace and positivity defects of a state."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    herm_defect = float(np.max(np.abs(rho - rho.conj().T)))
    trace_defect = float(abs(np.trace(rho) - 1.0))
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    return ValidityReport(
        herm_defect=herm_defect,
        trace_defect=trace_defect,
        min_eigenvalue=min_eig,
        herm_ok=herm_defect <= tol_herm,
        trace_ok=trace_defect <= tol_trace,
        psd_ok=min_eig >= -tol_psd,
    )


def require_valid(rho: np.ndarray, **tols) -> np.ndarray:
    """Return ``rho`` unchanged, raising if any invariant is violated."""
    report = validate(rho, **tols)
    if not report.ok:
        raise ValueError(f"invalid density matrix: {report}")
    return rho


def population(rho: np.ndarray, n: int) -> float:
    return float(np.real(rho[n, n]))


def populations(rho: np.ndarray) -> np.ndarray:
    return np.real(np.diagonal(rho)).copy()


def expect_jz(basis: SpinBasis, rho: np.ndarray) -> float:
    return float(np.real(np.sum(basis.z * np.diagonal(rho))))


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    w = np.where(w > _EIG_CLAMP, w, np.maximum(w, 0.0))
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Tr sqrt(sqrt(a) b sqrt(a)), clamped to [0, 1].

    Eigenvalues of the product at rounding level (|w| <= 1e-14) are zeroed
    before the square root; a spurious 1e-16 eigenvalue would otherwise
    contribute 1e-8 to the trace.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    sa = _psd_sqrt(a)
    w = np.linalg.eigvalsh(sa @ b @ sa)
    w = np.where(w > 1e-14, w, 0.0)
    return float(min(1.0, max(0.0, np.sum(np.sqrt(w)))))


def bures_distance(a: np.ndarray, b: np.ndarray) -> float:
    """sqrt(2 - 2 F(a, b)); equals sqrt(2 - 2 sqrt(a_nn)) against a pure e_n."""
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * fidelity(a, b))))


def bures_to_eigenstate(rho: np.ndarray, n: int) -> float:
    """Fast pure-target form of the Bures distance."""
    p = min(1.0, max(0.0, float(np.real(rho[n, n]))))
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * np.sqrt(p))))


def coupled_distance(x: CoupledState, y: CoupledState) -> float:
    """Sum of the componentwise Bures distances between two state pairs."""
    if x.rho.shape != y.rho.shape or x.rho_hat.shape != y.rho_hat.shape:
        raise ValueError("coupled states have mismatched dimensions")
    return bures_distance(x.rho, y.rho) + bures_distance(x.rho_hat, y.rho_hat)


class Functionals(NamedTuple):
    theta: float
    p: float
    lam: float


def theta_n(basis: SpinBasis, rho: np.ndarray, n: int) -> float:
    """Tr(i [Jy, rho] P_n) = 2 c_{n+1} Re(rho_{n,n+1}) - 2 c_n Re(rho_{n,n-1})."""
    c = basis.c
    out = 0.0
    if n + 1 < basis.n_dim:
        out += 2.0 * c[n] * float(np.real(rho[n, n + 1]))
    if n >= 1:
        out -= 2.0 * c[n - 1] * float(np.real(rho[n, n - 1]))
    return out


def functionals(basis: SpinBasis, rho: np.ndarray, n: int) -> Functionals:
    """Evaluate (theta_n, p_n, lambda_n) at a state."""
    if not 0 <= n < basis.n_dim:
        raise ValueError(f"eigenstate index {n!r} out of range")
    t = expect_jz(basis, rho)
    p = basis.j - n - t
    lam = float(np.real(np.sum(basis.z**2 * np.diagonal(rho)))) - (basis.j - n) ** 2
    return Functionals(theta=theta_n(basis, rho, n), p=p, lam=lam)


def variance_z(basis: SpinBasis, rho: np.ndarray) -> float:
    t = expect_jz(basis, rho)
    return float(np.real(np.sum(basis.z**2 * np.diagonal(rho)))) - t * t


def innovation_gap(params: SystemParams, basis: SpinBasis, rho: np.ndarray, rho_hat: np.ndarray) -> float:
    """Mismatch between measured and predicted signal rates."""
    return params.root_em * expect_jz(basis, rho) - params.root_em_hat * expect_jz(basis, rho_hat)


def random_density(n_dim: int, rank: int, seed) -> np.ndarray:
    """Random rank-``rank`` state G G^* / Tr(G G^*) with Gaussian G (N x rank)."""
    if not 1 <= rank <= n_dim:
        raise ValueError(f"rank must be in 1..{n_dim}, got {rank}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_dim, rank)) + 1j * rng.standard_normal((n_dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real

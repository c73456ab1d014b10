"""Angular momentum operators for an N-level system.

The measurement operator Jz is diagonal with eigenvalues J, J-1, ..., -J
(J = (N-1)/2) and the control operator Jy is Hermitian tridiagonal with
off-diagonal weights c_m = sqrt((2J+1-m)*m)/2.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SpinBasis", "build_basis", "projector"]


@dataclass(frozen=True)
class SpinBasis:
    """Operators of an N-level angular momentum system.

    Attributes
    ----------
    n_dim : dimension N >= 2
    j : total angular momentum (N - 1) / 2
    jz : (N, N) real diagonal measurement operator
    jy : (N, N) complex Hermitian tridiagonal control operator
    c : (N-1,) ladder coefficients, c[m-1] = sqrt((2J+1-m)*m)/2
    """

    n_dim: int
    j: float
    jz: np.ndarray = field(repr=False)
    jy: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)

    @property
    def z(self) -> np.ndarray:
        """Diagonal of jz (eigenvalues J - n, descending)."""
        return np.real(np.diagonal(self.jz))

    def jx(self) -> np.ndarray:
        """Third axis operator, defined through the commutator i*[jy, jz]."""
        return 1j * (self.jy @ self.jz - self.jz @ self.jy)


def build_basis(n_dim: int) -> SpinBasis:
    """Construct the spin operators for an N-level system.

    Raises
    ------
    ValueError
        If ``n_dim < 2``.
    """
    if int(n_dim) != n_dim or n_dim < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n_dim!r}")
    n_dim = int(n_dim)
    j = (n_dim - 1) / 2.0

    z = j - np.arange(n_dim, dtype=float)
    jz = np.diag(z).astype(complex)

    m = np.arange(1, n_dim, dtype=float)
    c = 0.5 * np.sqrt((2.0 * j + 1.0 - m) * m)

    jy = np.zeros((n_dim, n_dim), dtype=complex)
    idx = np.arange(n_dim - 1)
    jy[idx, idx + 1] = -1j * c
    jy[idx + 1, idx] = 1j * c

    for arr in (jz, jy, c):
        arr.setflags(write=False)
    return SpinBasis(n_dim=n_dim, j=j, jz=jz, jy=jy, c=c)


def projector(basis: SpinBasis, n: int) -> np.ndarray:
    """Pure state e_n e_n^* onto the n-th measurement eigenvector."""
    if int(n) != n or not 0 <= n < basis.n_dim:
        raise ValueError(f"eigenstate index {n!r} out of range 0..{basis.n_dim - 1}")
    rho = np.zeros((basis.n_dim, basis.n_dim), dtype=complex)
    rho[int(n), int(n)] = 1.0
    return rho

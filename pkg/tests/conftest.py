import numpy as np
import pytest

from spinfilter import ControllerSpec, SystemParams, build_basis, projector
from spinfilter.states import CoupledState, random_density

SIM_PARAMS = SystemParams(omega=0.4, eta=0.4, M=1.4, omega_hat=0.5, eta_hat=0.5, M_hat=1.5)


@pytest.fixture
def basis3():
    return build_basis(3)


@pytest.fixture
def params():
    return SIM_PARAMS


@pytest.fixture
def boundary_law():
    return ControllerSpec(variant="boundary", target=0, alpha=5.0, beta=2.0)


@pytest.fixture
def interior_law():
    return ControllerSpec(variant="interior", target=1, alpha=5.0, beta=2.0, eps1=0.1, eps2=0.3)


def random_pair(n_dim, seed, rank=None):
    rank = n_dim if rank is None else rank
    ss = np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return CoupledState(random_density(n_dim, rank, a), random_density(n_dim, rank, b))


def interior_pair(n_dim, seed, floor=1e-2):
    """Random full-rank pair with all populations bounded away from zero."""
    for offset in range(100):
        pair = random_pair(n_dim, seed + 7919 * offset)
        pops = np.concatenate(
            [np.real(np.diagonal(pair.rho)), np.real(np.diagonal(pair.rho_hat))]
        )
        if np.min(pops) >= floor:
            return pair
    raise RuntimeError("could not sample an interior pair")


def eigen_pair(basis, n, m):
    return CoupledState(projector(basis, n), projector(basis, m))

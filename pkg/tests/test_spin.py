"""Operator construction: eigenvalue ladders, ladder coefficients, algebra closure."""

import numpy as np
import pytest

from spinfilter import build_basis, projector

TOL = 1e-10


def test_two_level_matrices():
    b = build_basis(2)
    assert np.allclose(b.jz, np.diag([0.5, -0.5]))
    assert np.allclose(b.jy, np.array([[0, -0.5j], [0.5j, 0]]))
    assert np.allclose(b.c, [0.5])


def test_three_level_matrices():
    b = build_basis(3)
    assert np.allclose(b.jz, np.diag([1.0, 0.0, -1.0]))
    root_half = np.sqrt(2.0) / 2.0
    assert np.allclose(b.c, [root_half, root_half])
    assert np.allclose(b.jy[0, 1], -1j * root_half)
    assert np.allclose(b.jy[1, 0], 1j * root_half)


def test_five_level_ladder():
    b = build_basis(5)
    assert np.allclose(np.diag(b.jz), [2, 1, 0, -1, -2])
    root6_half = np.sqrt(6.0) / 2.0
    assert np.allclose(b.c, [1.0, root6_half, root6_half, 1.0])


@pytest.mark.parametrize("n_dim", range(2, 9))
def test_jy_spectrum_matches_jz(n_dim):
    b = build_basis(n_dim)
    eig_y = np.sort(np.linalg.eigvalsh(b.jy))
    eig_z = np.sort(np.diag(b.jz).real)
    assert np.max(np.abs(eig_y - eig_z)) < TOL


@pytest.mark.parametrize("n_dim", range(2, 9))
def test_casimir_and_algebra_closure(n_dim):
    b = build_basis(n_dim)
    jx = b.jx()
    total = jx @ jx + b.jy @ b.jy + b.jz @ b.jz
    casimir = b.j * (b.j + 1.0)
    assert np.max(np.abs(total - casimir * np.eye(n_dim))) < TOL
    # jx := i [jy, jz] closes the algebra: [jz, jx] = -i jy under this sign choice
    comm = b.jz @ jx - jx @ b.jz
    assert np.max(np.abs(comm + 1j * b.jy)) < TOL
    assert np.max(np.abs(jx - jx.conj().T)) < TOL


@pytest.mark.parametrize("n_dim", [2, 3, 5, 7])
def test_jy_column_action(n_dim):
    b = build_basis(n_dim)
    c = np.concatenate([[0.0], b.c, [0.0]])  # 1-indexed with c_0 = c_N = 0
    for n in range(n_dim):
        col = b.jy[:, n]
        expected = np.zeros(n_dim, dtype=complex)
        if n - 1 >= 0:
            expected[n - 1] = -1j * c[n]
        if n + 1 < n_dim:
            expected[n + 1] = 1j * c[n + 1]
        assert np.allclose(col, expected)


@pytest.mark.parametrize("n_dim", [2, 3, 6])
def test_projector_population(n_dim):
    b = build_basis(n_dim)
    for n in range(n_dim):
        p = projector(b, n)
        assert p[n, n] == 1.0
        assert np.trace(p) == 1.0
        assert np.real(np.trace(b.jz @ p)) == pytest.approx(b.j - n, abs=1e-14)


def test_projector_examples():
    b = build_basis(3)
    assert np.allclose(projector(b, 0), np.diag([1, 0, 0]))
    assert np.allclose(projector(b, 2), np.diag([0, 0, 1]))
    b2 = build_basis(2)
    assert np.allclose(projector(b2, 1), np.diag([0, 1]))


def test_invalid_dimension_and_index():
    with pytest.raises(ValueError):
        build_basis(1)
    with pytest.raises(ValueError):
        build_basis(0)
    b = build_basis(3)
    with pytest.raises(ValueError):
        projector(b, 3)
    with pytest.raises(ValueError):
        projector(b, -1)


def test_basis_immutable():
    b = build_basis(3)
    with pytest.raises(ValueError):
        b.jz[0, 0] = 5.0

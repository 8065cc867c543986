import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fungraph.basis import eval_basis, fourier
from fungraph.errors import DegenerateError, DimensionError
from fungraph.fpca import (
    estimate_covariance,
    fpca_basis,
    node_bases,
    project_scores,
    quadrature_grid,
    select_truncation,
    shared_truncation,
)


def orthonormal_columns(grid, w, k, seed=0):
    """Columns orthonormal under the quadrature inner product."""
    F = eval_basis(fourier(k), grid)
    return F @ np.linalg.inv(np.linalg.cholesky(F.T @ (w[:, None] * F))).T


def test_quadrature_grid():
    grid, w = quadrature_grid(100)
    assert grid[0] == 0.01 and grid[-1] == 1.0
    assert w.sum() == pytest.approx(0.99)


def test_covariance_cases():
    grid, _ = quadrature_grid(20)
    assert not estimate_covariance(np.ones((4, 20))).any()
    f = np.sin(grid)
    C = estimate_covariance(np.stack([f, -f]))
    np.testing.assert_allclose(C, 2 * np.outer(f, f))
    with pytest.raises(DegenerateError):
        estimate_covariance(np.ones((1, 20)))


def test_covariance_monte_carlo():
    grid, w = quadrature_grid(50)
    Phi = eval_basis(fourier(3), grid)
    Sigma = np.diag([2.0, 1.0, 0.5])
    rng = np.random.default_rng(0)
    scores = rng.multivariate_normal(np.zeros(3), Sigma, size=5000)
    C = estimate_covariance(scores @ Phi.T)
    target = Phi @ Sigma @ Phi.T
    assert np.linalg.norm(C - target) / np.linalg.norm(target) < 0.05


def test_diagonal_operator_eigenvalues():
    G = 3
    w = np.ones(G)
    nb = fpca_basis(np.diag([3.0, 2.0, 1.0]), w)
    np.testing.assert_allclose(nb.eigenvalues, [3, 2, 1])


def test_constructed_spectrum_recovered():
    grid, w = quadrature_grid(100)
    Phi = orthonormal_columns(grid, w, 4)
    lam = np.array([4.0, 2.0, 1.0, 0.5])
    nb = fpca_basis(Phi @ np.diag(lam) @ Phi.T, w, 4)
    np.testing.assert_allclose(nb.eigenvalues, lam, atol=1e-10)
    for m in range(4):
        match = min(np.abs(nb.eigenfunctions[:, m] - s * Phi[:, m]).max() for s in (1, -1))
        assert match < 1e-6


def test_sign_convention():
    grid, w = quadrature_grid(40)
    Phi = orthonormal_columns(grid, w, 3)
    nb = fpca_basis(Phi @ np.diag([3.0, 2, 1]) @ Phi.T, w, 3)
    u = np.sqrt(w)[:, None] * nb.eigenfunctions
    for m in range(3):
        first = u[np.nonzero(np.abs(u[:, m]) > 1e-8 * np.abs(u[:, m]).max())[0][0], m]
        assert first > 0


def test_zero_covariance_and_asymmetry():
    w = np.ones(4)
    assert not fpca_basis(np.zeros((4, 4)), w).eigenvalues.any()
    bad = np.eye(4)
    bad[0, 1] = 1e-3
    with pytest.raises(ValueError):
        fpca_basis(bad, w)


def test_select_truncation_examples():
    assert select_truncation([3, 2, 1], 0.5) == 1
    assert select_truncation([3, 2, 1], 0.9) == 3
    assert select_truncation([3, 2, 1, 0, 0], 1.0) == 3
    assert select_truncation([3, 2, 1], 0.9, M_max=2) == 2
    with pytest.raises(DegenerateError):
        select_truncation([0, 0], 0.5)


def curves_from_scores(n=200, seed=0, G=100):
    grid, w = quadrature_grid(G)
    rng = np.random.default_rng(seed)
    F = eval_basis(fourier(7), grid)
    sd = np.array([3, 2, 1.5, 1, 0.7, 0.5, 0.3])
    vals = np.stack([(rng.normal(size=(n, 7)) * sd) @ F.T for _ in range(2)], axis=1) + 1.0
    return grid, w, vals


def test_projection_examples():
    grid, w, vals = curves_from_scores()
    means = vals.mean(axis=0)
    nb = node_bases(vals, grid, w)[0]
    probe = np.stack([means + nb.eigenfunctions[:, 1], means])
    S = project_scores(probe, means, nb, 3).scores
    np.testing.assert_allclose(S[0, 0], [0, 1, 0], atol=1e-10)
    np.testing.assert_allclose(S[1], 0, atol=1e-12)
    with pytest.raises(DimensionError):
        project_scores(vals[:, :, :50], means[:, :50], nb, 3)


def test_full_rank_reconstruction():
    grid, w = quadrature_grid(30)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(40, 1, 30))
    means = vals.mean(axis=0)
    nb = node_bases(vals, grid, w)[0]
    # a full-rank basis needs a positive-definite covariance; use the identity operator
    full = fpca_basis(np.diag(1.0 / w), w, node=0, grid=grid, mean=means[0])
    S = project_scores(vals, means, full, 30).scores[:, 0]
    np.testing.assert_allclose(S @ full.eigenfunctions.T, vals[:, 0] - means[0], atol=1e-6)
    assert nb.eigenfunctions.shape == (30, 30)


def test_orthonormality_and_own_score_covariance():
    grid, w, vals = curves_from_scores(n=2000)
    bases = node_bases(vals, grid, w)
    nb = bases[0]
    M = 7
    Gm = nb.gram(M)
    off = Gm - np.diag(np.diag(Gm))
    assert np.abs(off).max() <= 1e-6 and np.abs(np.diag(Gm) - 1).max() <= 1e-6
    S = project_scores(vals, vals.mean(axis=0), nb, M).scores[:, 0]
    emp = np.cov(S.T)
    np.testing.assert_allclose(np.diag(emp), nb.eigenvalues[:M], rtol=1e-6)
    assert np.abs(emp - np.diag(np.diag(emp))).max() < 1e-8
    assert shared_truncation(bases, 0.95) >= select_truncation(nb.eigenvalues, 0.95)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_reconstruction_error_monotone_in_M(seed):
    grid, w, vals = curves_from_scores(n=30, seed=seed, G=40)
    means = vals.mean(axis=0)
    nb = node_bases(vals, grid, w)[0]
    centred = vals[:, 0] - means[0]
    errs = []
    for M in range(1, 10):
        S = project_scores(vals, means, nb, M).scores[:, 0]
        r = centred - S @ nb.eigenfunctions[:, :M].T
        errs.append(float(np.sum(w * r * r)))
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))

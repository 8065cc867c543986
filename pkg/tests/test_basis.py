import numpy as np
import pytest

from fungraph.basis import (
    BasisSystem,
    bspline,
    eval_basis,
    eval_curve,
    fourier,
    roughness_penalty,
    smooth_curve,
    smooth_dataset,
    smooth_values,
    trapezoid_weights,
)
from fungraph.errors import ConditioningError, DomainError
from fungraph.funcdata import FunctionalDataset


def fine_gram(b, G=4001):
    t = np.linspace(*b.domain, G)
    P = eval_basis(b, t)
    return P.T @ (trapezoid_weights(t)[:, None] * P)


def test_fourier_constant_is_unit_norm():
    np.testing.assert_allclose(eval_basis(fourier(1), [0.1, 0.7]), [[1.0], [1.0]])


def test_fourier_orthonormal():
    np.testing.assert_allclose(fine_gram(fourier(15)), np.eye(15), atol=1e-6)


def test_fourier_ordering():
    t = np.array([0.125])
    row = eval_basis(fourier(5), t)[0]
    r2 = np.sqrt(2)
    expected = [1, r2 * np.sin(2 * np.pi * t[0]), r2 * np.cos(2 * np.pi * t[0]),
                r2 * np.sin(4 * np.pi * t[0]), r2 * np.cos(4 * np.pi * t[0])]
    np.testing.assert_allclose(row, expected)


def test_fourier_derivative_matches_finite_difference():
    b = fourier(7)
    t = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    fd = (eval_basis(b, t + h) - eval_basis(b, t - h)) / (2 * h)
    np.testing.assert_allclose(eval_basis(b, t, deriv=1), fd, atol=1e-5)


def test_bspline_partition_of_unity_and_knots():
    b = bspline(8)
    assert len(b.knots) == 12 and np.all(np.diff(b.knots) >= 0)
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(eval_basis(b, t).sum(axis=1), 1.0, atol=1e-12)


def test_outside_domain():
    with pytest.raises(DomainError):
        eval_basis(fourier(3), [1.5])


def test_invalid_systems():
    with pytest.raises(ValueError):
        BasisSystem("wavelet", 3)
    with pytest.raises(ValueError):
        BasisSystem("bspline", 5, knots=(0, 0, 1, 1))


def test_unpenalized_fit_recovers_basis_function():
    b = fourier(5)
    t = np.arange(1, 41) / 40
    y = eval_basis(b, t)[:, 3]
    np.testing.assert_allclose(smooth_values(t, y, b), np.eye(5)[3], atol=1e-10)


def test_too_few_points():
    with pytest.raises(ConditioningError):
        smooth_values(np.array([0.2, 0.4]), np.zeros(2), fourier(5))


def test_roughness_shrinks_high_frequencies():
    b = fourier(9)
    rng = np.random.default_rng(1)
    t = np.arange(1, 51) / 50
    y = rng.normal(size=50)
    rough = lambda c: c @ roughness_penalty(b) @ c  # noqa: E731
    assert rough(smooth_values(t, y, b, 1e-3)) < rough(smooth_values(t, y, b, 0.0))


def test_fourier_penalty_is_diagonal_power():
    P = roughness_penalty(fourier(5))
    expected = np.array([0, 1, 1, 2, 2]) ** 4 * (2 * np.pi) ** 4
    np.testing.assert_allclose(np.diag(P), expected, rtol=1e-3)


def test_smooth_dataset_matches_single_curve():
    rng = np.random.default_rng(2)
    t = np.arange(1, 31) / 30
    ds = FunctionalDataset.from_arrays(rng.normal(size=(3, 2, 30)), t)
    b = bspline(6)
    C = smooth_dataset(ds, b, 1e-4)
    single = smooth_curve(ds.series[2][1], b, 1e-4)
    np.testing.assert_allclose(C[2, 1], single.coef)
    np.testing.assert_allclose(eval_curve(single, t), eval_basis(b, t) @ C[2, 1])

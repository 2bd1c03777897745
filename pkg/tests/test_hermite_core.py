import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import hermite as nph

from schrolab.hermite_core import (
    gauss_hermite,
    hermite_derivatives,
    hermite_functions,
    ladder_matrices,
    momentum_square,
    position_power,
)


def reference_hermite(n, x):
    """Physicists' H_n through numpy, normalized by hand."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    norm = math.sqrt(2.0 ** n * math.factorial(n) * math.sqrt(math.pi))
    return nph.hermval(x, c) * np.exp(-x * x / 2) / norm


def test_matches_numpy_for_low_orders():
    x = np.linspace(-6, 6, 101)
    table = hermite_functions(30, x)
    for n in (0, 1, 2, 7, 30):
        np.testing.assert_allclose(table[n], reference_hermite(n, x), atol=1e-12)


@given(st.integers(2, 120))
def test_orthonormal_under_own_quadrature(n):
    rule = gauss_hermite(n + 2)
    table = hermite_functions(n, rule.nodes)
    gram = (table * rule.weights) @ table.T
    np.testing.assert_allclose(gram, np.eye(n + 1), atol=1e-11)


@pytest.mark.parametrize("n", [5, 40, 150])
def test_gaussian_moments_exact(n):
    rule = gauss_hermite(n)
    for m in range(0, min(n, 60)):
        got = np.sum(rule.gaussian_weights * rule.nodes ** (2 * m))
        want = math.gamma(m + 0.5)
        assert got == pytest.approx(want, rel=1e-10)
        if 2 * m + 1 >= 2 * n:
            break


def test_large_order_stays_finite_and_normalized():
    x = np.linspace(-80, 80, 20001)
    table = hermite_functions(3000, x)
    assert np.all(np.isfinite(table))
    dx = x[1] - x[0]
    norms = np.sum(table[[0, 1000, 3000]] ** 2, axis=1) * dx
    np.testing.assert_allclose(norms, 1.0, atol=1e-8)
    # beyond the turning point sqrt(2n+1) the function must be tiny but the
    # recurrence must not have flushed the oscillatory region to zero
    assert np.abs(table[3000][np.abs(x) < 70]).max() > 0.05


def test_derivative_matches_finite_difference():
    x = np.linspace(-5, 5, 41)
    e = 1e-6
    d = hermite_derivatives(hermite_functions(12, x), x)
    fd = (hermite_functions(12, x + e) - hermite_functions(12, x - e)) / (2 * e)
    np.testing.assert_allclose(d, fd, atol=1e-7)


def test_ladder_position_agrees_with_quadrature():
    n = 25
    L = ladder_matrices(n)
    np.testing.assert_allclose(L.X[:n, :n], position_power(n, 1), atol=1e-13)
    np.testing.assert_allclose((L.X @ L.X)[:n, :n], position_power(n, 2), atol=1e-12)


def test_momentum_square_is_p_squared():
    n = 25
    L = ladder_matrices(n + 2)
    P2 = (L.P @ L.P).real[:n, :n]
    np.testing.assert_allclose(momentum_square(n), P2, atol=1e-13)


def test_canonical_commutator_on_inner_block():
    L = ladder_matrices(30)
    C = L.X @ L.P - L.P @ L.X
    np.testing.assert_allclose(C[:29, :29], 1j * np.eye(29), atol=1e-13)


def test_bad_sizes():
    with pytest.raises(ValueError):
        gauss_hermite(0)
    with pytest.raises(ValueError):
        ladder_matrices(0)

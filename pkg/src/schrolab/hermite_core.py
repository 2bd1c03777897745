"""Hermite functions, Gauss-Hermite quadrature and ladder matrices.

All Hermite functions here are the L2-normalized ones,

    h_n(x) = (2^n n! sqrt(pi))^(-1/2) H_n(x) exp(-x^2/2),

evaluated with the normalized three-term recurrence. The Gaussian factor is
carried separately as a log-scale so that large orders at large |x| neither
overflow nor lose everything to underflow of exp(-x^2/2).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

_RESCALE = 1e150
_LOG_RESCALE = np.log(_RESCALE)


def hermite_functions(n_max, points):
    """Table of normalized Hermite functions.

    Parameters
    ----------
    n_max : int
        Highest order (inclusive).
    points : array_like
        1D array of evaluation points.

    Returns
    -------
    ndarray of shape (n_max + 1, len(points))
        Row ``n`` holds ``h_n`` at the points.
    """
    x = np.atleast_1d(np.asarray(points, dtype=float))
    n_max = int(n_max)
    out = np.empty((n_max + 1, x.size))
    # p_n * exp(logscale - x^2/2) == h_n
    logscale = np.zeros_like(x)
    half_sq = 0.5 * x * x
    prev = np.zeros_like(x)
    cur = np.full_like(x, np.pi ** -0.25)
    out[0] = cur * np.exp(-half_sq)
    for n in range(n_max):
        nxt = np.sqrt(2.0 / (n + 1)) * x * cur - np.sqrt(n / (n + 1.0)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if big.any():
            cur[big] /= _RESCALE
            prev[big] /= _RESCALE
            logscale[big] += _LOG_RESCALE
        out[n + 1] = cur * np.exp(logscale - half_sq)
    return out


def hermite_derivatives(table, points):
    """Derivatives h_n' from a table produced by :func:`hermite_functions`."""
    x = np.asarray(points, dtype=float)
    n = np.arange(table.shape[0])[:, None]
    d = -x * table
    d[1:] += np.sqrt(2.0 * n[1:]) * table[:-1]
    return d


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule with weights that integrate ``f(x) dx`` directly.

    ``weights`` already contain the ``exp(x^2)`` compensation, so
    ``sum(weights * f(nodes))`` approximates ``int f`` for integrands of the
    form polynomial times ``exp(-x^2)``.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def gaussian_weights(self):
        """Classical weights for ``int g(x) exp(-x^2) dx``."""
        return self.weights * np.exp(-self.nodes ** 2)

    def scaled(self, sigma):
        """Rule for the variable ``x = sigma * y``."""
        return QuadratureRule(sigma * self.nodes, sigma * self.weights)

    def __len__(self):
        return self.nodes.size


def gauss_hermite(n):
    """n-point Gauss-Hermite rule via the Jacobi matrix (Golub-Welsch).

    Nodes come from the symmetric tridiagonal eigenproblem. Weights use the
    Christoffel form ``1 / sum_m h_m(x_i)^2`` over ``m < n``, which is the
    compensated weight and stays accurate in the tails where the classical
    weight underflows.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one node")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.array([np.sqrt(np.pi)]))
    off = np.sqrt(np.arange(1, n) / 2.0)
    nodes = eigh_tridiagonal(np.zeros(n), off, eigvals_only=True)
    nodes = 0.5 * (nodes - nodes[::-1])
    table = hermite_functions(n - 1, nodes)
    weights = 1.0 / np.einsum("ij,ij->j", table, table)
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(nodes, weights)


@dataclass(frozen=True)
class LadderMatrices:
    """Position and momentum (``P = -i d/dx``) in the Hermite basis."""

    n_max: int
    X: np.ndarray
    P: np.ndarray


def ladder_matrices(n_max):
    """Truncated X and P acting on ``h_0 .. h_{n_max}``."""
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    off = np.sqrt(np.arange(1, n_max + 1) / 2.0)
    X = np.diag(off, 1) + np.diag(off, -1)
    # h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}
    D = np.diag(off, 1) - np.diag(off, -1)
    P = -1j * D
    return LadderMatrices(n_max, X, P)


def position_power(n, power, sigma=1.0, rule=None):
    """Matrix of ``(sigma*y)^power`` between ``h_0 .. h_{n-1}``, exact by quadrature."""
    if rule is None:
        rule = gauss_hermite(n + (power + 1) // 2 + 1)
    table = hermite_functions(n - 1, rule.nodes)
    w = rule.weights * (sigma * rule.nodes) ** power
    return (table * w) @ table.T


def momentum_square(n):
    """Exact ``-d^2/dx^2`` on ``h_0 .. h_{n-1}`` (pentadiagonal, real)."""
    m = np.arange(n, dtype=float)
    diag = m + 0.5
    off = -0.5 * np.sqrt((m[:-2] + 1) * (m[:-2] + 2))
    return np.diag(diag) + np.diag(off, 2) + np.diag(off, -2)

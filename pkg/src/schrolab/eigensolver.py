"""Galerkin eigensolver for -h^2 Laplacian + V in a scaled Hermite tensor basis.

Per axis the basis is ``sigma^(-1/2) h_n(x / sigma)`` for ``n < n_axis``.
In d=2 the basis is either the full tensor product (``truncation="tensor"``)
or the total-degree triangle ``n1 + n2 < n_axis`` (``truncation="total"``).
Coefficient vectors are always stored on the full ``n_axis**d`` tensor grid
(C order), with zeros outside the active index set.
"""

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, DimensionUnsupported, UntrustedIndex
from .hermite_core import gauss_hermite, hermite_functions, momentum_square
from .potential import ellipticity_margin

CACHE_VERSION = "eigenbasis-v1"
CACHE_ENV = "SCHROLAB_CACHE"
TRUST_TOL = 1e-8


def default_scale(V, h=1.0):
    """Gaussian width matched to the well: margin^(-1/(2k+2)) * h^(1/(k+1))."""
    k = V.k
    return ellipticity_margin(V) ** (-1.0 / (2 * k + 2)) * h ** (1.0 / (k + 1))


def energy_adapted_scale(V, n_axis, h=1.0):
    """Width that balances position and momentum resolution at the top of the basis.

    A basis of n functions resolves |x| <= sigma*sqrt(2n) and |xi| <= sqrt(2n)/sigma.
    The energy E reachable in both directions satisfies
    (E/m)^(1/2k) = sigma*sqrt(2n) and sqrt(E)/h = sqrt(2n)/sigma.
    """
    k = V.k
    m = ellipticity_margin(V)
    # sigma^2 = h * E^(1/(2k) - 1/2) * m^(-1/(2k)); E from the product relation
    r = 2.0 * n_axis
    # (E/m)^(1/2k) * sqrt(E)/h = r  ->  E^((k+1)/(2k)) = r h m^(1/(2k))
    E = (r * h * m ** (1.0 / (2 * k))) ** (2 * k / (k + 1.0))
    return float(np.sqrt(h * E ** (1.0 / (2 * k) - 0.5) * m ** (-1.0 / (2 * k))))


def active_indices(d, n_axis, truncation="tensor"):
    """Flat tensor indices of the active basis functions."""
    if d == 1 or truncation == "tensor":
        return np.arange(n_axis ** d)
    if truncation != "total":
        raise ValueError(f"unknown truncation {truncation!r}")
    a, b = np.divmod(np.arange(n_axis ** 2), n_axis)
    return np.flatnonzero(a + b < n_axis)


def _axis_blocks(V, n_axis, sigma):
    rule = gauss_hermite(n_axis + V.k + 1)
    table = hermite_functions(n_axis - 1, rule.nodes)
    powers = {}
    for alpha, _ in V.monomials:
        for p in alpha:
            if p not in powers:
                w = rule.weights * (sigma * rule.nodes) ** p
                powers[p] = (table * w) @ table.T
    kin = momentum_square(n_axis) / sigma ** 2
    return kin, powers


def assemble(V, h, n_axis, sigma, truncation="tensor"):
    """Dense matrix of -h^2 Laplacian + V in the scaled tensor basis."""
    if V.d > 2:
        raise DimensionUnsupported(f"d={V.d} not supported (d must be 1 or 2)")
    if n_axis < 4:
        raise ValueError("n_axis must be at least 4")
    kin, powers = _axis_blocks(V, n_axis, sigma)
    if V.d == 1:
        H = h * h * kin
        for (p,), c in V.monomials:
            H += c * powers[p]
    else:
        eye = np.eye(n_axis)
        H = h * h * (np.kron(kin, eye) + np.kron(eye, kin))
        for (p, q), c in V.monomials:
            H += c * np.kron(powers[p], powers[q])
    H[np.diag_indices_from(H)] += V.shift
    idx = active_indices(V.d, n_axis, truncation)
    if idx.size != H.shape[0]:
        H = H[np.ix_(idx, idx)]
    return 0.5 * (H + H.T)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Sorted eigenpairs of -h^2 Laplacian + V with provenance.

    For the harmonic oscillator the coefficients are unit vectors and are
    kept implicitly through ``tensor_index`` (flat index of each eigenvector)
    to avoid storing a large identity block.
    """

    potential: object
    h: float
    sigma: float
    n_axis: int
    eigenvalues: np.ndarray
    trust_count: int
    truncation: str = "tensor"
    dense_coefficients: np.ndarray = field(default=None, repr=False)
    tensor_index: np.ndarray = field(default=None, repr=False)

    @property
    def d(self):
        return self.potential.d

    @property
    def k(self):
        return self.potential.k

    @property
    def dim(self):
        return self.n_axis ** self.d

    @property
    def analytic(self):
        return self.tensor_index is not None

    @property
    def normalized_energies(self):
        """lambda^((k+1)/(2k)), the spectrum of the normalized Hamiltonian."""
        lam = np.clip(self.eigenvalues, 0.0, None)
        return lam ** ((self.k + 1) / (2.0 * self.k))

    def coefficient_block(self, indices):
        """Tensor coefficients (dim x len(indices)) of the requested eigenvectors."""
        indices = np.asarray(indices, dtype=int)
        if self.analytic:
            out = np.zeros((self.dim, indices.size))
            out[self.tensor_index[indices], np.arange(indices.size)] = 1.0
            return out
        return self.dense_coefficients[:, indices]

    @property
    def coefficients(self):
        return self.coefficient_block(np.arange(self.eigenvalues.size))

    def check_trusted(self, indices):
        indices = np.asarray(indices, dtype=int)
        if indices.size and indices.max() >= self.trust_count:
            raise UntrustedIndex(
                f"index {int(indices.max())} >= trust_count {self.trust_count}"
            )
        return indices

    def multi_indices(self, indices):
        """Per-axis Hermite orders for analytic bases."""
        flat = self.tensor_index[np.asarray(indices, dtype=int)]
        if self.d == 1:
            return flat[:, None]
        return np.column_stack(np.divmod(flat, self.n_axis))

    def axis_table(self, points, size=None):
        """Scaled 1D Hermite table sigma^(-1/2) h_n(x/sigma), shape (size, npts).

        ``size`` defaults to n_axis.
        """
        x = np.asarray(points, dtype=float)
        size = self.n_axis if size is None else size
        return hermite_functions(size - 1, x / self.sigma) / np.sqrt(self.sigma)


def _harmonic_basis(V, h, n_axis):
    d = V.d
    if d == 1:
        alphas = np.arange(n_axis)[:, None]
    else:
        a, b = np.divmod(np.arange(n_axis ** 2), n_axis)
        keep = a + b < n_axis
        alphas = np.column_stack([a[keep], b[keep]])
    level = alphas.sum(axis=1)
    order = np.lexsort(alphas.T[::-1].tolist() + [level.tolist()])
    alphas = alphas[order]
    flat = alphas[:, 0] if d == 1 else alphas[:, 0] * n_axis + alphas[:, 1]
    lam = h * (2.0 * alphas.sum(axis=1) + d)
    return EigenBasis(
        V, float(h), float(np.sqrt(h)), int(n_axis), lam, int(lam.size),
        "total", None, flat.astype(np.int64),
    )


def _cluster_floor(lam, t):
    while 0 < t < lam.size and abs(lam[t] - lam[t - 1]) <= 1e-8 * max(1.0, abs(lam[t])):
        t -= 1
    return t


def _eigh(H):
    try:
        return scipy.linalg.eigh(H, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(str(exc)) from exc


def _embed(vectors, idx, dim):
    out = np.zeros((dim, vectors.shape[1]))
    out[idx] = vectors
    return out


def trust_from_half(lam, lam_half, tol=TRUST_TOL):
    m = min(lam.size, lam_half.size)
    drift = np.abs(lam_half[:m] - lam[:m]) / np.maximum(np.abs(lam[:m]), 1e-300)
    bad = np.flatnonzero(drift >= tol)
    t = int(bad[0]) if bad.size else m
    return _cluster_floor(lam, t)


def _cache_key(V, h, n_axis, sigma, truncation):
    blob = "\n".join(
        [CACHE_VERSION, V.to_text(), float(h).hex(), str(int(n_axis)),
         float(sigma).hex(), truncation]
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


def _cache_dir(cache_dir):
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


def solve(V, h=1.0, n_axis=32, sigma=None, truncation="tensor", analytic=None,
          cache_dir=None):
    """Eigen-decompose -h^2 Laplacian + V.

    ``sigma="adapted"`` picks the energy-adapted width of the half-size
    basis. ``analytic=None`` uses the closed form when V is exactly |x|^2; pass
    ``analytic=False`` to force the Galerkin path. When a cache directory is
    given (or set through the SCHROLAB_CACHE environment variable) results
    are stored as .npz and replayed bit for bit.
    """
    if V.d > 2:
        raise DimensionUnsupported(f"d={V.d} not supported (d must be 1 or 2)")
    if analytic is None:
        analytic = V.is_harmonic
    if analytic:
        if not V.is_harmonic:
            raise ValueError("analytic path only exists for V = |x|^2")
        return _harmonic_basis(V, h, n_axis)
    if sigma is None:
        sigma = default_scale(V, h)
    elif sigma == "adapted":
        # tuned for the half-size basis, which is what limits trust_count
        sigma = energy_adapted_scale(V, max(4, n_axis // 2), h)
    sigma = float(sigma)
    root = _cache_dir(cache_dir)
    path = None
    if root is not None:
        path = root / (_cache_key(V, h, n_axis, sigma, truncation) + ".npz")
        if path.exists():
            with np.load(path) as z:
                return EigenBasis(
                    V, float(h), sigma, int(n_axis), z["eigenvalues"],
                    int(z["trust_count"]), truncation, z["coefficients"],
                )
    idx = active_indices(V.d, n_axis, truncation)
    lam, vec = _eigh(assemble(V, h, n_axis, sigma, truncation))
    half = max(4, n_axis // 2)
    lam_half = scipy.linalg.eigh(assemble(V, h, half, sigma, truncation), eigvals_only=True)
    trust = trust_from_half(lam, lam_half)
    coeffs = _embed(vec, idx, n_axis ** V.d)
    basis = EigenBasis(V, float(h), sigma, int(n_axis), lam, trust, truncation, coeffs)
    if path is not None:
        root.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, eigenvalues=lam, coefficients=coeffs, trust_count=trust)
        os.replace(tmp, path)
    return basis


def evaluate_states(basis, indices, points):
    """phi_j(x) for trusted ``indices`` at ``points`` (shape (npts, d) or (npts,))."""
    indices = basis.check_trusted(indices)
    pts = np.asarray(points, dtype=float).reshape(-1, basis.d)
    tables = [basis.axis_table(pts[:, i]) for i in range(basis.d)]
    if basis.analytic:
        al = basis.multi_indices(indices)
        out = tables[0][al[:, 0]]
        for i in range(1, basis.d):
            out = out * tables[i][al[:, i]]
        return out
    C = basis.coefficient_block(indices)
    if basis.d == 1:
        return C.T @ tables[0]
    n = basis.n_axis
    C = C.reshape(n, n, -1)
    tmp = np.einsum("abj,bp->ajp", C, tables[1], optimize=True)
    return np.einsum("ajp,ap->jp", tmp, tables[0], optimize=True)


def evaluate_on_grid(basis, indices, axes):
    """phi_j on a tensor grid; returns shape (len(indices), len(ax0)[, len(ax1)])."""
    indices = basis.check_trusted(indices)
    tables = [basis.axis_table(ax) for ax in axes]
    return synthesize_on_grid(basis, basis.coefficient_block(indices).T, tables)


def synthesize_on_grid(basis, tensor_coeffs, tables):
    """Functions with tensor coefficients (m x size^d) evaluated on a tensor grid.

    ``size`` is the row count of the axis tables, so trimmed tables work with
    correspondingly trimmed coefficients.
    """
    C = np.asarray(tensor_coeffs)
    if basis.d == 1:
        return C @ tables[0]
    n = tables[0].shape[0]
    C = C.reshape(-1, n, n)
    tmp = np.matmul(C, tables[1])                        # (m, a, q)
    return np.matmul(tables[0].T[None], tmp)             # (m, p, q)


def residual_norms(basis, indices=None):
    """||H phi_j - lambda_j phi_j|| with H assembled in a basis one size larger."""
    if indices is None:
        indices = np.arange(basis.trust_count)
    indices = np.asarray(indices, dtype=int)
    n = basis.n_axis
    big = n + 1
    H = assemble(basis.potential, basis.h, big, basis.sigma, basis.truncation)
    idx = active_indices(basis.d, big, basis.truncation)
    C = basis.coefficient_block(indices)
    if basis.d == 2:
        C = np.pad(C.reshape(n, n, -1), ((0, 1), (0, 1), (0, 0))).reshape(big * big, -1)
    else:
        C = np.pad(C, ((0, 1), (0, 0)))
    C = C[idx]
    R = H @ C - C * basis.eigenvalues[indices]
    return np.linalg.norm(R, axis=0)

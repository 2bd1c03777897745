"""Spectral windows, Weyl counting, spectral function and weighted norms.

Energies in a window are measured for the normalized Hamiltonian, whose
eigenvalues are lambda_j^((k+1)/(2k)) for the h=1 operator -Laplacian + V.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, gammaincc

from .eigensolver import evaluate_states, synthesize_on_grid
from .errors import WindowConditionViolated, WindowEmpty, WindowTooWide
from .hermite_core import gauss_hermite, momentum_square, position_power
from .potential import ellipticity_margin, eval_potential

SNAP = 1e-10


def beta(r, theta, d, k):
    """Exponent ((d - k theta)/(k+1)) (1 - 2/r) governing two-sided window integrals."""
    tail = 1.0 if np.isinf(r) else 1.0 - 2.0 / r
    return (d - k * theta) / (k + 1.0) * tail


def japanese(x):
    """<x> = (1 + |x|^2)^(1/2) for points of shape (n, d)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.sqrt(1.0 + np.sum(x * x, axis=1))


@dataclass(frozen=True, eq=False)
class SpectralWindow:
    h: float
    a_h: float
    b_h: float
    delta: float
    D: float
    indices: np.ndarray
    basis: object = field(repr=False, default=None)

    @property
    def N_h(self):
        return int(self.indices.size)

    @property
    def interval(self):
        return self.a_h / self.h, self.b_h / self.h


@dataclass(frozen=True)
class WeightedNormSpec:
    r: float
    s: float = 0.0

    def __post_init__(self):
        if not self.r >= 1:
            raise ValueError("exponent r must be >= 1")


def _next_energy(basis):
    """Lower bound for the first normalized energy past the trusted range."""
    E = basis.normalized_energies
    t = basis.trust_count
    if t < E.size:
        return E[t]
    if basis.analytic:
        lam = basis.h * (2.0 * basis.n_axis + basis.d)
        return lam ** ((basis.k + 1) / (2.0 * basis.k))
    return E[-1]


def make_window(basis, h, a_h, b_h, delta=0.0, D=None):
    """Index set of normalized energies in [a_h/h, b_h/h).

    Endpoints are snapped by a relative 1e-10 so that exact levels sitting on
    a boundary are assigned as intended despite rounding in ``a_h / h``.
    """
    if not 0 < a_h <= b_h:
        raise ValueError("need 0 < a_h <= b_h")
    if D is None:
        D = (b_h - a_h) / h ** delta if b_h > a_h else 1.0
    if b_h - a_h < D * h ** delta * (1 - 1e-12):
        raise WindowConditionViolated(
            f"b_h - a_h = {b_h - a_h} < D h^delta = {D * h ** delta}"
        )
    lo = a_h / h * (1 - SNAP)
    hi = b_h / h * (1 - SNAP)
    E = basis.normalized_energies
    t = basis.trust_count
    if _next_energy(basis) < hi:
        raise WindowTooWide(
            f"window reaches {b_h / h:.6g}, trusted spectrum ends near {E[max(t - 1, 0)]:.6g}"
        )
    idx = np.flatnonzero((E[:t] >= lo) & (E[:t] < hi))
    if idx.size == 0:
        raise WindowEmpty(f"no normalized eigenvalue in [{a_h / h:.6g}, {b_h / h:.6g})")
    return SpectralWindow(float(h), float(a_h), float(b_h), float(delta), float(D), idx, basis)


def level_indices(basis, lam, tol=1e-8):
    """Indices of trusted eigenvalues equal to ``lam`` (relative tolerance)."""
    E = basis.eigenvalues[: basis.trust_count]
    return np.flatnonzero(np.abs(E - lam) <= tol * max(1.0, abs(lam)))


def spectral_function(basis, indices, points, chunk=256):
    """sum_{j in indices} |phi_j(x)|^2 at the given points."""
    indices = np.asarray(indices, dtype=int)
    pts = np.asarray(points, dtype=float).reshape(-1, basis.d)
    out = np.zeros(pts.shape[0])
    for start in range(0, indices.size, chunk):
        vals = evaluate_states(basis, indices[start:start + chunk], pts)
        out += np.sum(vals * vals, axis=0)
    return out


def spectral_function_on_grid(basis, indices, axes, weights=None, chunk=128):
    """sum_j w_j |phi_j|^2 on a tensor grid, shape (len(ax0)[, len(ax1)])."""
    indices = basis.check_trusted(indices)
    tables = [basis.axis_table(ax) for ax in axes]
    shape = tuple(len(ax) for ax in axes)
    out = np.zeros(shape)
    for start in range(0, indices.size, chunk):
        sel = indices[start:start + chunk]
        vals = synthesize_on_grid(basis, basis.coefficient_block(sel).T, tables)
        sq = vals * vals
        if weights is not None:
            sq = sq * np.asarray(weights)[start:start + chunk].reshape((-1,) + (1,) * len(axes))
        out += sq.sum(axis=0)
    return out


def window_kernel(basis, window, points):
    """e_{x,h} = sum over the window of |phi_j(x)|^2."""
    return spectral_function(basis, window.indices, points)


def window_kernel_on_grid(basis, window, axes):
    return spectral_function_on_grid(basis, window.indices, axes)


@dataclass(frozen=True)
class TensorGrid:
    """Tensor-product grid with per-axis points and quadrature weights."""

    axes: tuple
    axis_weights: tuple

    @property
    def d(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def weights(self):
        w = self.axis_weights[0]
        for v in self.axis_weights[1:]:
            w = np.multiply.outer(w, v)
        return w

    def bracket(self):
        """<x> on the grid, shape ``self.shape``."""
        sq = np.zeros(self.shape)
        for i, ax in enumerate(self.axes):
            sh = [1] * self.d
            sh[i] = -1
            sq = sq + (ax * ax).reshape(sh)
        return np.sqrt(1.0 + sq)


def quadrature_grid(basis, n_nodes=None):
    """Scaled Gauss-Hermite tensor grid, exact for products of two basis functions."""
    if n_nodes is None:
        n_nodes = basis.n_axis + basis.k + 1
    rule = gauss_hermite(n_nodes).scaled(basis.sigma)
    return TensorGrid((rule.nodes,) * basis.d, (rule.weights,) * basis.d)


def turning_radius(V, energy_normalized):
    """|x| where V_0 reaches the energy, for a normalized energy."""
    k = V.k
    return energy_normalized ** (1.0 / (k + 1)) * ellipticity_margin(V) ** (-1.0 / (2 * k))


def _window_energy_max(basis, window):
    return float(basis.eigenvalues[window.indices].max())


def sup_grid(basis, window, points_per_wavelength=6.0, radius_factor=1.25):
    """Uniform grid covering the window's classically allowed region.

    The spacing resolves the shortest local wavelength 2 pi / sqrt(lambda_max)
    with ``points_per_wavelength`` points; the box extends ``radius_factor``
    times the turning radius plus three basis widths.
    """
    lam = _window_energy_max(basis, window)
    R = radius_factor * turning_radius(basis.potential, window.b_h / window.h) + 3.0 * basis.sigma
    spacing = 2 * np.pi / (np.sqrt(lam) * points_per_wavelength)
    n = int(np.ceil(2 * R / spacing)) + 1
    return uniform_grid(R, n, basis.d)


def uniform_grid(radius, n, d):
    ax = np.linspace(-radius, radius, n)
    w = np.full(n, ax[1] - ax[0])
    return TensorGrid((ax,) * d, (w,) * d)


def weighted_norm(values, spec, points=None, weights=None, bracket=None):
    """L^{r,s} norm: (sum w <x>^s |u|^r)^(1/r), or sup <x>^s |u| for r = inf.

    ``bracket`` may be given instead of ``points`` to reuse a precomputed <x>.
    """
    v = np.abs(np.asarray(values)).ravel()
    if bracket is None:
        bracket = japanese(points) if points is not None else np.ones_like(v)
    bracket = np.asarray(bracket).ravel()
    if np.isinf(spec.r):
        return float(np.max(bracket ** spec.s * v))
    w = np.ones_like(v) if weights is None else np.asarray(weights).ravel()
    return float(np.sum(w * bracket ** spec.s * v ** spec.r) ** (1.0 / spec.r))


def window_tensor_coefficients(basis, window, coeffs):
    """Map window coefficients (m x N_h) to tensor-basis coefficients (m x dim)."""
    coeffs = np.atleast_2d(coeffs)
    if basis.analytic:
        out = np.zeros((coeffs.shape[0], basis.dim), dtype=coeffs.dtype)
        out[:, basis.tensor_index[window.indices]] = coeffs
        return out
    return coeffs @ basis.coefficient_block(window.indices).T


def synthesize(basis, window, coeffs, grid):
    """Values of u = sum_j c_j phi_j on a tensor grid for each row of ``coeffs``."""
    tables = [basis.axis_table(ax) for ax in grid.axes]
    C = window_tensor_coefficients(basis, window, coeffs)
    return synthesize_on_grid(basis, C, tables)


def sobolev_norm(basis, window, coeffs, s, p=2, grid=None, weight=0.0):
    """Norm of the normalized Hamiltonian to the power s applied to u in E_h."""
    c = np.asarray(coeffs)
    E = basis.normalized_energies[window.indices]
    mult = E ** s
    if p == 2:
        return float(np.sqrt(np.sum(mult ** 2 * np.abs(c) ** 2)))
    if not np.isinf(p):
        raise ValueError("only p = 2 and p = inf are supported")
    return float(weighted_sup_norms(basis, window, (mult * c)[None, :], weight, grid)[0])


def _local_maxima(f):
    """Boolean mask of points not exceeded by any neighbour (last axes are the grid)."""
    d = f.ndim - 1
    pad = np.pad(f, [(0, 0)] + [(1, 1)] * d, constant_values=-np.inf)
    mask = np.ones(f.shape, dtype=bool)
    for shift in np.ndindex(*([3] * d)):
        if all(s == 1 for s in shift):
            continue
        sl = tuple([slice(None)] + [slice(s, s + n) for s, n in zip(shift, f.shape[1:])])
        mask &= f >= pad[sl]
    return mask


def trimmed_coefficients(basis, window, coeffs):
    """Tensor coefficients restricted to the smallest per-axis size they use."""
    C = window_tensor_coefficients(basis, window, coeffs)
    n = basis.n_axis
    if basis.d == 1:
        used = np.flatnonzero(np.any(C != 0, axis=0))
        size = int(used.max()) + 1 if used.size else 1
        return C[:, :size], size
    C3 = C.reshape(-1, n, n)
    mask = np.any(C3 != 0, axis=0)
    used = np.argwhere(mask)
    size = int(used.max()) + 1 if used.size else 1
    return C3[:, :size, :size].reshape(C.shape[0], -1), size


def _point_values(basis, C, which, pts, size):
    """u_s(p) for sample rows C[which[c]] at points pts[c, q] (shape (c, q, d))."""
    nc, nq, d = pts.shape
    tabs = [basis.axis_table(pts[..., i].ravel(), size).reshape(-1, nc, nq) for i in range(d)]
    rows = C[which]
    if d == 1:
        return np.einsum("ca,acq->cq", rows, tabs[0], optimize=True)
    R3 = rows.reshape(nc, size, size)
    tmp = np.einsum("cab,bcq->caq", R3, tabs[1], optimize=True)
    return np.einsum("caq,acq->cq", tmp, tabs[0], optimize=True)


def weighted_sup_norms(basis, window, coeffs, s, grid=None, candidates=3, levels=2,
                       patch=5, chunk=32):
    """sup_x <x>^s |u(x)| for each row of window coefficients.

    The maximum over a uniform grid is refined around the ``candidates``
    largest local maxima of each sample by ``levels`` rounds of
    (2 patch + 1)^d sub-grids, each shrinking the spacing by ``patch``.
    """
    coeffs = np.atleast_2d(coeffs)
    if grid is None:
        grid = sup_grid(basis, window)
    C, size = trimmed_coefficients(basis, window, coeffs)
    tables = [basis.axis_table(ax, size) for ax in grid.axes]
    wgt = grid.bracket() ** s
    spacing = np.array([ax[1] - ax[0] for ax in grid.axes])
    offs = np.arange(-patch, patch + 1) / patch
    d = basis.d
    stencil = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts_all = grid.points().reshape(grid.shape + (d,))
    out = np.empty(coeffs.shape[0])
    for start in range(0, coeffs.shape[0], chunk):
        sel = slice(start, min(start + chunk, coeffs.shape[0]))
        f = np.abs(synthesize_on_grid(basis, C[sel], tables)) * wgt
        m = f.shape[0]
        flat = np.where(_local_maxima(f), f, -np.inf).reshape(m, -1)
        q = min(candidates, flat.shape[1])
        top = np.argpartition(-flat, q - 1, axis=1)[:, :q]
        best = f.reshape(m, -1).max(axis=1)
        which = np.repeat(np.arange(m), q)
        centers = pts_all.reshape(-1, d)[top.ravel()]
        step = spacing.copy()
        for _ in range(levels):
            pts = centers[:, None, :] + stencil[None, :, :] * step
            vals = np.abs(_point_values(basis, C[sel], which, pts, size))
            vals *= np.sqrt(1.0 + np.sum(pts * pts, axis=-1)) ** s
            arg = vals.argmax(axis=1)
            centers = pts[np.arange(pts.shape[0]), arg]
            np.maximum.at(best, which, vals.max(axis=1))
            step = step / patch
        out[sel] = best
    return out


def weighted_lr_norms(basis, window, coeffs, r, s, grid=None, chunk=32):
    """(int <x>^s |u|^r dx)^(1/r) per row, trapezoid rule on a uniform grid."""
    coeffs = np.atleast_2d(coeffs)
    if grid is None:
        grid = sup_grid(basis, window)
    C, size = trimmed_coefficients(basis, window, coeffs)
    tables = [basis.axis_table(ax, size) for ax in grid.axes]
    w = grid.weights() * grid.bracket() ** s
    out = np.empty(coeffs.shape[0])
    for start in range(0, coeffs.shape[0], chunk):
        sel = slice(start, min(start + chunk, coeffs.shape[0]))
        a = np.abs(synthesize_on_grid(basis, C[sel], tables))
        out[sel] = np.sum((w * a ** r).reshape(a.shape[0], -1), axis=1) ** (1.0 / r)
    return out


def phase_volume(V, lam, n_theta=1024):
    """(2 pi)^(-d) vol{|xi|^2 + V(x) <= lam} via the xi-ball reduction.

    d=1 integrates 2 sqrt(lam - V) between real roots with adaptive quadrature.
    d=2 uses polar coordinates: along each ray the radial integral of
    (lam - V) r is a polynomial integral between roots; the angular integral
    is a periodic trapezoid rule.
    """
    from scipy.integrate import quad

    if V.d == 1:
        coeffs = np.zeros(2 * V.k + 1)
        for (p,), c in V.monomials:
            coeffs[p] += c
        coeffs[0] += V.shift - lam
        roots = _real_roots(coeffs[::-1])
        total = 0.0
        for lo, hi in zip(roots[:-1], roots[1:]):
            mid = 0.5 * (lo + hi)
            if np.polyval(coeffs[::-1], mid) < 0:
                total += quad(lambda x: np.sqrt(max(0.0, -np.polyval(coeffs[::-1], x))),
                              lo, hi, limit=200, epsabs=0, epsrel=1e-13)[0]
        return total * 2.0 / (2 * np.pi)
    if V.d != 2:
        raise ValueError("phase_volume supports d in {1, 2}")
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    acc = 0.0
    for th in thetas:
        w = np.array([np.cos(th), np.sin(th)])
        poly = np.zeros(2 * V.k + 1)
        for alpha, c in V.monomials:
            poly[sum(alpha)] += c * w[0] ** alpha[0] * w[1] ** alpha[1]
        poly[0] += V.shift - lam
        # integrand (lam - V(r w)) r = -poly(r) r
        g = -np.concatenate([[0.0], poly])
        G = np.polynomial.polynomial.polyint(g)
        roots = _real_roots(poly[::-1])
        cuts = np.concatenate([[0.0], roots[roots > 0]])
        cuts = np.sort(cuts)
        ends = np.concatenate([cuts, [np.inf]])
        for lo, hi in zip(ends[:-1], ends[1:]):
            if np.isinf(hi):
                continue
            mid = 0.5 * (lo + hi)
            if np.polynomial.polynomial.polyval(mid, g) > 0:
                acc += np.polynomial.polynomial.polyval(hi, G) - np.polynomial.polynomial.polyval(lo, G)
    area = acc * 2 * np.pi / n_theta
    return area * np.pi / (2 * np.pi) ** 2


def _real_roots(desc):
    r = np.roots(desc)
    r = r[np.abs(r.imag) <= 1e-9 * np.maximum(1.0, np.abs(r.real))].real
    return np.sort(r)


def weyl_count(basis, lam):
    """(number of eigenvalues <= lam, phase-space volume prediction)."""
    E = basis.eigenvalues
    t = basis.trust_count
    nxt = _next_energy(basis) ** (2 * basis.k / (basis.k + 1.0))
    if nxt <= lam * (1 + SNAP):
        raise WindowTooWide(f"lambda={lam} beyond trusted spectrum")
    count = int(np.count_nonzero(E[:t] <= lam * (1 + SNAP)))
    return count, phase_volume(basis.potential, lam)


def weyl_slope(basis, lam_lo, lam_hi, n_points=30):
    """Least-squares slope of log count vs log lambda on a log-spaced grid."""
    lams = np.geomspace(lam_lo, lam_hi, n_points)
    counts = np.array([weyl_count(basis, l)[0] for l in lams], dtype=float)
    keep = counts > 0
    slope, _ = np.polyfit(np.log(lams[keep]), np.log(counts[keep]), 1)
    return float(slope)


@dataclass(frozen=True)
class HeatDiagonal:
    values: np.ndarray
    tail_bound: np.ndarray
    tail_estimate: np.ndarray
    flagged: np.ndarray


def _trusted_floor(basis):
    if basis.trust_count == 0:
        raise ValueError("basis has no trusted eigenvalues")
    return basis.eigenvalues[basis.trust_count - 1] * (1 - 1e-8)


def heat_tail_bound(basis, t):
    """Uniform bound on the discarded part of the heat sum at time t.

    With V >= 0 the heat kernel is dominated by the free one, so for any
    s in (0, t) the tail is at most exp(-(t - s) L) (4 pi s)^(-d/2), where L
    bounds the discarded eigenvalues from below. The minimizing s is used.
    """
    d = basis.d
    L = _trusted_floor(basis)
    s = min(0.5 * t, d / (2.0 * L)) if L > 0 else 0.5 * t
    return float(np.exp(-(t - s) * L) * (4 * np.pi * s) ** (-d / 2.0))


def _radial_minorant(V):
    """Ascending coefficients of g with V(x) >= g(|x|).

    The top part contributes 0.99 times its sampled minimum on the sphere
    (the margin); every lower-order monomial is bounded by -|c| r^|alpha|.
    """
    k2 = 2 * V.k
    g = np.zeros(k2 + 1)
    g[k2] = 0.99 * ellipticity_margin(V)
    for alpha, c in V.monomials:
        deg = sum(alpha)
        if deg < k2:
            g[deg] -= abs(c)
    g[0] += V.shift
    return g


def heat_tail_local(basis, t, points, n_s=12, n_rho=9):
    """Pointwise rigorous bound on the discarded heat sum, decaying in |x|.

    The tail is at most exp(-(t - s) L) K(s; x, x) for s in (0, t). By the
    Feynman-Kac formula K(s; x, x) is (4 pi s)^(-d/2) times the mean of
    exp(-int V) along a Brownian bridge (generator Laplacian) of duration s.
    Splitting on whether the bridge leaves the ball B(x, rho) gives
    K <= (4 pi s)^(-d/2) (exp(-s min_B V) + 2d exp(-rho^2 / (d s))).
    The bound is minimized over a grid of (s, rho).
    """
    d = basis.d
    L = _trusted_floor(basis)
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    r = np.sqrt(np.sum(pts * pts, axis=1))
    g = _radial_minorant(basis.potential)
    crit = np.polynomial.polynomial.polyroots(np.polynomial.polynomial.polyder(g)) if g.size > 2 else []
    crit = np.array([c.real for c in np.atleast_1d(crit) if abs(c.imag) < 1e-12 and c.real > 0])
    ss = t * 0.5 ** np.arange(1, n_s + 1)
    if 0 < d / (2 * L) < t:
        ss = np.append(ss, d / (2 * L))
    out = np.empty(r.size)
    for i, ri in enumerate(r):
        best = np.inf
        for frac in np.linspace(0.0, 1.0, n_rho):
            rho = frac * ri
            lo, hi = max(ri - rho, 0.0), ri + rho
            cand = np.concatenate([[lo, hi], crit[(crit > lo) & (crit < hi)]])
            vmin = max(float(np.min(np.polynomial.polynomial.polyval(cand, g))), 0.0)
            for s in ss:
                exit_p = 2 * d * np.exp(-rho * rho / (d * s)) if rho > 0 else 1.0
                val = np.exp(-(t - s) * L) * (4 * np.pi * s) ** (-d / 2.0) * (
                    np.exp(-s * vmin) + min(exit_p, 1.0))
                best = min(best, val)
        out[i] = best
    return out


def heat_tail_estimate(basis, t, points):
    """Local Weyl estimate of the discarded heat sum, decaying in x."""
    d = basis.d
    L = basis.eigenvalues[basis.trust_count - 1]
    V = eval_potential(basis.potential, np.asarray(points).reshape(-1, d))
    mu = np.maximum(L - V, 0.0)
    omega = np.pi ** (d / 2.0) / gamma(d / 2.0 + 1)
    tail = (d / 2.0) * t ** (-d / 2.0) * gamma(d / 2.0) * gammaincc(d / 2.0, t * mu)
    return (2 * np.pi) ** (-d) * omega * np.exp(-t * V) * tail


def heat_diag(basis, t, points, chunk=256):
    """Truncated heat-kernel diagonal sum_j exp(-t lambda_j) |phi_j(x)|^2.

    ``tail_bound`` is the pointwise rigorous bound on what was discarded
    (the smaller of the uniform and the local bound); points where it
    exceeds 1e-8 times the value are flagged.
    """
    idx = np.arange(basis.trust_count)
    pts = np.asarray(points, dtype=float).reshape(-1, basis.d)
    w = np.exp(-t * basis.eigenvalues[idx])
    keep = idx[w > 1e-300]
    out = np.zeros(pts.shape[0])
    for start in range(0, keep.size, chunk):
        sel = keep[start:start + chunk]
        vals = evaluate_states(basis, sel, pts)
        out += (w[sel][:, None] * vals * vals).sum(axis=0)
    bound = np.minimum(heat_tail_bound(basis, t), heat_tail_local(basis, t, pts))
    return HeatDiagonal(out, bound, heat_tail_estimate(basis, t, pts), bound > 1e-8 * out)


def _kinetic_axis(basis, size):
    return momentum_square(size) / basis.sigma ** 2


def kinetic_form(basis, tensor_coeffs, power):
    """||(-Laplacian)^(power/2) u||^2 for rows of tensor coefficients, power in {1, 2}.

    Exact: the per-axis kinetic matrix is applied in a basis padded by two.
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    C = np.asarray(tensor_coeffs).T                 # (dim, m)
    n = basis.n_axis
    big = n + 2
    K = _kinetic_axis(basis, big)
    if basis.d == 1:
        Cp = np.pad(C, ((0, 2), (0, 0)))
        KC = K @ Cp
    else:
        Cp = np.pad(C.reshape(n, n, -1), ((0, 2), (0, 2), (0, 0)))
        KC = np.tensordot(K, Cp, axes=(1, 0))
        KC += np.tensordot(Cp, K, axes=(1, 1)).transpose(0, 2, 1)
        KC = KC.reshape(big * big, -1)
        Cp = Cp.reshape(big * big, -1)
    if power == 1:
        return np.real(np.sum(Cp.conj() * KC, axis=0))
    return np.sum(np.abs(KC) ** 2, axis=0)


def laplacian_moment(basis, indices, power):
    """<phi_j, (-Laplacian)^power phi_j> for power in {1, 2}, exact in the basis."""
    C = basis.coefficient_block(basis.check_trusted(indices))
    return kinetic_form(basis, C.T, power)


def position_moment(basis, indices, power, n_grid=None):
    """<phi_j, |x|^power phi_j>; exact quadrature for even integer powers."""
    indices = basis.check_trusted(indices)
    if power == int(power) and int(power) % 2 == 0:
        p = int(power)
        n = basis.n_axis
        rule = gauss_hermite(n + p // 2 + 1)
        M = {q: position_power(n, q, basis.sigma, rule) for q in range(0, p + 1, 2)}
        C = basis.coefficient_block(indices)
        if basis.d == 1:
            return np.einsum("ij,ik,kj->j", C, M[p], C)
        from math import comb

        C3 = C.reshape(n, n, -1)
        out = np.zeros(indices.size)
        for q in range(0, p + 1, 2):
            c = comb(p // 2, q // 2)
            tmp = np.einsum("ab,bcj->acj", M[q], C3)
            tmp = np.einsum("cd,adj->acj", M[p - q], tmp)
            out += c * np.einsum("acj,acj->j", C3, tmp)
        return out
    # non-polynomial weight: fine trapezoid rule (kink at the origin only)
    lam_max = basis.eigenvalues[indices].max()
    R = 1.5 * turning_radius(basis.potential, lam_max ** ((basis.k + 1) / (2.0 * basis.k))) + 4 * basis.sigma
    if n_grid is None:
        n_grid = 1601 if basis.d == 1 else 401
    grid = uniform_grid(R, n_grid, basis.d)
    r = grid.bracket()
    r = np.sqrt(np.maximum(r * r - 1.0, 0.0)) ** power
    w = grid.weights()
    tables = [basis.axis_table(ax) for ax in grid.axes]
    vals = synthesize_on_grid(basis, basis.coefficient_block(indices).T, tables)
    dens = (vals * vals).reshape(vals.shape[0], -1)
    return dens @ (w * r).ravel()


@dataclass(frozen=True)
class NoSmoothingTable:
    indices: np.ndarray
    s: float
    r1: np.ndarray
    r2: np.ndarray


def no_smoothing_ratios(basis, s, indices):
    """r1 = ||(-Laplacian)^s phi_n|| / lambda_n^s, r2 = || |x|^s phi_n || / lambda_n^(s/(2k))."""
    two_s = 2 * s
    if abs(two_s - round(two_s)) > 1e-12 or round(two_s) not in (1, 2):
        raise ValueError("s must be 1/2 or 1")
    indices = basis.check_trusted(indices)
    lam = basis.eigenvalues[indices]
    r1 = np.sqrt(laplacian_moment(basis, indices, int(round(two_s)))) / lam ** s
    r2 = np.sqrt(position_moment(basis, indices, two_s)) / lam ** (s / (2.0 * basis.k))
    return NoSmoothingTable(indices, s, r1, r2)


def write_csv(rows, columns, comment, path=None):
    """CSV text with a leading '# ' comment line describing the columns."""
    buf = io.StringIO()
    buf.write("# " + comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v

"""Weyl quantization of phase-space observables.

Polynomial symbols are quantized exactly in the Hermite basis through the
Weyl-ordering identity

    Op(x^m xi^n) = 2^-m sum_i C(m, i) X^i (hP)^n X^(m-i).

General (cutoff, quasi-homogeneous) symbols are paired with cross-Wigner
functions of Hermite functions, which are available in closed form through
normalized Laguerre functions. Symbols of the form chi(|z|) N(z) / |z|^(2m)
are integrated in per-plane polar coordinates with exact angular sums; any
other callable goes through a Gauss-Hermite product rule in phase space.
"""

import warnings
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
from scipy.special import gammaln

from .errors import DimensionUnsupported, GridUnderresolved, TruncationWarning
from .hermite_core import gauss_hermite, ladder_matrices


# --------------------------------------------------------------------------
# symbols


@dataclass(frozen=True)
class PolySymbol:
    """sum c * x^alpha xi^beta on R^d x R^d, stored sparsely."""

    d: int
    terms: tuple

    def __post_init__(self):
        merged = {}
        for (alpha, beta), c in self.terms:
            key = (tuple(int(a) for a in alpha), tuple(int(b) for b in beta))
            if len(key[0]) != self.d or len(key[1]) != self.d:
                raise ValueError("multi-index length does not match d")
            merged[key] = merged.get(key, 0.0) + complex(c)
        terms = tuple(sorted((k, v) for k, v in merged.items() if v != 0))
        object.__setattr__(self, "terms", terms)

    @property
    def is_real(self):
        return all(c.imag == 0 for _, c in self.terms)

    @property
    def degree(self):
        return max((sum(a) + sum(b) for (a, b), _ in self.terms), default=0)

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        real = self.is_real
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        out = np.zeros(shape, dtype=float if real else complex)
        for (alpha, beta), c in self.terms:
            term = np.full(shape, c.real if real else c)
            for i in range(self.d):
                if alpha[i]:
                    term = term * x[..., i] ** alpha[i]
                if beta[i]:
                    term = term * xi[..., i] ** beta[i]
            out += term
        return out

    def __add__(self, other):
        return PolySymbol(self.d, self.terms + other.terms)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, s):
        return PolySymbol(self.d, tuple((k, s * c) for k, c in self.terms))

    def to_text(self):
        lines = [f"{self.d}"]
        for (alpha, beta), c in self.terms:
            lines.append(
                " ".join(map(str, alpha)) + " | " + " ".join(map(str, beta))
                + f" {c.real.hex()} {c.imag.hex()}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln for ln in text.strip().splitlines() if ln.strip()]
        d = int(rows[0].split()[0])
        terms = []
        for row in rows[1:]:
            left, right = row.split("|")
            alpha = tuple(int(v) for v in left.split())
            rest = right.split()
            beta = tuple(int(v) for v in rest[:d])
            re, im = (float.fromhex(v) if "x" in v else float(v) for v in rest[d:d + 2])
            terms.append(((alpha, beta), complex(re, im)))
        return cls(d, tuple(terms))


def monomial(d, alpha, beta, c=1.0):
    return PolySymbol(d, (((tuple(alpha), tuple(beta)), c),))


def constant_symbol(d, c=1.0):
    return monomial(d, (0,) * d, (0,) * d, c)


def harmonic_symbol(d):
    """|xi|^2 + |x|^2."""
    terms = []
    for i in range(d):
        e = tuple(2 if j == i else 0 for j in range(d))
        z = (0,) * d
        terms += [((e, z), 1.0), ((z, e), 1.0)]
    return PolySymbol(d, tuple(terms))


def hamiltonian_symbol(V, half_kinetic=False, top_only=True):
    """|xi|^2 (or |xi|^2/2) + V_0 (or V) as a PolySymbol."""
    d = V.d
    z = (0,) * d
    kin = 0.5 if half_kinetic else 1.0
    terms = [((z, tuple(2 if j == i else 0 for j in range(d))), kin) for i in range(d)]
    mons = V.top_part if top_only else V.monomials
    terms += [((alpha, z), c) for alpha, c in mons]
    if not top_only and V.shift:
        terms.append(((z, z), V.shift))
    return PolySymbol(d, tuple(terms))


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        g = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
        return f / (f + g)


def quasi_radius(x, xi, k):
    """(|x|^(2k) + |xi|^2)^(1/(2k)); scales by t under (x, xi) -> (t x, t^k xi)."""
    x2 = np.sum(np.asarray(x) ** 2, axis=-1)
    xi2 = np.sum(np.asarray(xi) ** 2, axis=-1)
    return (x2 ** k + xi2) ** (1.0 / (2 * k))


@dataclass(frozen=True)
class CutoffSymbol:
    """Quasi-homogeneous degree-0 observable with a smooth cutoff at the origin.

    ``func(x, xi)`` is the homogeneous part; it is switched off for
    quasi-radius below ``eps`` and fully on beyond ``2 eps`` where the value
    inside is ``inner``.
    """

    d: int
    func: object
    k: int = 1
    eps: float = 0.1
    sup_bound: float = 1.0
    inner: float = 0.0
    name: str = ""

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        rho = quasi_radius(x, xi, self.k)
        chi = _smooth_step(rho / self.eps - 1.0)
        safe = rho > 0.5 * self.eps
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(safe, self.func(x, xi), 0.0)
        return chi * vals + (1.0 - chi) * self.inner


def homogeneous_ratio(numerator, k=1, power=1, **kw):
    """numerator(x, xi) / (|x|^(2k) + |xi|^2)^power with a smooth cutoff at the origin.

    For k = 1 this returns a :class:`RadialRatioSymbol`, which the grid
    quantizer integrates with exact angular quadrature.
    """
    if k == 1:
        kw.pop("name", None)
        return RadialRatioSymbol(numerator, power=power, **kw)
    d = numerator.d

    def func(x, xi):
        den = np.sum(x * x, axis=-1) ** k + np.sum(xi * xi, axis=-1)
        return np.real(numerator(x, xi)) / den ** power

    return CutoffSymbol(d, func, k=k, **kw)


@dataclass(frozen=True)
class RadialRatioSymbol:
    """chi(|z|/eps) N(z) / |z|^(2m) + (1 - chi(|z|/eps)) inner, with z = (x, xi).

    The k=1 family of quasi-homogeneous observables built from a polynomial
    numerator. Its structure lets the grid quantizer integrate angles
    exactly; see :func:`weyl_quantize_grid`.
    """

    numerator: PolySymbol
    power: int = 1
    eps: float = 0.1
    inner: float = 0.0
    sup_bound: float = 1.0
    k: int = 1

    @property
    def d(self):
        return self.numerator.d

    def radial_factor(self, R):
        R = np.asarray(R, dtype=float)
        chi = _smooth_step(R / self.eps - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(R > 0.5 * self.eps, chi / np.where(R > 0, R, 1.0) ** (2 * self.power), 0.0)
        return g, chi

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        R = np.sqrt(np.sum(x * x, axis=-1) + np.sum(xi * xi, axis=-1))
        g, chi = self.radial_factor(R)
        return np.real(self.numerator(x, xi)) * g + (1.0 - chi) * self.inner


# --------------------------------------------------------------------------
# polynomial path


@dataclass(frozen=True)
class QuantizedOperator:
    """Matrix of a quantized symbol with its trusted per-axis block size."""

    matrix: np.ndarray
    n_axis: int
    trusted: int
    h: float
    sigma: float

    def trusted_indices(self, d):
        keep = np.arange(self.trusted)
        if d == 1:
            return keep
        a, b = np.meshgrid(keep, keep, indexing="ij")
        return (a * self.n_axis + b).ravel()


def _weyl_1d(m, n, X, P):
    out = np.zeros_like(X, dtype=complex)
    Pn = np.linalg.matrix_power(P, n)
    for i in range(m + 1):
        out += comb(m, i) * np.linalg.matrix_power(X, i) @ Pn @ np.linalg.matrix_power(X, m - i)
    return out / 2 ** m


def weyl_quantize_poly(A, n_axis, h=1.0, sigma=1.0, exact=True):
    """Weyl h-quantization of a polynomial symbol in the scaled Hermite basis.

    With ``exact=True`` the per-axis products are formed in a padded basis so
    every returned entry is exact. With ``exact=False`` they are formed in the
    truncated basis; the last ``degree`` rows/columns per axis are then
    masked and a TruncationWarning is issued.
    """
    deg = max(A.degree, 1)
    size = n_axis + deg if exact else n_axis
    lad = ladder_matrices(size - 1)
    X = sigma * lad.X
    P = (h / sigma) * lad.P
    cache = {}

    def axis_op(m, n):
        if (m, n) not in cache:
            cache[(m, n)] = _weyl_1d(m, n, X, P)[:n_axis, :n_axis]
        return cache[(m, n)]

    dim = n_axis ** A.d
    M = np.zeros((dim, dim), dtype=complex)
    for (alpha, beta), c in A.terms:
        term = axis_op(alpha[0], beta[0])
        for i in range(1, A.d):
            term = np.kron(term, axis_op(alpha[i], beta[i]))
        M += c * term
    if A.is_real:
        M = 0.5 * (M + M.conj().T)
    trusted = n_axis
    if not exact:
        trusted = max(n_axis - deg, 0)
        warnings.warn(
            f"symbol degree {deg} with n_axis={n_axis}: last {deg} rows per axis untrusted",
            TruncationWarning,
            stacklevel=2,
        )
        bad = np.ones(dim, dtype=bool)
        op = QuantizedOperator(M, n_axis, trusted, h, sigma)
        bad[op.trusted_indices(A.d)] = False
        M = np.ma.MaskedArray(M, mask=bad[:, None] | bad[None, :])
    return QuantizedOperator(M, n_axis, trusted, h, sigma)


def poly_window_matrix(A, basis, window, h=1.0):
    """<phi_j, Op_h(A) phi_l> for j, l in the window, via the polynomial path."""
    n = _active_size(basis, window)
    op = weyl_quantize_poly(A, n, h, basis.sigma)
    return _window_block(op.matrix, basis, window, n)


# --------------------------------------------------------------------------
# Moyal product


def _derive(term, dx, dxi):
    """Derivative of c x^alpha xi^beta; returns None when it vanishes."""
    (alpha, beta), c = term
    coef = c
    na, nb = [], []
    for a, k in zip(alpha, dx):
        if k > a:
            return None
        coef *= factorial(a) / factorial(a - k)
        na.append(a - k)
    for b, k in zip(beta, dxi):
        if k > b:
            return None
        coef *= factorial(b) / factorial(b - k)
        nb.append(b - k)
    return (tuple(na), tuple(nb)), coef


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class MoyalSeries:
    """C(h) = sum_j h^j C_j with polynomial coefficients C_j."""

    d: int
    orders: tuple

    def at(self, h):
        terms = []
        for j, Cj in enumerate(self.orders):
            terms += [(key, c * h ** j) for key, c in Cj.terms]
        return PolySymbol(self.d, tuple(terms))


def moyal_term(A, B, j):
    """C_j = (i/2)^j sum_{|a|+|b|=j} (-1)^|b| / (a! b!) d_x^a d_xi^b A * d_x^b d_xi^a B.

    The sign is fixed by Op(A) Op(B) = Op(A # B) for the quantization with
    P = -i d/dx, which gives x # xi = x xi + i h / 2.
    """
    d = A.d
    out = {}
    pref = (0.5j) ** j
    for split in _compositions(j, 2 * d):
        a, b = split[:d], split[d:]
        weight = pref * (-1) ** sum(b)
        for v in a + b:
            weight /= factorial(v)
        for ta in A.terms:
            da = _derive(ta, a, b)
            if da is None:
                continue
            for tb in B.terms:
                db = _derive(tb, b, a)
                if db is None:
                    continue
                key = (
                    tuple(p + q for p, q in zip(da[0][0], db[0][0])),
                    tuple(p + q for p, q in zip(da[0][1], db[0][1])),
                )
                out[key] = out.get(key, 0) + weight * da[1] * db[1]
    return PolySymbol(d, tuple(out.items()))


def moyal_product(A, B, h=None):
    """Exact Moyal product of polynomial symbols.

    Returns the graded series when ``h`` is None, otherwise its value at h.
    """
    top = A.degree + B.degree
    orders = tuple(moyal_term(A, B, j) for j in range(top + 1))
    series = MoyalSeries(A.d, orders)
    return series if h is None else series.at(h)


# --------------------------------------------------------------------------
# cross-Wigner functions and the grid path


def laguerre_table(n, t):
    """Normalized Laguerre functions for all pairs a <= b < n.

    Returns L with L[a, b] = sqrt(a!/b!) t^(p/2) e^(-t/2) L_a^(p)(t), p = b - a,
    evaluated at the points t (shape (n, n, len(t)), zero below the diagonal).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((n, n, t.size))
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    for p in range(n):
        if p == 0:
            log0 = -0.5 * t
        else:
            log0 = np.where(t > 0, 0.5 * p * logt, -np.inf) - 0.5 * t - 0.5 * gammaln(p + 1.0)
        prev = np.zeros_like(t)
        cur = np.exp(log0)
        out[0, p] = cur
        for m in range(n - 1 - p):
            nxt = ((2 * m + 1 + p - t) * cur - np.sqrt(m * (m + p)) * prev) / np.sqrt(
                (m + 1) * (m + 1 + p)
            )
            prev, cur = cur, nxt
            out[m + 1, m + 1 + p] = cur
    return out


def cross_wigner_table(n, x, xi):
    """W[a, b] = cross-Wigner function of (h_b, h_a) at phase-space points (x, xi).

    W_{g,f}(x, xi) = (2 pi)^-1 int g(x + y/2) conj(f(x - y/2)) e^{-i xi y} dy, so
    that <f, Op(A) g> = int int A W_{g,f}.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    r2 = x * x + xi * xi
    L = laguerre_table(n, 2.0 * r2)
    phase = np.exp(1j * np.arctan2(xi, x))
    a = np.arange(n)
    sign = (-1.0) ** a
    W = np.zeros((n, n, x.size), dtype=complex)
    for p in range(n):
        ph = phase ** p
        for m in range(n - p):
            val = sign[m] / np.pi * L[m, m + p]
            W[m, m + p] = val * np.conj(ph)
            if p:
                W[m + p, m] = val * ph
    return W


@dataclass(frozen=True, eq=False)
class PhaseSpaceRule:
    """Gauss-Hermite product rule in one (x, xi) plane."""

    x: np.ndarray
    xi: np.ndarray
    w: np.ndarray

    @classmethod
    def build(cls, q):
        r = gauss_hermite(q)
        X, XI = np.meshgrid(r.nodes, r.nodes, indexing="ij")
        W = np.multiply.outer(r.weights, r.weights)
        return cls(X.ravel(), XI.ravel(), W.ravel())


def _symbol_grid(A, rules, sigma, h, rows=None):
    """A(sigma x, h xi / sigma) on the product of per-axis phase-space rules."""
    d = len(rules)
    if d == 1:
        r = rules[0]
        x = (sigma * r.x)[:, None]
        xi = (h / sigma * r.xi)[:, None]
        return np.asarray(A(x, xi))
    r1, r2 = rules
    sel = slice(None) if rows is None else rows
    x1 = sigma * r1.x[sel][:, None]
    k1 = h / sigma * r1.xi[sel][:, None]
    x2 = sigma * r2.x[None, :]
    k2 = h / sigma * r2.xi[None, :]
    shape = np.broadcast_shapes(x1.shape, x2.shape)
    x = np.stack(np.broadcast_arrays(x1, x2), axis=-1).reshape(shape + (2,))
    xi = np.stack(np.broadcast_arrays(k1, k2), axis=-1).reshape(shape + (2,))
    return np.asarray(A(x, xi))


def tensor_symbol_matrix(A, d, n, q, sigma=1.0, h=1.0, chunk=1024):
    """<e_alpha, Op_h(A) e_beta> for all alpha, beta in {0..n-1}^d via phase-space quadrature."""
    rule = PhaseSpaceRule.build(q)
    W = cross_wigner_table(n, rule.x, rule.xi) * rule.w      # (n, n, Q)
    Wf = W.reshape(n * n, -1)
    if d == 1:
        vals = _symbol_grid(A, [rule], sigma, h)
        M = (Wf @ vals).reshape(n, n)
        return M
    Q = rule.x.size
    S = np.zeros((n * n, Q), dtype=complex)
    for start in range(0, Q, chunk):
        rows = slice(start, min(Q, start + chunk))
        block = _symbol_grid(A, [rule, rule], sigma, h, rows)     # (rows, Q)
        if np.iscomplexobj(block):
            S += Wf[:, rows] @ block
        else:
            S += (Wf[:, rows].real @ block) + 1j * (Wf[:, rows].imag @ block)
    # M[(a1,b1),(a2,b2)] -> reorder to [(a1,a2),(b1,b2)]
    M = S @ Wf.T
    M = M.reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n)
    return M


def laguerre_rows(count, p, t):
    """Rows m = 0..count-1 of the normalized Laguerre table at fixed order p."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((count, t.size))
    if count <= 0:
        return out
    if p == 0:
        log0 = -0.5 * t
    else:
        with np.errstate(divide="ignore"):
            logt = np.log(t)
        log0 = np.where(t > 0, 0.5 * p * logt, -np.inf) - 0.5 * t - 0.5 * gammaln(p + 1.0)
    prev = np.zeros_like(t)
    cur = np.exp(log0)
    out[0] = cur
    for m in range(count - 1):
        nxt = ((2 * m + 1 + p - t) * cur - np.sqrt(m * (m + p)) * prev) / np.sqrt(
            (m + 1) * (m + 1 + p)
        )
        prev, cur = cur, nxt
        out[m + 1] = cur
    return out


def _trig_fourier(a, b):
    """Fourier coefficients {p: c_p} of cos^a(phi) sin^b(phi)."""
    deg = a + b
    N = 2 * deg + 2
    phi = 2 * np.pi * np.arange(N) / N
    c = np.fft.fft(np.cos(phi) ** a * np.sin(phi) ** b) / N
    out = {}
    for p in range(-deg, deg + 1):
        v = c[p % N]
        if abs(v) > 1e-14:
            out[p] = v
    return out


def _gl_panels(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _radial_rule(n, eps_q, refine):
    """Composite Gauss-Legendre rule on [0, R_max] with breaks at eps and 2 eps."""
    r_max = np.sqrt(2.0 * n + 2.0) + 6.0
    marks = [0.0] + [m for m in (eps_q, 2.0 * eps_q) if m < r_max] + [r_max]
    width = 0.5 / refine
    breaks = [0.0]
    for lo, hi in zip(marks[:-1], marks[1:]):
        pieces = max(1, int(np.ceil((hi - lo) / width)))
        breaks.extend(np.linspace(lo, hi, pieces + 1)[1:])
    return _gl_panels(np.asarray(breaks), 16)


def polar_symbol_matrix(A, n, scale, refine=1):
    """Tensor matrix of Op(A) for a RadialRatioSymbol by per-plane polar quadrature.

    The symbol is evaluated at scale * (x, xi). In polar coordinates of each
    (x_i, xi_i) plane the angular integrals of the numerator are exact, so
    only the radial variables need quadrature. For d = 2 the radial pair is
    written as (R cos t, R sin t) so the cutoff is resolved by panels in R.
    """
    d = A.d
    eps_q = A.eps / scale
    Rn, Rw = _radial_rule(n, eps_q, refine)
    g, chi = A.radial_factor(scale * Rn)
    outer = (1.0 - chi) * A.inner
    plane_terms = []
    for (alpha, beta), c in A.numerator.terms:
        fs = [_trig_fourier(alpha[i], beta[i]) for i in range(d)]
        degs = [alpha[i] + beta[i] for i in range(d)]
        plane_terms.append((c, fs, degs))
    if d == 1:
        modes = {}
        for c, (f,), (dg,) in plane_terms:
            for p, v in f.items():
                modes[p] = modes.get(p, 0.0) + c * v * (scale * Rn) ** dg * g
        modes[0] = modes.get(0, 0.0) + outer
        M = np.zeros((n, n), dtype=complex)
        t = 2.0 * Rn * Rn
        for p, vals in modes.items():
            q = abs(p)
            if q >= n:
                continue
            L = laguerre_rows(n - q, q, t)
            col = L @ (Rw * Rn * vals)
            m = np.arange(n - q)
            a = m + (q if p < 0 else 0)
            M[a, a + p] = 2.0 * (-1.0) ** m * col
        return M
    if d != 2:
        raise DimensionUnsupported("polar quadrature supports d <= 2")
    deg = max((sum(dg) for _, _, dg in plane_terms), default=0)
    n_theta = refine * (2 * n + 2 * deg + 24)
    th, thw = np.polynomial.legendre.leggauss(n_theta)
    th = 0.25 * np.pi * (th + 1.0)
    thw = 0.25 * np.pi * thw
    R = np.repeat(Rn, n_theta)
    T = np.tile(th, Rn.size)
    W = np.repeat(Rw, n_theta) * np.tile(thw, Rn.size)
    G = np.repeat(g, n_theta)
    OUT = np.repeat(outer, n_theta)
    r1 = R * np.cos(T)
    r2 = R * np.sin(T)
    base = W * R * r1 * r2
    modes = {}
    for c, (f1, f2), (d1, d2) in plane_terms:
        radial = c * (scale * r1) ** d1 * (scale * r2) ** d2 * G
        for p1, v1 in f1.items():
            for p2, v2 in f2.items():
                key = (p1, p2)
                modes[key] = modes.get(key, 0.0) + v1 * v2 * radial
    modes[(0, 0)] = modes.get((0, 0), 0.0) + OUT
    t1 = 2.0 * r1 * r1
    t2 = 2.0 * r2 * r2
    tables = {}

    def rows(axis, q):
        key = (axis, q)
        if key not in tables:
            tables[key] = laguerre_rows(n - q, q, t1 if axis == 0 else t2)
        return tables[key]

    M = np.zeros((n, n, n, n), dtype=complex)
    for (p1, p2), vals in modes.items():
        q1, q2 = abs(p1), abs(p2)
        if q1 >= n or q2 >= n:
            continue
        L1 = rows(0, q1)
        L2 = rows(1, q2)
        block = L1 @ ((base * vals)[:, None] * L2.T)
        m1 = np.arange(n - q1)
        m2 = np.arange(n - q2)
        sgn = np.outer((-1.0) ** m1, (-1.0) ** m2)
        a1 = m1 + (q1 if p1 < 0 else 0)
        a2 = m2 + (q2 if p2 < 0 else 0)
        M[a1[:, None], a2[None, :], (a1 + p1)[:, None], (a2 + p2)[None, :]] = 4.0 * sgn * block
    return M.reshape(n * n, n * n)


def _active_size(basis, window):
    """Smallest per-axis size covering every coefficient of the window states."""
    if basis.analytic:
        return int(basis.multi_indices(window.indices).max()) + 1
    C = np.abs(basis.coefficient_block(window.indices))
    if basis.d == 1:
        used = np.flatnonzero(C.max(axis=1) > 0)
        return int(used.max()) + 1
    C = C.max(axis=1).reshape(basis.n_axis, basis.n_axis)
    used = np.argwhere(C > 0)
    return int(used.max()) + 1


@dataclass(frozen=True, eq=False)
class GridQuantization:
    matrix: np.ndarray
    nodes: int
    check_nodes: int
    max_change: float


def _window_block(M, basis, window, n):
    C = basis.coefficient_block(window.indices)
    if basis.d == 1:
        C = C[:n]
    else:
        C = C.reshape(basis.n_axis, basis.n_axis, -1)[:n, :n].reshape(n * n, -1)
    return C.T @ M @ C


def _polar_applicable(A, sigma, h):
    return isinstance(A, RadialRatioSymbol) and abs(sigma * sigma - h) <= 1e-12 * max(h, 1.0)


def weyl_quantize_grid(A, basis, window, h=1.0, nodes=None, check=True, tol=1e-4,
                       sigma=None, engine="auto"):
    """<phi_j, Op_h(A) phi_l> for j, l in the window by Wigner pairing.

    Two quadrature engines are available. ``"polar"`` handles
    :class:`RadialRatioSymbol` when the basis scale satisfies sigma^2 = h, so
    the symbol is isotropic in each (x_i, xi_i) plane; angles are integrated
    exactly and the check doubles every radial and angular node count.
    ``"cartesian"`` is a Gauss-Hermite product rule for any callable;
    ``nodes`` is its order per phase-space coordinate (default: active basis
    size plus 16) and the check recomputes with 1.5 times as many.
    GridUnderresolved is raised if any entry moves by more than ``tol``.
    ``sigma`` overrides the basis scale (used for rescaled states).
    """
    n = _active_size(basis, window)
    sig = basis.sigma if sigma is None else sigma
    if engine == "auto":
        engine = "polar" if _polar_applicable(A, sig, h) else "cartesian"
    if engine == "polar":
        if not _polar_applicable(A, sig, h):
            raise ValueError("polar engine needs a RadialRatioSymbol and sigma^2 = h")
        level, level2 = 1, 2

        def build(q):
            return polar_symbol_matrix(A, n, sig, refine=q)
    elif engine == "cartesian":
        level = n + 16 if nodes is None else nodes
        level2 = int(np.ceil(1.5 * level))

        def build(q):
            return tensor_symbol_matrix(A, basis.d, n, q, sig, h)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    real = _is_real_symbol(A)

    def block_at(q):
        blk = _window_block(build(q), basis, window, n)
        return 0.5 * (blk + blk.conj().T) if real else blk

    block = block_at(level)
    change = 0.0
    if check:
        change = float(np.max(np.abs(block_at(level2) - block)))
        if change > tol:
            raise GridUnderresolved(
                f"entries moved by {change:.3g} between quadrature levels {level} and {level2}"
            )
    else:
        level2 = level
    return GridQuantization(block, level, level2, change)


def _is_real_symbol(A):
    if isinstance(A, PolySymbol):
        return A.is_real
    return True


# --------------------------------------------------------------------------
# semiclassical rescaling


@dataclass(frozen=True, eq=False)
class RescaledStates:
    """psi_j(y) = h^(-d/(2(k+1))) phi_j(h^(-1/(k+1)) y) in the dilated Hermite basis."""

    coefficients: np.ndarray
    sigma: float
    n_axis: int
    d: int

    def __call__(self, points):
        from .hermite_core import hermite_functions

        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        tabs = [
            hermite_functions(self.n_axis - 1, pts[:, i] / self.sigma) / np.sqrt(self.sigma)
            for i in range(self.d)
        ]
        C = self.coefficients
        if self.d == 1:
            return C.T @ tabs[0]
        n = self.n_axis
        C3 = C.reshape(n, n, -1)
        tmp = np.einsum("abj,bp->ajp", C3, tabs[1], optimize=True)
        return np.einsum("ajp,ap->jp", tmp, tabs[0], optimize=True)


def rescale_state(basis_coeffs, h, k, d, sigma=1.0, n_axis=None):
    """Evaluator for the rescaled states; the coefficients are unchanged.

    Dilating sigma^(-1/2) h_n(x / sigma) by eps = h^(1/(k+1)) gives the same
    function family with width eps * sigma, so the map is exactly unitary.
    """
    C = np.asarray(basis_coeffs)
    if C.ndim == 1:
        C = C[:, None]
    if n_axis is None:
        n_axis = int(round(C.shape[0] ** (1.0 / d)))
    return RescaledStates(C, sigma * h ** (1.0 / (k + 1)), n_axis, d)

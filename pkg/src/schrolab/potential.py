"""Confining elliptic polynomial potentials.

A potential is stored as a sparse list of monomials ``c * x^alpha`` plus a
constant shift. The top-degree part (``|alpha| = 2k``) must be positive on
the unit sphere, which is certified numerically on a direction grid.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import minimize

from .errors import NonElliptic


def _directions(d, n_dirs):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        t = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.column_stack([np.cos(t), np.sin(t)])
    # Fibonacci-style lattice mapped through the Gaussian is awkward beyond
    # d=3, so fall back to a fixed low-discrepancy Gaussian cloud.
    from scipy.stats import qmc
    from scipy.special import ndtri

    u = qmc.Sobol(d, scramble=True, seed=0).random_base2(int(np.ceil(np.log2(n_dirs))))
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _horner(terms, x, var):
    """Evaluate sum c * x^alpha by nesting in variable ``var`` then recursing."""
    if var < 0:
        total = sum(c for _, c in terms)
        return np.full(x.shape[0], float(total))
    groups = {}
    for alpha, c in terms:
        groups.setdefault(alpha[var], []).append((alpha, c))
    top = max(groups)
    xv = x[:, var]
    acc = np.zeros(x.shape[0])
    for p in range(top, -1, -1):
        acc = acc * xv
        if p in groups:
            acc = acc + _horner(groups[p], x, var - 1)
    return acc


@dataclass(frozen=True)
class PolynomialPotential:
    """V(x) = sum_alpha c_alpha x^alpha + shift on R^d, elliptic of degree 2k.

    ``k`` is inferred from the top degree. Construction fails for odd top
    degree and, unless ``check=False``, for a top part that is not positive
    on the unit sphere.
    """

    d: int
    monomials: tuple
    shift: float = 0.0
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        merged = {}
        for alpha, c in self.monomials:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.d or min(alpha) < 0:
                raise ValueError(f"bad multi-index {alpha} for d={self.d}")
            merged[alpha] = merged.get(alpha, 0.0) + float(c)
        terms = tuple(sorted((a, c) for a, c in merged.items() if c != 0.0))
        if not terms:
            raise ValueError("potential has no monomials")
        top = max(sum(a) for a, _ in terms)
        if top % 2 or top == 0:
            raise NonElliptic(f"top degree {top} is not a positive even number")
        object.__setattr__(self, "monomials", terms)
        object.__setattr__(self, "shift", float(self.shift))
        if self.check:
            ellipticity_margin(self)

    @property
    def k(self):
        return max(sum(a) for a, _ in self.monomials) // 2

    @property
    def top_part(self):
        """Monomials of degree exactly 2k."""
        return tuple((a, c) for a, c in self.monomials if sum(a) == 2 * self.k)

    def __call__(self, x):
        return eval_potential(self, x)

    def scaled(self, s):
        return PolynomialPotential(
            self.d, tuple((a, s * c) for a, c in self.monomials), s * self.shift
        )

    def rescaled(self, eps):
        """The potential y -> eps^(2k) V(y / eps)."""
        k2 = 2 * self.k
        return PolynomialPotential(
            self.d,
            tuple((a, c * eps ** (k2 - sum(a))) for a, c in self.monomials),
            self.shift * eps ** k2,
        )

    @property
    def is_harmonic(self):
        """True for exactly |x|^2 with no shift."""
        want = tuple(
            (tuple(2 if i == j else 0 for i in range(self.d)), 1.0)
            for j in range(self.d)
        )
        return self.shift == 0.0 and sorted(self.monomials) == sorted(want)

    def to_text(self):
        lines = [f"{self.d} {self.k} {self.shift.hex()}"]
        for alpha, c in self.monomials:
            lines.append(" ".join(str(a) for a in alpha) + " " + float(c).hex())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, check=True):
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        d, k = int(rows[0][0]), int(rows[0][1])
        shift = _parse_float(rows[0][2])
        terms = [(tuple(int(v) for v in r[:d]), _parse_float(r[d])) for r in rows[1:]]
        out = cls(d, tuple(terms), shift, check=check)
        if out.k != k:
            raise ValueError(f"header says k={k} but monomials have k={out.k}")
        return out


def _parse_float(s):
    try:
        return float(s)
    except ValueError:
        return float.fromhex(s)


def harmonic(d):
    return PolynomialPotential(
        d, tuple((tuple(2 if i == j else 0 for i in range(d)), 1.0) for j in range(d))
    )


def radial_power(d, k):
    """|x|^(2k) expanded into monomials."""
    terms = {}
    for parts in product(range(k + 1), repeat=d):
        if sum(parts) != k:
            continue
        coef = _multinomial(k, parts)
        terms[tuple(2 * p for p in parts)] = float(coef)
    return PolynomialPotential(d, tuple(terms.items()))


def _multinomial(n, parts):
    from math import factorial

    out = factorial(n)
    for p in parts:
        out //= factorial(p)
    return out


def eval_potential(V, x):
    """V at one point (shape (d,)) or many points (shape (n, d)); Horner by variable."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, V.d)
    vals = _horner(list(V.monomials), pts, V.d - 1) + V.shift
    return float(vals[0]) if single else vals


def eval_naive(V, x):
    """Plain monomial sum, kept as an independent check of :func:`eval_potential`."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, V.d)
    vals = np.full(pts.shape[0], V.shift)
    for alpha, c in V.monomials:
        vals = vals + c * np.prod(pts ** np.asarray(alpha), axis=1)
    return float(vals[0]) if single else vals


def top_part_values(V, x):
    pts = np.asarray(x, dtype=float).reshape(-1, V.d)
    return _horner(list(V.top_part), pts, V.d - 1)


def ellipticity_margin(V, n_dirs=None):
    """Minimum of the top-degree part over unit directions.

    Raises NonElliptic when the minimum is not positive.
    """
    if n_dirs is None:
        n_dirs = 720
    if n_dirs < 8 * V.d:
        raise ValueError("need at least 8*d directions")
    m = float(top_part_values(V, _directions(V.d, n_dirs)).min())
    # directions such as (cos(pi/2), 1) carry rounding noise of order 1e-16
    floor = 1e-10 * max(abs(c) for _, c in V.top_part)
    if not m > floor:
        raise NonElliptic(f"top-degree part has minimum {m} on the unit sphere")
    return m


def shift_nonnegative(V, grid_radius=None, grid_n=201):
    """Return V + c0 with c0 = max(0, -min V) over a tensor grid.

    The grid minimum is refined by a local minimization from the best grid
    point; the refined value is used only if it is lower.
    """
    if grid_radius is None:
        grid_radius = 2.0 * (1.0 + _coefficient_radius(V))
    axis = np.linspace(-grid_radius, grid_radius, grid_n)
    pts = np.stack(np.meshgrid(*([axis] * V.d), indexing="ij"), -1).reshape(-1, V.d)
    vals = eval_potential(V, pts)
    i = int(np.argmin(vals))
    vmin = float(vals[i])
    res = minimize(
        lambda z: eval_potential(V, z), pts[i], method="BFGS", options={"gtol": 1e-13}
    )
    if res.success or np.isfinite(res.fun):
        vmin = min(vmin, float(res.fun))
    scale = max(1.0, max(abs(c) for _, c in V.monomials))
    c0 = -vmin if -vmin > 1e-12 * scale else 0.0
    if c0 == 0.0:
        return V
    return PolynomialPotential(V.d, V.monomials, V.shift + c0)


def _coefficient_radius(V):
    """Cauchy-type radius beyond which the top part dominates."""
    m = ellipticity_margin(V)
    low = sum(abs(c) for a, c in V.monomials if sum(a) < 2 * V.k)
    return (low / m) ** (1.0 / max(1, 2 * V.k - 1)) if low else 0.0

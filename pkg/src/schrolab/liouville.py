"""Averages of phase-space observables over energy shells.

The normalized measure on {H0 = eta} with density 1/|grad H0| is, by the
co-area formula, the limit of the uniform measure on the thin shell
{|H0 - eta| < eps}. ``liouville_mc`` samples that shell by rejection from a
bounding box; ``liouville_sphere`` handles H0 = |x|^2 + |xi|^2, whose shell is
a round sphere carrying the uniform measure.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm, qmc

from .errors import RejectionStarved
from .potential import ellipticity_margin
from .quantization import PolySymbol, RadialRatioSymbol, hamiltonian_symbol

DEFAULT_BATCH = 1 << 16


def make_rng(seed):
    """Counter-based generator seeded from a SeedSequence (or integer)."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seq))


def poly_gradient(H, x, xi):
    """(d/dx H, d/dxi H) for a PolySymbol, each of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    d = H.d
    gx = np.zeros(x.shape)
    gxi = np.zeros(xi.shape)
    for (alpha, beta), c in H.terms:
        c = float(np.real(c))
        for i in range(d):
            if alpha[i]:
                a = list(alpha)
                a[i] -= 1
                gx[..., i] += c * alpha[i] * _monomial(x, xi, a, beta)
            if beta[i]:
                b = list(beta)
                b[i] -= 1
                gxi[..., i] += c * beta[i] * _monomial(x, xi, alpha, b)
    return gx, gxi


def _monomial(x, xi, alpha, beta):
    out = np.ones(x.shape[:-1])
    for i, (a, b) in enumerate(zip(alpha, beta)):
        if a:
            out = out * x[..., i] ** a
        if b:
            out = out * xi[..., i] ** b
    return out


@dataclass(frozen=True)
class EnergySurfaceSpec:
    """Energy shell of a classical Hamiltonian H0 = c |xi|^2 + V0(x).

    ``half_kinetic`` records whether c = 1/2 (otherwise c = 1). ``shell`` is
    the half-width of the sampling shell; it defaults to 0.01 eta.
    """

    hamiltonian: PolySymbol
    eta: float
    shell: float = None
    half_kinetic: bool = False
    x_radius: float = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("energy level must be positive")
        if self.shell is None:
            object.__setattr__(self, "shell", 0.01 * self.eta)
        if not 0 < self.shell < self.eta:
            raise ValueError("shell half-width must lie in (0, eta)")
        if self.x_radius is None:
            raise ValueError("x_radius is required; build specs with energy_surface()")

    @property
    def d(self):
        return self.hamiltonian.d

    @property
    def xi_radius(self):
        top = self.eta + self.shell
        return float(np.sqrt(2.0 * top if self.half_kinetic else top))

    def digest(self):
        text = f"{self.hamiltonian.to_text()}|{self.eta!r}|{self.shell!r}|{self.half_kinetic}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _x_radius(V, level, top_only=True):
    """Radius beyond which V(x) > level, from the top-part margin and term sizes."""
    m = ellipticity_margin(V)
    k = V.k
    low = np.zeros(2 * k)
    if not top_only:
        for alpha, c in V.monomials:
            deg = sum(alpha)
            if deg < 2 * k:
                low[deg] += abs(c)
        low[0] += abs(V.shift)
    r = 1.0
    while m * r ** (2 * k) - sum(low[j] * r ** j for j in range(2 * k)) <= level:
        r *= 1.1
    return r


def energy_surface(V, eta, shell=None, half_kinetic=False, top_only=True):
    """Shell spec for H0 = |xi|^2 + V0 (or |xi|^2/2 + V0) built from a potential.

    With ``top_only`` the homogeneous top part of V is used as V0.
    """
    H0 = hamiltonian_symbol(V, half_kinetic=half_kinetic, top_only=top_only)
    level = eta + (0.01 * eta if shell is None else shell)
    return EnergySurfaceSpec(H0, float(eta), shell, half_kinetic, _x_radius(V, level, top_only))


@dataclass(frozen=True)
class LiouvilleEstimate:
    estimate: float
    se: float
    n: int
    seed: object
    spec_hash: str = ""
    acceptance: float = 1.0

    def to_record(self):
        return {
            "estimate": self.estimate,
            "se": self.se,
            "n": self.n,
            "seed": self.seed,
            "spec_hash": self.spec_hash,
        }


def _split(z, d):
    return z[:, :d], z[:, d:]


def shell_samples(spec, n_samples, seed, batch=DEFAULT_BATCH):
    """Uniform points of {|H0 - eta| < shell} as an (n, 2d) array (x then xi)."""
    d = spec.d
    lo = np.concatenate([np.full(d, -spec.x_radius), np.full(d, -spec.xi_radius)])
    hi = -lo
    root = np.random.SeedSequence(seed)
    out = []
    count = 0
    tried = 0
    while count < n_samples:
        rng = make_rng(root.spawn(1)[0])
        z = rng.uniform(lo, hi, size=(batch, 2 * d))
        x, xi = _split(z, d)
        H = np.real(spec.hamiltonian(x, xi))
        keep = z[np.abs(H - spec.eta) < spec.shell]
        tried += batch
        out.append(keep)
        count += keep.shape[0]
        if tried >= 4 * batch and count / tried < 1e-4:
            raise RejectionStarved(f"acceptance rate {count / tried:.2e} below 1e-4")
    pts = np.concatenate(out)[:n_samples]
    return pts, count / tried


def check_noncritical(spec, points, floor=1e-3):
    """Minimum of |grad H0| over the given shell points; raises if below ``floor``."""
    x, xi = _split(points, spec.d)
    gx, gxi = poly_gradient(spec.hamiltonian, x, xi)
    g = np.sqrt(np.sum(gx * gx, axis=1) + np.sum(gxi * gxi, axis=1))
    low = float(g.min()) if g.size else np.inf
    if low < floor:
        raise ValueError(f"energy level is critical: |grad H0| reaches {low:.3g}")
    return low


def liouville_mc(spec, A, n_samples, seed, batch=DEFAULT_BATCH):
    """Thin-shell Monte Carlo estimate of the Liouville average of A.

    Returns the sample mean over n_samples accepted shell points and its
    Monte Carlo standard error.
    """
    pts, rate = shell_samples(spec, n_samples, seed, batch)
    check_noncritical(spec, pts[: min(len(pts), 4096)])
    x, xi = _split(pts, spec.d)
    vals = np.real(np.asarray(A(x, xi), dtype=complex if isinstance(A, PolySymbol) else float))
    vals = np.broadcast_to(vals, (n_samples,))
    est = float(np.sum(vals) / n_samples)
    se = float(np.std(vals, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return LiouvilleEstimate(est, se, int(n_samples), seed, spec.digest(), rate)


def sphere_moment(gamma):
    """E[prod z_i^gamma_i] for z uniform on the unit sphere of R^len(gamma)."""
    gamma = np.asarray(gamma, dtype=int)
    if np.any(gamma % 2):
        return 0.0
    n = gamma.size
    s = gamma.sum()
    logv = gammaln(n / 2.0) - gammaln((n + s) / 2.0)
    logv += np.sum(gammaln((gamma + 1) / 2.0)) - n * gammaln(0.5)
    return float(np.exp(logv))


def _sphere_poly_average(A, eta):
    total = 0.0 + 0.0j
    for (alpha, beta), c in A.terms:
        gamma = tuple(alpha) + tuple(beta)
        total += c * eta ** (sum(gamma) / 2.0) * sphere_moment(gamma)
    return total


def liouville_sphere_exact(d, eta, A):
    """Closed-form average over the sphere |z|^2 = eta for polynomial-ratio symbols.

    Valid for PolySymbol, and for RadialRatioSymbol when the sphere lies
    outside the cutoff region (sqrt(eta) >= 2 eps).
    """
    if isinstance(A, PolySymbol):
        return float(np.real(_sphere_poly_average(A, eta)))
    if isinstance(A, RadialRatioSymbol):
        if np.sqrt(eta) < 2 * A.eps:
            raise ValueError("sphere meets the cutoff region")
        return float(np.real(_sphere_poly_average(A.numerator, eta)) / eta ** A.power)
    raise TypeError("exact sphere average needs a polynomial or ratio symbol")


def sphere_samples(d, eta, n_samples, seed, qmc_points=False):
    """Points uniform on the sphere |x|^2 + |xi|^2 = eta in R^(2d)."""
    if qmc_points:
        sob = qmc.Sobol(2 * d, scramble=True, seed=make_rng(seed))
        u = sob.random_base2(int(np.ceil(np.log2(max(n_samples, 1)))))[:n_samples]
        g = norm.ppf(np.clip(u, 1e-300, 1 - 1e-16))
    else:
        g = make_rng(seed).standard_normal((n_samples, 2 * d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.sqrt(eta) * g


def liouville_sphere(d, eta, A, n_samples=100_000, seed=0, method="mc", replicates=8):
    """Average of A on the harmonic shell |x|^2 + |xi|^2 = eta.

    ``method`` is "mc" (Gaussian directions), "qmc" (scrambled Sobol
    directions; the standard error comes from ``replicates`` independent
    scramblings) or "exact" (closed form, see :func:`liouville_sphere_exact`).
    """
    if method == "exact":
        return LiouvilleEstimate(liouville_sphere_exact(d, eta, A), 0.0, 0, None)
    if method == "mc":
        z = sphere_samples(d, eta, n_samples, seed)
        vals = np.broadcast_to(np.real(A(z[:, :d], z[:, d:])), (n_samples,))
        est = float(np.sum(vals) / n_samples)
        se = float(np.std(vals, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
        return LiouvilleEstimate(est, se, n_samples, seed)
    if method == "qmc":
        children = np.random.SeedSequence(seed).spawn(replicates)
        per = 1 << max(0, int(np.round(np.log2(max(1, n_samples // replicates)))))
        means = []
        for child in children:
            z = sphere_samples(d, eta, per, child, qmc_points=True)
            vals = np.broadcast_to(np.real(A(z[:, :d], z[:, d:])), (per,))
            means.append(np.sum(vals) / per)
        means = np.asarray(means)
        se = float(np.std(means, ddof=1) / np.sqrt(replicates)) if replicates > 1 else float("nan")
        return LiouvilleEstimate(float(means.mean()), se, per * replicates, seed)
    raise ValueError(f"unknown method {method!r}")

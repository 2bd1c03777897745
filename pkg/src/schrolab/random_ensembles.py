"""Random unit vectors in a spectral window and Haar-random bases."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientTail, ProfileViolation
from .liouville import make_rng

FAMILIES = ("complex-gaussian", "real-gaussian", "rademacher", "uniform-disk")
ROW_BATCH = 256


@dataclass(frozen=True)
class DistributionSpec:
    """Centred coefficient law with unit second moment."""

    family: str = "complex-gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")

    @property
    def is_complex(self):
        return self.family in ("complex-gaussian", "uniform-disk")

    def draw(self, rng, shape):
        if self.family == "complex-gaussian":
            z = rng.standard_normal(shape + (2,))
            return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
        if self.family == "real-gaussian":
            return rng.standard_normal(shape)
        if self.family == "rademacher":
            return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
        # uniform on the disk of radius sqrt(2): E|X|^2 = R^2 / 2 = 1
        r = np.sqrt(2.0 * rng.uniform(size=shape))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=shape)
        return r * np.exp(1j * phi)


@dataclass(frozen=True, eq=False)
class CoefficientProfile:
    """Weights gamma_j on the window with the flatness constants K0 (and K1).

    The upper condition |gamma_n|^2 <= (K0/N) sum |gamma_j|^2 is always
    checked; with ``two_sided`` the lower one with K1 is checked too.
    """

    values: np.ndarray
    K0: float = 1.0
    K1: float = None
    kind: str = "custom"
    two_sided: bool = False

    def __post_init__(self):
        g2 = np.abs(np.asarray(self.values, dtype=complex)) ** 2
        N = g2.size
        if N == 0:
            raise ProfileViolation("empty profile")
        total = g2.sum()
        if total <= 0:
            raise ProfileViolation("profile is identically zero")
        worst = g2.max() * N / total
        if worst > self.K0 * (1 + 1e-12):
            raise ProfileViolation(f"max |gamma|^2 N / sum = {worst:.4g} exceeds K0 = {self.K0}")
        if self.two_sided:
            if self.K1 is None:
                raise ProfileViolation("two-sided profile needs K1")
            least = g2.min() * N / total
            if least < self.K1 * (1 - 1e-12):
                raise ProfileViolation(f"min |gamma|^2 N / sum = {least:.4g} below K1 = {self.K1}")

    @classmethod
    def isotropic(cls, N):
        return cls(np.full(N, 1.0 / np.sqrt(N)), 1.0, 1.0, "isotropic", True)

    @property
    def N(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class EnsembleSample:
    """M unit-norm rows of window coefficients with their provenance."""

    window: object
    coefficients: np.ndarray
    seed: object
    distribution: DistributionSpec
    profile: CoefficientProfile
    meta: dict = field(default_factory=dict)

    @property
    def M(self):
        return self.coefficients.shape[0]

    def digest(self):
        h = hashlib.sha256()
        h.update(repr((self.seed, self.distribution.family, self.profile.kind)).encode())
        h.update(np.ascontiguousarray(self.profile.values).tobytes())
        h.update(np.ascontiguousarray(self.coefficients).tobytes())
        return h.hexdigest()[:16]

    def save(self, path):
        np.savez(
            path,
            coefficients=self.coefficients,
            gamma=np.asarray(self.profile.values),
            seed=np.asarray(repr(self.seed)),
            family=np.asarray(self.distribution.family),
        )

    def to_csv(self, path):
        C = self.coefficients
        cols = []
        for j in range(C.shape[1]):
            cols += [f"re_{j}", f"im_{j}"]
        data = np.empty((C.shape[0], 2 * C.shape[1]))
        data[:, 0::2] = C.real
        data[:, 1::2] = np.imag(C)
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def sample_states(window, profile, dist, M, seed):
    """M random unit vectors (gamma_j X_j)_j / norm in the window's coefficient space.

    Rows are drawn in fixed-size batches from spawned child seeds, so the
    result depends only on (seed, M).
    """
    N = window.N_h if window is not None else profile.N
    if profile.N != N:
        raise ProfileViolation(f"profile has {profile.N} weights, window has {N} states")
    gamma = np.asarray(profile.values)
    dtype = complex if (dist.is_complex or np.iscomplexobj(gamma)) else float
    out = np.empty((M, N), dtype=dtype)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for start in range(0, M, ROW_BATCH):
        rng = make_rng(root.spawn(1)[0])
        rows = min(ROW_BATCH, M - start)
        block = gamma * dist.draw(rng, (rows, N))
        norms = np.linalg.norm(block, axis=1)
        for i in np.flatnonzero(norms == 0):
            while norms[i] == 0:
                block[i] = gamma * dist.draw(rng, (N,))
                norms[i] = np.linalg.norm(block[i])
        out[start:start + rows] = block / norms[:, None]
    return EnsembleSample(window, out, seed, dist, profile)


def haar_basis(N, seed):
    """Haar-distributed N x N unitary (QR of a complex Gaussian, phases fixed)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    Z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    diag = np.diagonal(R)
    return Q * (diag / np.abs(diag))


@dataclass(frozen=True, eq=False)
class TailFit:
    """Least-squares fit log S(r) = intercept + slope * r^2."""

    slope: float
    intercept: float
    r_squared: float
    r: np.ndarray
    survival: np.ndarray
    exceedances: np.ndarray


def gaussian_tail_check(samples, r_grid=None, scale=1.0, min_samples=2000, min_count=20):
    """Fit the Gaussian tail exponent of |F - mean F|.

    ``scale`` multiplies deviations before thresholding (for example
    sqrt(N_h) to test tails in N_h r^2). Without ``r_grid`` the thresholds
    run from the median deviation to the level still exceeded by
    ``min_count`` samples. Grid points with fewer exceedances are dropped.
    """
    F = np.asarray(samples)
    if F.size < min_samples:
        raise InsufficientTail(f"need at least {min_samples} samples, got {F.size}")
    dev = np.abs(F - F.mean()) * scale
    srt = np.sort(dev)
    n = srt.size
    if r_grid is None:
        lo = srt[n // 2]
        hi = srt[n - min_count]
        if not hi > lo:
            raise InsufficientTail("statistic has no spread")
        r_grid = np.linspace(lo, hi, 12)
    r_grid = np.asarray(r_grid, dtype=float)
    counts = n - np.searchsorted(srt, r_grid, side="left")
    if counts[0] < min_count:
        raise InsufficientTail(f"only {counts[0]} exceedances at r = {r_grid[0]:.3g}")
    keep = counts >= min_count
    r = r_grid[keep]
    S = counts[keep] / n
    if r.size < 2:
        raise InsufficientTail("fewer than two usable thresholds")
    X = r * r
    slope, intercept = np.polyfit(X, np.log(S), 1)
    fit = intercept + slope * X
    resid = np.log(S) - fit
    ss_tot = np.sum((np.log(S) - np.log(S).mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return TailFit(float(slope), float(intercept), float(r2), r, S, counts[keep])

"""Verification harnesses that turn the library into statistics tables.

Each harness returns an :class:`ExperimentReport`: a config snapshot, one
row per (h, parameter) cell carrying its sample count and seed, and a list
of pass/fail criteria computed from those rows. Since the asymptotic
statements being probed only assert the existence of constants, every
criterion is a stability, slope or trend check with a declared tolerance.
"""

import functools
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .random_ensembles import (
    CoefficientProfile,
    DistributionSpec,
    gaussian_tail_check,
    haar_basis,
    sample_states,
)
from .errors import InsufficientTail
from .liouville import liouville_sphere_exact, make_rng
from .potential import radial_power
from .quantization import (
    PolySymbol,
    RadialRatioSymbol,
    moyal_product,
    poly_window_matrix,
    weyl_quantize_grid,
    weyl_quantize_poly,
)
from .spectral_windows import (
    beta,
    heat_diag,
    kinetic_form,
    make_window,
    no_smoothing_ratios,
    quadrature_grid,
    sup_grid,
    synthesize,
    weighted_lr_norms,
    weighted_sup_norms,
    weyl_count,
    weyl_slope,
    window_kernel_on_grid,
    write_csv,
)


# --------------------------------------------------------------------------
# report plumbing


@dataclass
class Criterion:
    name: str
    value: float
    target: str
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "target": self.target,
                "passed": bool(self.passed)}


@dataclass
class ExperimentReport:
    """Rows of statistics plus the criteria derived from them."""

    experiment: str
    config: dict
    rows: list = field(default_factory=list)
    criteria: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.criteria)

    def check(self, name, value, target, passed):
        self.criteria.append(Criterion(name, _clean(value), target, bool(passed)))

    def columns(self):
        cols = set()
        for row in self.rows:
            cols.update(row)
        return sorted(cols)

    def to_dict(self):
        """Everything except wall time, so equal inputs give equal output."""
        return _clean({
            "experiment": self.experiment,
            "config": self.config,
            "rows": self.rows,
            "criteria": [c.to_dict() for c in self.criteria],
            "seeds": self.seeds,
            "notes": self.notes,
            "passed": self.passed,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self, path=None):
        cols = self.columns()
        rows = [{c: _csv_value(r.get(c, "")) for c in cols} for r in self.rows]
        return write_csv(rows, cols, f"{self.experiment}: one row per cell; columns {', '.join(cols)}",
                         path)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _csv_value(v):
    return "" if v is None else v


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        report = fn(*args, **kwargs)
        report.wall_time = time.perf_counter() - t0
        return report
    return wrapper


def _tag(key):
    return int.from_bytes(hashlib.sha256(str(key).encode()).digest()[:4], "little")


def derive_seed(seed, *keys):
    """Child SeedSequence for a named cell; independent of evaluation order."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_tag(k) for k in keys))


def seed_label(seed, *keys):
    return ":".join([str(int(seed))] + [str(k) for k in keys])


def _quantiles(x, qs):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return [float("nan")] * len(qs)
    return [float(v) for v in np.quantile(x, qs)]


def _median(x):
    x = np.asarray(x, dtype=float)
    return float(np.median(x)) if x.size else float("nan")


def _loglog_slope(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)
    return float(slope), float(icpt)


def _spread(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0 or np.any(v <= 0):
        return float("nan")
    return float(v.max() / v.min())


def _hlabel(h):
    return f"{h:.6g}"


def _isotropic_states(window, M, seed, family):
    if M == 0:
        return np.zeros((0, window.N_h), dtype=complex)
    prof = CoefficientProfile.isotropic(window.N_h)
    return sample_states(window, prof, DistributionSpec(family), M, seed).coefficients


# --------------------------------------------------------------------------
# spectrum and counting


def harmonic_levels(d, count):
    """Sorted eigenvalues 2|n| + d of -Laplacian + |x|^2, first ``count`` of them."""
    out = []
    j = 0
    while len(out) < count:
        out += [2.0 * j + d] * math.comb(j + d - 1, d - 1)
        j += 1
    return np.array(out[:count])


@_timed
def spectrum_report(basis, count=100, reference=None, tol=1e-8):
    """First ``count`` trusted eigenvalues, optionally against a reference list.

    ``reference="harmonic"`` compares with 2|n| + d and checks multiplicities
    of every level that fits entirely in the first ``count`` values.
    """
    requested = count
    count = min(count, basis.trust_count)
    lam = basis.eigenvalues[:count]
    cfg = {"count": requested, "n_axis": basis.n_axis, "h": basis.h,
           "potential": basis.potential.to_text(), "reference": reference}
    rep = ExperimentReport("spectrum", cfg)
    rep.check("trusted levels available", count, f">= {requested}", count >= requested)
    ref = None
    if reference == "harmonic":
        ref = harmonic_levels(basis.d, count)
    elif reference is not None:
        ref = np.asarray(reference, dtype=float)[:count]
    for i, v in enumerate(lam):
        row = {"index": i, "eigenvalue": float(v),
               "normalized": float(basis.normalized_energies[i])}
        if ref is not None:
            row["reference"] = float(ref[i])
            row["abs_error"] = float(abs(v - ref[i]))
        rep.rows.append(row)
    if ref is not None:
        err = float(np.max(np.abs(lam - ref))) if count else 0.0
        rep.check("max eigenvalue error", err, f"<= {tol:g}", err <= tol)
    if reference == "harmonic":
        levels = np.rint((lam - basis.d) / 2.0).astype(int)
        ok = True
        top = levels[-1] if count else -1
        for j in range(top):
            want = math.comb(j + basis.d - 1, basis.d - 1)
            ok &= int(np.count_nonzero(levels == j)) == want
        rep.check("complete-level multiplicities", int(top), "C(j+d-1, d-1) for every complete level", ok)
    return rep


@_timed
def weyl_law(basis, lam_lo, lam_hi, n_points=30, n_rows=8, tol=0.1):
    """Counting-function slope over [lam_lo, lam_hi] against d(k+1)/(2k)."""
    d, k = basis.d, basis.k
    target = d * (k + 1) / (2.0 * k)
    cfg = {"lam_lo": lam_lo, "lam_hi": lam_hi, "n_points": n_points,
           "potential": basis.potential.to_text(), "n_axis": basis.n_axis}
    rep = ExperimentReport("weyl_law", cfg)
    for lam in np.geomspace(lam_lo, lam_hi, n_rows):
        count, vol = weyl_count(basis, lam)
        rep.rows.append({"lambda": float(lam), "count": count, "phase_volume": vol,
                         "count_over_volume": count / vol if vol > 0 else float("nan")})
    slope = weyl_slope(basis, lam_lo, lam_hi, n_points)
    rep.rows.append({"lambda": None, "count": None, "fitted_slope": slope, "target_slope": target})
    rep.check("log-count slope", slope, f"{target:g} +/- {tol:g}", abs(slope - target) <= tol)
    return rep


# --------------------------------------------------------------------------
# window kernel and spectral-function checks


def _kernel_integrals(basis, window, ps, thetas, ppw=8.0):
    """(int <x>^(k theta (p-1)) e^p dx)^(1/p) for each (p, theta)."""
    out = {}
    gq = quadrature_grid(basis)
    e_q = window_kernel_on_grid(basis, window, gq.axes)
    total = float(np.sum(gq.weights() * e_q))
    grid = None
    for p in ps:
        for th in thetas:
            if p == 1:
                out[(p, th)] = total
                continue
            if grid is None:
                grid = sup_grid(basis, window, points_per_wavelength=ppw)
                e_u = window_kernel_on_grid(basis, window, grid.axes)
                br = grid.bracket()
                w = grid.weights()
            val = np.sum(w * br ** (basis.k * th * (p - 1)) * e_u ** p)
            out[(p, th)] = float(val ** (1.0 / p))
    return out


@_timed
def spectral_function_check(basis, hs, a=1.0, b=1.5, thetas=None, ppw=8.0, spread_tol=3.0):
    """Window kernel e_{x,h}: mass N_h and the weighted sup constant across h.

    The sup constant is sup <x>^(k theta) e_{x,h} / (N_h h^((d - k theta)/(k+1))),
    the square of the deterministic Sobolev ceiling.
    """
    d, k = basis.d, basis.k
    thetas = [0.0, d / k] if thetas is None else list(thetas)
    cfg = {"hs": list(hs), "a": a, "b": b, "thetas": thetas, "ppw": ppw,
           "potential": basis.potential.to_text(), "n_axis": basis.n_axis}
    rep = ExperimentReport("spectral_function", cfg)
    worst_mass = 0.0
    consts = {th: [] for th in thetas}
    for h in hs:
        win = make_window(basis, h, a, b)
        gq = quadrature_grid(basis)
        mass = float(np.sum(gq.weights() * window_kernel_on_grid(basis, win, gq.axes)))
        worst_mass = max(worst_mass, abs(mass - win.N_h) / win.N_h)
        grid = sup_grid(basis, win, points_per_wavelength=ppw)
        e = window_kernel_on_grid(basis, win, grid.axes)
        br = grid.bracket()
        for th in thetas:
            sup = float(np.max(br ** (k * th) * e))
            c = sup / (win.N_h * h ** ((d - k * th) / (k + 1.0)))
            consts[th].append(c)
            rep.rows.append({"h": h, "N_h": win.N_h, "theta": th, "mass": mass,
                             "weighted_sup": sup, "sup_constant": c})
    rep.check("int e_{x,h} dx = N_h (relative)", worst_mass, "<= 1e-10", worst_mass <= 1e-10)
    for th in thetas:
        sp = _spread(consts[th])
        rep.check(f"sup constant spread, theta={th:g}", sp, f"< {spread_tol:g}", sp < spread_tol)
    return rep


@_timed
def two_sided_integrals(basis, hs, ps=(1, 2, 4), thetas=None, a=1.0, b=1.5, ppw=8.0,
                        spread_tol=25.0, exact_tol=1e-10):
    """Normalized window-kernel integrals and their stability across h.

    ratio = (int <x>^(k theta (p-1)) e^p)^(1/p) / (N_h h^beta), with
    beta = ((d - k theta)/(k+1)) (1 - 1/p). The p=1 integrals use the exact
    Gauss-Hermite rule, the others a uniform trapezoid grid.
    """
    d, k = basis.d, basis.k
    thetas = [0.0, d / k] if thetas is None else list(thetas)
    cfg = {"hs": list(hs), "ps": list(ps), "thetas": thetas, "a": a, "b": b, "ppw": ppw,
           "potential": basis.potential.to_text(), "n_axis": basis.n_axis}
    rep = ExperimentReport("two_sided_integrals", cfg)
    ratios = []
    exact_err = 0.0
    for h in hs:
        win = make_window(basis, h, a, b)
        vals = _kernel_integrals(basis, win, ps, thetas, ppw)
        for (p, th), v in sorted(vals.items()):
            bexp = beta(2 * p, th, d, k)
            ratio = v / (win.N_h * h ** bexp)
            ratios.append(ratio)
            if p == 1:
                exact_err = max(exact_err, abs(ratio - 1.0))
            rep.rows.append({"h": h, "N_h": win.N_h, "p": p, "theta": th, "beta": bexp,
                             "integral": v, "ratio": ratio})
    rep.check("p=1 ratio equals 1", exact_err, f"<= {exact_tol:g}", exact_err <= exact_tol)
    sp = _spread(ratios)
    rep.check("ratio spread over all cells", sp, f"<= {spread_tol:g}", sp <= spread_tol)
    for p in ps:
        for th in thetas:
            cell = [r["ratio"] for r in rep.rows if r["p"] == p and r["theta"] == th]
            rep.rows.append({"p": p, "theta": th, "spread_over_h": _spread(cell)})
    return rep


@_timed
def window_uniformity(basis, lams, C0=0.25, delta=0.0, thetas=None, ppw=8.0, spread_tol=5.0):
    """Weighted sup of pi(lam + mu) - pi(lam) with mu = C0 lam^(1 - delta).

    Energies are normalized. The difference is the window kernel of
    [lam, lam + mu) and is divided by lam^(k (d + theta)/(k+1) - delta),
    the growth allowed for it. ``mu = 0`` (C0 = 0) gives an empty sum.
    """
    d, k = basis.d, basis.k
    thetas = [0.0, d / k] if thetas is None else list(thetas)
    cfg = {"lams": list(lams), "C0": C0, "delta": delta, "thetas": thetas, "ppw": ppw,
           "potential": basis.potential.to_text(), "n_axis": basis.n_axis}
    rep = ExperimentReport("window_uniformity", cfg)
    norm = {th: [] for th in thetas}
    for lam in lams:
        mu = C0 * lam ** (1.0 - delta)
        for th in thetas:
            if mu == 0:
                rep.rows.append({"lambda": lam, "mu": 0.0, "theta": th, "count": 0,
                                 "weighted_sup": 0.0, "normalized": 0.0})
                norm[th].append(0.0)
                continue
            h = 1.0 / lam
            win = make_window(basis, h, 1.0, 1.0 + mu / lam)
            grid = sup_grid(basis, win, points_per_wavelength=ppw)
            e = window_kernel_on_grid(basis, win, grid.axes)
            sup = float(np.max(grid.bracket() ** (k * th) * e))
            scale = lam ** (k * (d + th) / (k + 1.0) - delta)
            norm[th].append(sup / scale)
            rep.rows.append({"lambda": lam, "mu": mu, "theta": th, "count": win.N_h,
                             "weighted_sup": sup, "normalized": sup / scale})
    for th in thetas:
        if C0 == 0:
            mx = max(norm[th]) if norm[th] else 0.0
            rep.check(f"mu=0 gives zero, theta={th:g}", mx, "== 0", mx == 0.0)
        else:
            sp = _spread(norm[th])
            rep.check(f"normalized sup spread, theta={th:g}", sp, f"< {spread_tol:g}",
                      sp < spread_tol)
    return rep


# --------------------------------------------------------------------------
# random-state Sobolev laws


@_timed
def sobolev_scan(basis, hs, a=1.0, b=1.5, thetas=None, M=1000, seed=0,
                 family="complex-gaussian", ppw=4.0, spread_tol=3.0, outside_tol=0.01,
                 ceiling_samples=32):
    """Weighted sup norms of random unit states across an h ladder.

    For each (h, theta) the statistic is
    h^(-(d - k theta)/(2(k+1))) sup <x>^(k theta / 2) |u|, reported through its
    median and (5, 95) quantiles, its ratio to |log h|^(1/2), and the
    fraction of samples outside [median/3, 3 median]. The pointwise ceiling
    |u(x)|^2 <= e_{x,h} is verified on the grid for the first samples.
    """
    d, k = basis.d, basis.k
    thetas = [d / k] if thetas is None else list(thetas)
    cfg = {"hs": list(hs), "a": a, "b": b, "thetas": thetas, "M": M, "seed": seed,
           "family": family, "ppw": ppw, "potential": basis.potential.to_text(),
           "n_axis": basis.n_axis}
    rep = ExperimentReport("sobolev_scan", cfg)
    if M == 0:
        rep.notes.append("M = 0: no samples drawn")
        return rep
    ratios = {th: [] for th in thetas}
    worst_outside = 0.0
    worst_ceiling = 0.0
    for h in hs:
        win = make_window(basis, h, a, b)
        key = ("sobolev", _hlabel(h))
        rep.seeds[_hlabel(h)] = seed_label(seed, *key)
        C = _isotropic_states(win, M, derive_seed(seed, *key), family)
        grid = sup_grid(basis, win, points_per_wavelength=ppw)
        for th in thetas:
            sups = weighted_sup_norms(basis, win, C, k * th / 2.0, grid)
            stat = sups * h ** ((d - k * th) / (2.0 * (k + 1)))
            med = _median(stat)
            q05, q95 = _quantiles(stat, [0.05, 0.95])
            outside = float(np.mean((stat < med / 3) | (stat > 3 * med)))
            worst_outside = max(worst_outside, outside)
            ratio = med / math.sqrt(abs(math.log(h)))
            ratios[th].append(ratio)
            rep.rows.append({"h": h, "N_h": win.N_h, "theta": th, "n": M,
                             "seed": rep.seeds[_hlabel(h)], "median": med, "q05": q05,
                             "q95": q95, "median_over_sqrt_log": ratio,
                             "fraction_outside": outside})
        m = min(ceiling_samples, M)
        vals = np.abs(synthesize(basis, win, C[:m], grid)) ** 2
        e = window_kernel_on_grid(basis, win, grid.axes)
        worst_ceiling = max(worst_ceiling, float(np.max(vals / np.maximum(e, 1e-300))))
    for th in thetas:
        sp = _spread(ratios[th])
        rep.check(f"median / sqrt|log h| spread, theta={th:g}", sp, f"< {spread_tol:g}",
                  sp < spread_tol)
    rep.check("fraction outside [median/3, 3 median]", worst_outside, f"< {outside_tol:g}",
              worst_outside < outside_tol)
    rep.check("pointwise ceiling |u|^2 <= e_{x,h}", worst_ceiling, "<= 1 + 1e-9",
              worst_ceiling <= 1 + 1e-9)
    return rep


@_timed
def lr_scan(basis, h, rs=(2, 4, 8, 16), M=1000, a=1.0, b=1.5, seed=0,
            family="complex-gaussian", ppw=6.0, exponent=0.5, exponent_tol=0.15):
    """Medians of weighted L^r norms with weight <x>^((d/k)(r/2 - 1)) against sqrt(r)."""
    d, k = basis.d, basis.k
    cfg = {"h": h, "rs": list(rs), "M": M, "a": a, "b": b, "seed": seed, "family": family,
           "ppw": ppw, "potential": basis.potential.to_text(), "n_axis": basis.n_axis}
    rep = ExperimentReport("lr_scan", cfg)
    win = make_window(basis, h, a, b)
    key = ("lr", _hlabel(h))
    rep.seeds[_hlabel(h)] = seed_label(seed, *key)
    if M == 0:
        rep.notes.append("M = 0: no samples drawn")
        return rep
    if M == 1:
        rep.notes.append("M = 1: quantiles undefined")
    C = _isotropic_states(win, M, derive_seed(seed, *key), family)
    grid = sup_grid(basis, win, points_per_wavelength=ppw)
    meds = []
    for r in rs:
        norms = weighted_lr_norms(basis, win, C, r, (d / k) * (r / 2.0 - 1.0), grid)
        med = _median(norms)
        q25, q75 = _quantiles(norms, [0.25, 0.75])
        meds.append(med)
        rep.rows.append({"h": h, "N_h": win.N_h, "r": r, "n": M, "seed": rep.seeds[_hlabel(h)],
                         "median": med, "mean": float(np.mean(norms)), "q25": q25, "q75": q75,
                         "iqr_over_median": (q75 - q25) / med,
                         "median_over_sqrt_r": med / math.sqrt(r)})
    slope, icpt = _loglog_slope(rs, meds)
    rep.rows.append({"h": h, "fitted_exponent": slope, "fitted_constant": math.exp(icpt)
                     if math.isfinite(icpt) else None})
    rep.check("fitted exponent of median vs r", slope, f"{exponent:g} +/- {exponent_tol:g}",
              abs(slope - exponent) <= exponent_tol)
    if 2 in rs and M > 1:
        row = next(r for r in rep.rows if r.get("r") == 2)
        if win.N_h >= 50:
            rep.check("r=2 IQR/median", row["iqr_over_median"], "< 0.1",
                      row["iqr_over_median"] < 0.1)
        if 8 in rs:
            q = meds[list(rs).index(8)] / meds[list(rs).index(2)]
            rep.check("median(8)/median(2)", q, "2 +/- 40%", 1.2 <= q <= 2.8)
    return rep


# --------------------------------------------------------------------------
# observables on windows


def observable_matrix(A, basis, window, h=1.0):
    """Window block of Op_h(A): polynomial path for PolySymbol, grid otherwise."""
    if isinstance(A, PolySymbol):
        return poly_window_matrix(A, basis, window, h)
    return weyl_quantize_grid(A, basis, window, h).matrix


def _constant_value(A):
    """c if A is the constant symbol c, else None."""
    if isinstance(A, PolySymbol):
        if not A.terms:
            return 0.0
        if len(A.terms) == 1:
            (alpha, beta_), c = A.terms[0]
            if not any(alpha) and not any(beta_):
                return c.real if c.imag == 0 else c
    return None


def matrix_elements(A, M, U):
    """Re <u, A u> for unit rows u of U; exactly c for a constant symbol c."""
    c = _constant_value(A)
    if c is not None:
        return np.full(U.shape[0], float(np.real(c)))
    MU = U @ M.T
    return np.real(np.einsum("si,si->s", U.conj(), MU))


def harmonic_liouville(A, d):
    """Liouville average on the harmonic energy shell (a round sphere)."""
    c = _constant_value(A)
    if c is not None:
        return float(np.real(c))
    return liouville_sphere_exact(d, 1.0, A)


@_timed
def ergodicity(basis, observables, hs, M=2000, a=1.0, b=1.5, seed=0,
               family="complex-gaussian", liouville=None, slope_tol=0.2, mean_tol=0.05):
    """Matrix elements <u, A u> of random window states across an h ladder.

    ``observables`` maps names to symbols, quantized at h=1 on the h=1
    basis (the rescaling identity turns this into Op_h on rescaled states).
    ``liouville`` maps names to known averages; by default harmonic shells
    are averaged in closed form.
    """
    liouville = dict(liouville or {})
    cfg = {"hs": list(hs), "M": M, "a": a, "b": b, "seed": seed, "family": family,
           "observables": sorted(observables), "potential": basis.potential.to_text(),
           "n_axis": basis.n_axis}
    rep = ExperimentReport("ergodicity", cfg)
    for name in sorted(observables):
        if name not in liouville:
            liouville[name] = harmonic_liouville(observables[name], basis.d)
    for h in hs:
        win = make_window(basis, h, a, b)
        key = ("ergodicity", _hlabel(h))
        rep.seeds[_hlabel(h)] = seed_label(seed, *key)
        U = _isotropic_states(win, M, derive_seed(seed, *key), family)
        for name in sorted(observables):
            A = observables[name]
            Mat = observable_matrix(A, basis, win)
            q = matrix_elements(A, Mat, U)
            N = win.N_h
            trace_avg = float(np.real(np.trace(Mat))) / N
            spec_var = max(float(np.real(np.trace(Mat @ Mat))) / N - trace_avg ** 2, 0.0)
            const = _constant_value(A)
            if const is not None:
                trace_avg = float(np.real(const))
            mean = float(np.mean(q)) if M else float("nan")
            se = float(np.std(q, ddof=1) / math.sqrt(M)) if M > 1 else float("nan")
            var = float(np.var(q, ddof=1)) if M > 1 else float("nan")
            row = {"h": h, "N_h": N, "observable": name, "n": M, "seed": rep.seeds[_hlabel(h)],
                   "mean": mean, "se": se, "variance": var, "trace_average": trace_avg,
                   "window_variance": spec_var, "predicted_variance": spec_var / (N + 1),
                   "liouville": liouville[name], "mean_minus_trace": abs(mean - trace_avg),
                   "trace_minus_liouville": abs(trace_avg - liouville[name]),
                   "max_deviation": float(np.max(np.abs(q - trace_avg))) if M else float("nan")}
            try:
                fit = gaussian_tail_check(q, scale=math.sqrt(N))
                row.update(tail_slope=fit.slope, tail_r2=fit.r_squared)
            except InsufficientTail as exc:
                row.update(tail_slope=None, tail_r2=None)
                rep.notes.append(f"{name} at h={_hlabel(h)}: {exc}")
            rep.rows.append(row)
    for name in sorted(observables):
        rows = [r for r in rep.rows if r["observable"] == name]
        if _constant_value(observables[name]) is not None:
            dev = max(r["max_deviation"] for r in rows)
            rep.check(f"{name}: constant observable deviations", dev, "== 0", dev == 0.0)
            continue
        slope, _ = _loglog_slope([r["N_h"] for r in rows], [r["variance"] for r in rows])
        rep.check(f"{name}: variance slope vs N_h", slope, f"-1 +/- {slope_tol:g}",
                  abs(slope + 1.0) <= slope_tol)
        last = min(rows, key=lambda r: r["h"])
        gap = abs(last["mean"] - last["liouville"])
        rep.check(f"{name}: |mean - L| at smallest h", gap, f"<= 3 SE + {mean_tol:g}",
                  gap <= 3 * last["se"] + mean_tol)
        allowance = 3 * last["se"] + 0.1 / math.sqrt(last["N_h"])
        rep.check(f"{name}: |mean - trace average| at smallest h", last["mean_minus_trace"],
                  "<= 3 SE + 0.1 N_h^(-1/2)", last["mean_minus_trace"] <= allowance)
        ok = last["tail_slope"] is not None and last["tail_slope"] < 0 and last["tail_r2"] > 0.8
        rep.check(f"{name}: tail slope in N_h r^2 (R^2)", last["tail_slope"],
                  "< 0 with R^2 > 0.8", ok)
    return rep


@_timed
def que_run(basis, observables, js=(6, 12, 24, 48), samples=200, seed=0, trend=0.5):
    """Worst matrix-element deviation over Haar bases of harmonic eigenspaces.

    Level j (energy 2j + d) is isolated by a window of width h/2 at
    h = 1/(2j + d). D_j = max over basis vectors of |<phi, A phi> - L(A)|.
    """
    if not basis.potential.is_harmonic:
        raise ValueError("que_run needs the harmonic oscillator")
    d = basis.d
    cfg = {"js": list(js), "samples": samples, "seed": seed, "observables": sorted(observables),
           "n_axis": basis.n_axis, "d": d}
    rep = ExperimentReport("que", cfg)
    for j in js:
        h = 1.0 / (2 * j + d)
        win = make_window(basis, h, 1.0, 1.0 + 0.5 * h)
        dim = win.N_h
        key = ("que", j)
        rep.seeds[str(j)] = seed_label(seed, *key)
        rng_seq = derive_seed(seed, *key)
        Us = [haar_basis(dim, s) for s in rng_seq.spawn(samples)]
        for name in sorted(observables):
            A = observables[name]
            L = harmonic_liouville(A, d)
            Mat = observable_matrix(A, basis, win)
            D = np.array([np.max(np.abs(matrix_elements(A, Mat, U.T) - L)) for U in Us])
            med = _median(D)
            frac = float(np.mean(D > 3 * med)) if med > 0 else 0.0
            rep.rows.append({"j": j, "dim": dim, "observable": name, "n": samples,
                             "seed": rep.seeds[str(j)], "median": med,
                             "max": float(D.max()) if D.size else float("nan"),
                             "q90": _quantiles(D, [0.9])[0], "fraction_above_3_median": frac,
                             "liouville": L})
    for name in sorted(observables):
        rows = sorted((r for r in rep.rows if r["observable"] == name), key=lambda r: r["j"])
        if _constant_value(observables[name]) is not None:
            mx = max(r["max"] for r in rows)
            rep.check(f"{name}: D_j for a constant symbol", mx, "== 0", mx == 0.0)
            continue
        q = rows[-1]["median"] / rows[0]["median"]
        rep.check(f"{name}: median D at j={rows[-1]['j']} / j={rows[0]['j']}", q,
                  f"< {trend:g}", q < trend)
        f0, f1 = rows[0]["fraction_above_3_median"], rows[-1]["fraction_above_3_median"]
        rep.check(f"{name}: tail fraction at j={rows[-1]['j']} vs j={rows[0]['j']}", f1,
                  f"<= {f0:g}", f1 <= f0)
    return rep


# --------------------------------------------------------------------------
# heat kernel, no-smoothing, divergence, Moyal


def mehler_diagonal(d, t, points):
    """exp(-t(-Laplacian + |x|^2)) kernel on the diagonal, closed form."""
    x = np.asarray(points, dtype=float).reshape(-1, d)
    r2 = np.sum(x * x, axis=1)
    return (2 * np.pi * np.sinh(2 * t)) ** (-d / 2.0) * np.exp(-r2 * np.tanh(t))


def heat_points(d, radius, n):
    ax = np.linspace(0.0, radius, n)
    if d == 1:
        return ax[:, None]
    g = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([g[0].ravel(), g[1].ravel()], axis=1)


def is_radial_power(V):
    """True when V is exactly |x|^(2k) with no shift."""
    return V.shift == 0.0 and sorted(V.monomials) == sorted(radial_power(V.d, V.k).monomials)


def radial_comparison(axis_basis, d, t, points):
    """Upper bound on K(t;x,x) for V = |x|^(2k) in dimension d from a 1D basis.

    In coordinates u rotated so that x lies on the first axis,
    |u|^(2k) >= sum_i u_i^(2k), and a smaller potential has a larger heat
    kernel (Feynman-Kac). The separable kernel factorizes into
    K_1(t;|x|,|x|) K_1(t;0,0)^(d-1), each taken with its truncation bound.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, d)
    r = np.sqrt(np.sum(pts * pts, axis=1))
    at_r = heat_diag(axis_basis, t, r[:, None])
    at_0 = heat_diag(axis_basis, t, np.zeros((1, 1)))
    return (at_r.values + at_r.tail_bound) * float(at_0.values[0] + at_0.tail_bound[0]) ** (d - 1)


@_timed
def heat_bound(cases, ts=(0.05, 0.1, 0.5, 1.0), N=2, radius=3.0, n_points=13,
               c_max=20.0, mehler_tol=1e-8, axis_bases=None):
    """One constant for K(t;x,x) <= C (t^(-d/2) e^(-t V(x)) + (1 + |x|^(2k))^(-N)).

    ``cases`` maps labels to h=1 bases. The kernel value used is a rigorous
    upper bound: the truncated heat sum plus its tail bound, or, for
    V = |x|^(2k) with a 1D basis of the same k in ``axis_bases``, the
    separable comparison kernel when that is smaller. Harmonic cases are
    also compared with the Mehler diagonal.
    """
    axis_bases = dict(axis_bases or {})
    cfg = {"cases": sorted(cases), "ts": list(ts), "N": N, "radius": radius,
           "n_points": n_points, "axis_bases": sorted(axis_bases)}
    rep = ExperimentReport("heat_bound", cfg)
    worst_c = 0.0
    worst_mehler = 0.0
    uncertified = 0
    for label in sorted(cases):
        basis = cases[label]
        d, k = basis.d, basis.k
        pts = heat_points(d, radius, n_points)
        V = basis.potential(pts)
        r2k = np.sum(pts * pts, axis=1) ** k
        axis = axis_bases.get(label)
        for t in ts:
            hd = heat_diag(basis, t, pts)
            upper = hd.values + hd.tail_bound
            compared = 0
            if axis is not None and d > 1 and is_radial_power(basis.potential):
                comp = radial_comparison(axis, d, t, pts)
                compared = int(np.count_nonzero(comp < upper))
                upper = np.minimum(upper, comp)
            ref = t ** (-d / 2.0) * np.exp(-t * V) + (1.0 + r2k) ** (-N)
            c = float(np.max(upper / ref))
            worst_c = max(worst_c, c)
            row = {"case": label, "t": t, "points": int(pts.shape[0]), "constant": c,
                   "max_tail_bound": float(np.max(hd.tail_bound)),
                   "flagged": int(np.count_nonzero(hd.flagged)), "comparison_used": compared}
            if basis.potential.is_harmonic:
                exact = mehler_diagonal(d, t, pts)
                rel = float(np.max(np.abs(hd.values - exact) / exact))
                row["mehler_rel_error"] = rel
                worst_mehler = max(worst_mehler, rel)
                uncertified += row["flagged"]
            rep.rows.append(row)
    rep.check("constant C over all cells", worst_c, f"<= {c_max:g}", worst_c <= c_max)
    if any(cases[lbl].potential.is_harmonic for lbl in cases):
        rep.check("Mehler relative error (harmonic)", worst_mehler, f"<= {mehler_tol:g}",
                  worst_mehler <= mehler_tol)
        rep.check("harmonic cells with tail bound > 1e-8 value", uncertified, "== 0",
                  uncertified == 0)
    return rep


@_timed
def no_smoothing(cases, s_values=(0.5, 1.0), n_min=5, n_max=None, band=(0.1, 1.5),
                 exact_tol=1e-12):
    """Ratios r1 = ||(-Laplacian)^s phi_n|| / lambda_n^s and r2 = |||x|^s phi_n|| / lambda_n^(s/2k).

    For the harmonic oscillator the virial identity gives r1^2 = 1/2 at
    s = 1/2 and r2^2 = 1/2 at s = 1; other potentials are checked against
    ``band`` for every trusted n >= n_min.
    """
    cfg = {"cases": sorted(cases), "s_values": list(s_values), "n_min": n_min,
           "n_max": n_max, "band": list(band)}
    rep = ExperimentReport("no_smoothing", cfg)
    for label in sorted(cases):
        basis = cases[label]
        top = basis.trust_count if n_max is None else min(n_max, basis.trust_count)
        idx = np.arange(n_min, top)
        harmonic = basis.potential.is_harmonic
        worst = 0.0
        lo, hi = np.inf, -np.inf
        for s in s_values:
            tab = no_smoothing_ratios(basis, s, idx)
            for n, r1, r2 in zip(tab.indices, tab.r1, tab.r2):
                rep.rows.append({"case": label, "s": s, "n": int(n),
                                 "lambda": float(basis.eigenvalues[n]), "r1": r1, "r2": r2})
            if harmonic:
                if s == 0.5:
                    worst = max(worst, float(np.max(np.abs(tab.r1 ** 2 - 0.5))))
                if s == 1.0:
                    worst = max(worst, float(np.max(np.abs(tab.r2 ** 2 - 0.5))))
            else:
                lo = min(lo, float(tab.r1.min()), float(tab.r2.min()))
                hi = max(hi, float(tab.r1.max()), float(tab.r2.max()))
        if harmonic:
            rep.check(f"{label}: |ratio^2 - 1/2|", worst, f"<= {exact_tol:g}", worst <= exact_tol)
        else:
            rep.check(f"{label}: ratio range", [lo, hi], f"within [{band[0]:g}, {band[1]:g}]",
                      band[0] <= lo and hi <= band[1])
    return rep


def _tensor_rows(basis, indices, coeffs):
    """Tensor coefficients of sum_j coeffs[:, j] phi_{indices[j]}."""
    if basis.analytic:
        out = np.zeros((coeffs.shape[0], basis.dim), dtype=coeffs.dtype)
        out[:, basis.tensor_index[indices]] = coeffs
        return out
    return coeffs @ basis.coefficient_block(indices).T


def _state_kinetic(basis, indices, power, chunk=512):
    out = np.empty(indices.size)
    for start in range(0, indices.size, chunk):
        sel = indices[start:start + chunk]
        out[start:start + sel.size] = kinetic_form(
            basis, _tensor_rows(basis, sel, np.eye(sel.size)), power)
    return out


def _divergence_power(s, k):
    sigma = (k + 1) * s / k
    if abs(sigma - round(sigma)) > 1e-12 or round(sigma) not in (1, 2):
        raise ValueError("(k+1) s / k must be 1 or 2")
    return int(round(sigma))


@_timed
def smoothing_divergence(basis, s=0.5, cutoffs=(4, 8, 16, 32, 64, 128, 200), M=500, seed=0,
                         family="complex-gaussian", growth=2.0, plateau_tol=0.05,
                         pz_floor=0.1):
    """Truncated norms of random series with divergent and summable weights.

    v_N = sum_{lambda_n <= N} gamma_n X_n phi_n and
    s_N = ||(-Laplacian)^(sigma/2) v_N|| with sigma = (k+1) s / k. The
    divergent rule is gamma_n^2 = lambda_n^(-sigma) / n, the control
    lambda_n^(-sigma) / n^2 (n counted from 1).
    """
    power = _divergence_power(s, basis.k)
    cfg = {"s": s, "cutoffs": list(cutoffs), "M": M, "seed": seed, "family": family,
           "potential": basis.potential.to_text(), "n_axis": basis.n_axis}
    rep = ExperimentReport("smoothing_divergence", cfg)
    t = basis.trust_count
    lam = basis.eigenvalues[:t]
    if cutoffs and lam[-1] < max(cutoffs) and not basis.analytic:
        raise ValueError("largest cutoff exceeds the trusted spectrum")
    order = np.arange(1, t + 1, dtype=float)
    dist = DistributionSpec(family)
    for rule, expo in (("divergent", 1), ("convergent", 2)):
        gamma = np.sqrt(lam ** (-float(power)) / order ** expo)
        key = ("divergence", rule)
        rep.seeds[rule] = seed_label(seed, *key)
        rng_seed = derive_seed(seed, *key)
        X = dist.draw(make_rng(rng_seed), (M, t))
        for N in cutoffs:
            sel = np.flatnonzero(lam <= N * (1 + 1e-10))
            phi_norm = _state_kinetic(basis, sel, power)
            sigma2 = float(np.sum(gamma[sel] ** 2 * phi_norm))
            s2 = kinetic_form(basis, _tensor_rows(basis, sel, X[:, sel] * gamma[sel]), power)
            sN = np.sqrt(s2)
            pz_frac = float(np.mean(s2 >= sigma2 / 2)) if M else float("nan")
            pz_bound = 0.25 * float(np.mean(s2)) ** 2 / float(np.mean(s2 ** 2)) if M else float("nan")
            rep.rows.append({"rule": rule, "cutoff": N, "count": int(sel.size), "n": M,
                             "seed": rep.seeds[rule], "median": _median(sN),
                             "sigma2": sigma2, "mean_s2": float(np.mean(s2)) if M else None,
                             "pz_fraction": pz_frac, "pz_lower_bound": pz_bound})
    if M == 0 or len(cutoffs) < 2:
        rep.notes.append("not enough samples or cutoffs for criteria")
        return rep
    div = [r for r in rep.rows if r["rule"] == "divergent"]
    con = [r for r in rep.rows if r["rule"] == "convergent"]
    q = div[-1]["median"] / div[0]["median"]
    rep.check("divergent: median growth over the ladder", q, f"> {growth:g}", q > growth)
    rel = abs(con[-1]["median"] / con[-2]["median"] - 1.0)
    rep.check("convergent: relative change over the last step", rel, f"< {plateau_tol:g}",
              rel < plateau_tol)
    pz = min(r["pz_fraction"] for r in div)
    rep.check("divergent: min P[s^2 >= sigma^2/2]", pz, f">= {pz_floor:g}", pz >= pz_floor)
    return rep


def _truncation_index(d, big, n):
    keep = np.arange(n)
    if d == 1:
        return keep
    a, b = np.meshgrid(keep, keep, indexing="ij")
    return (a * big + b).ravel()


@_timed
def moyal_check(pairs, hs=(1.0, 0.25), n_axis=10, tol=1e-10):
    """Op(A) Op(B) = Op(A # B) on the leading n_axis block, for polynomial pairs.

    Op(A) and Op(B) are formed exactly at size n_axis + deg B so the product
    restricted to the leading block involves no truncation.
    """
    cfg = {"pairs": [[A.to_text(), B.to_text()] for A, B in pairs], "hs": list(hs),
           "n_axis": n_axis}
    rep = ExperimentReport("moyal_check", cfg)
    worst = 0.0
    for i, (A, B) in enumerate(pairs):
        d = A.d
        big = n_axis + max(B.degree, 1)
        keep = _truncation_index(d, big, n_axis)
        for h in hs:
            OA = weyl_quantize_poly(A, big, h).matrix
            OB = weyl_quantize_poly(B, big, h).matrix
            prod = (OA @ OB)[np.ix_(keep, keep)]
            C = weyl_quantize_poly(moyal_product(A, B, h), n_axis, h).matrix
            err = float(np.max(np.abs(prod - C)))
            scale = max(1.0, float(np.max(np.abs(C))))
            worst = max(worst, err / scale)
            rep.rows.append({"pair": i, "h": h, "abs_error": err, "scale": scale,
                             "rel_error": err / scale})
    rep.check("max relative operator error", worst, f"<= {tol:g}", worst <= tol)
    exact = True
    for h in hs:
        for d in (1, 2):
            for i in range(d):
                e = tuple(int(j == i) for j in range(d))
                z = (0,) * d
                x = PolySymbol(d, (((e, z), 1.0),))
                xi = PolySymbol(d, (((z, e), 1.0),))
                comm = moyal_product(x, xi, h) - moyal_product(xi, x, h)
                exact &= comm.terms == (((z, z), complex(0.0, h)),)
    rep.check("x # xi - xi # x = i h", int(exact), "exact in the symbol algebra", exact)
    return rep


def default_observables(d=2):
    """Two cutoff observables of order zero with closed-form shell averages."""
    if d != 2:
        raise ValueError("default observables are defined for d = 2")
    z = (0, 0)
    x1sq = PolySymbol(2, ((((2, 0), z), 1.0),))
    x1xi2 = PolySymbol(2, ((((1, 0), (0, 1)), 1.0),))
    return {
        "x1^2/|z|^2": RadialRatioSymbol(x1sq, power=1, eps=0.1),
        "x1*xi2/|z|^2": RadialRatioSymbol(x1xi2, power=1, eps=0.1),
    }

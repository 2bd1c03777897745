import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import beta as beta_fn

from schrolab.errors import WindowConditionViolated, WindowEmpty, WindowTooWide
from schrolab.experiments import mehler_diagonal
from schrolab.potential import harmonic, radial_power
from schrolab.spectral_windows import (
    WeightedNormSpec,
    beta,
    heat_diag,
    japanese,
    make_window,
    no_smoothing_ratios,
    phase_volume,
    quadrature_grid,
    spectral_function_on_grid,
    sup_grid,
    uniform_grid,
    weighted_norm,
    weighted_sup_norms,
    weyl_count,
    window_kernel,
    write_csv,
)


def test_harmonic_window_contents(harmonic_d2):
    W = make_window(harmonic_d2, 1 / 16, 1.0, 1.5)
    # normalized energies 2j + 2 in [16, 24) for j = 7..10, multiplicity j + 1
    assert W.N_h == 8 + 9 + 10 + 11
    assert W.interval == (16.0, 24.0)


def test_boundary_levels_snap_consistently(harmonic_d2):
    # 16 belongs to [16, 24) and 24 to the next window, even with rounding in a/h
    a = make_window(harmonic_d2, 0.1, 1.6, 2.4)
    b = make_window(harmonic_d2, 0.1, 2.4, 3.2)
    assert np.intersect1d(a.indices, b.indices).size == 0
    E = harmonic_d2.normalized_energies
    assert E[a.indices].min() == 16 and E[b.indices].min() == 24


def test_window_errors(harmonic_d2):
    with pytest.raises(WindowEmpty):
        make_window(harmonic_d2, 1.0, 3.1, 3.5)
    with pytest.raises(WindowTooWide):
        make_window(harmonic_d2, 1 / 512, 1.0, 1.5)
    with pytest.raises(WindowConditionViolated):
        make_window(harmonic_d2, 1 / 16, 1.0, 1.01, delta=0.0, D=1.0)
    with pytest.raises(ValueError):
        make_window(harmonic_d2, 1 / 16, 0.0, 1.0)


def test_beta_exponent():
    assert beta(2, 0, 2, 1) == 0
    assert beta(np.inf, 0, 2, 1) == pytest.approx(1.0)
    assert beta(4, 1, 2, 1) == pytest.approx(0.25)
    assert beta(np.inf, 2, 2, 1) == 0


def test_phase_volume_harmonic_d2():
    # (2 pi)^-2 vol of the 4-ball of radius sqrt(lam) = lam^2 / 8
    for lam in (3.0, 17.0, 80.0):
        assert phase_volume(harmonic(2), lam) == pytest.approx(lam ** 2 / 8, rel=1e-10)


def test_phase_volume_quartic_d1():
    # 2 * int sqrt(lam - x^4) dx / (2 pi) with the Beta-function closed form
    for lam in (1.0, 50.0):
        want = lam ** 0.75 * beta_fn(0.25, 1.5) / (2 * math.pi)
        assert phase_volume(radial_power(1, 2), lam) == pytest.approx(want, rel=1e-10)


def test_phase_volume_quartic_d2():
    # vol{|xi|^2 + |x|^4 <= lam} = int pi (lam - |x|^4) dx = 2 pi^2 lam^(3/2) / 3
    lam = 20.0
    want = 2 * math.pi ** 2 * lam ** 1.5 / 3 / (2 * math.pi) ** 2
    assert phase_volume(radial_power(2, 2), lam) == pytest.approx(want, rel=1e-8)


def test_weyl_count_harmonic(harmonic_d2):
    count, vol = weyl_count(harmonic_d2, 40.0)
    # levels 2j + 2 <= 40 have j <= 19, so sum_{j<=19} (j+1)
    assert count == 210
    assert vol == pytest.approx(200.0)


def test_kernel_integrates_to_window_size(harmonic_d2):
    W = make_window(harmonic_d2, 1 / 8, 1.0, 1.5)
    grid = quadrature_grid(harmonic_d2)
    e = spectral_function_on_grid(harmonic_d2, W.indices, grid.axes)
    assert np.sum(e * grid.weights()) == pytest.approx(W.N_h, rel=1e-12)


def test_window_kernel_pointwise_agrees_with_grid(harmonic_d2):
    W = make_window(harmonic_d2, 1 / 8, 1.0, 1.5)
    ax = np.linspace(-3, 3, 7)
    grid = spectral_function_on_grid(harmonic_d2, W.indices, (ax, ax))
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    np.testing.assert_allclose(window_kernel(harmonic_d2, W, pts), grid.ravel(), rtol=1e-12)


@given(st.floats(0.05, 2.0), st.sampled_from([1, 2]))
def test_heat_diagonal_matches_mehler(t, d):
    B = harmonic_d1_big() if d == 1 else harmonic_d2_big()
    pts = np.random.default_rng(0).uniform(-2, 2, size=(5, d))
    hd = heat_diag(B, t, pts)
    np.testing.assert_allclose(hd.values, mehler_diagonal(d, t, pts), rtol=1e-8)
    assert np.all(hd.tail_bound >= 0)


_big = {}


def harmonic_d1_big():
    from schrolab.eigensolver import solve

    return _big.setdefault(1, solve(harmonic(1), 1.0, 400))


def harmonic_d2_big():
    from schrolab.eigensolver import solve

    return _big.setdefault(2, solve(harmonic(2), 1.0, 250))


@given(st.floats(0.1, 5.0), st.floats(-3, 3))
def test_weighted_norm_of_constant(c, s):
    grid = uniform_grid(2.0, 41, 1)
    vals = np.full(41, c)
    pts = grid.points()
    sup = weighted_norm(vals, WeightedNormSpec(np.inf, s), pts)
    assert sup == pytest.approx(abs(c) * japanese(pts).max() ** s if s > 0 else abs(c) * japanese(pts).min() ** s)
    l2 = weighted_norm(vals, WeightedNormSpec(2, 0), pts, grid.weights())
    assert l2 == pytest.approx(abs(c) * math.sqrt(0.1 * 41))


def test_weighted_norm_spec_validation():
    with pytest.raises(ValueError):
        WeightedNormSpec(0.5)


def test_sup_norm_refinement_finds_peak(harmonic_d2):
    # a single eigenfunction h_0(x1) h_0(x2) peaks at the origin with value 1/sqrt(pi)
    W = make_window(harmonic_d2, 1 / 8, 0.25, 0.3)
    coeffs = np.zeros((1, W.N_h))
    coeffs[0, 0] = 1.0
    E = harmonic_d2.normalized_energies[W.indices]
    assert np.all(E == 2.0)
    coarse = sup_grid(harmonic_d2, W, points_per_wavelength=3)
    raw = np.abs(spectral_function_on_grid(harmonic_d2, W.indices[:1], coarse.axes)).max() ** 0.5
    val = weighted_sup_norms(harmonic_d2, W, coeffs, 0.0, coarse)[0]
    peak = 1 / math.sqrt(math.pi)
    assert val <= peak * (1 + 1e-12)
    assert peak - val < 0.1 * (peak - raw)
    assert val == pytest.approx(peak, rel=1e-3)


def test_harmonic_no_smoothing_is_exact(harmonic_d1):
    idx = np.arange(5, 40)
    # virial identities: <p^2> = <x^2> = lambda / 2
    half = no_smoothing_ratios(harmonic_d1, 0.5, idx)
    np.testing.assert_allclose(half.r1 ** 2, 0.5, atol=1e-12)
    one = no_smoothing_ratios(harmonic_d1, 1.0, idx)
    np.testing.assert_allclose(one.r2 ** 2, 0.5, atol=1e-12)
    # <p^4> = (3/8)(2n+1)^2 + 3/8 for the harmonic oscillator
    lam = harmonic_d1.eigenvalues[idx]
    np.testing.assert_allclose(one.r1 ** 2, (3 * lam ** 2 / 8 + 3 / 8) / lam ** 2, rtol=1e-12)
    with pytest.raises(ValueError):
        no_smoothing_ratios(harmonic_d1, 0.7, idx)


def test_csv_writer_round_trips_floats():
    text = write_csv([{"a": 0.1, "b": 3}], ["a", "b"], "two columns")
    lines = text.splitlines()
    assert lines[0] == "# two columns"
    assert lines[1] == "a,b"
    assert float(lines[2].split(",")[0]) == 0.1

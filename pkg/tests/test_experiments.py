import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from schrolab import experiments as ex
from schrolab.quantization import constant_symbol, monomial
from schrolab.random_ensembles import haar_basis
from schrolab.spectral_windows import make_window


def test_harmonic_levels():
    assert list(ex.harmonic_levels(2, 6)) == [2, 4, 4, 6, 6, 6]
    assert list(ex.harmonic_levels(1, 3)) == [1, 3, 5]


def test_seed_derivation_is_keyed_not_ordered():
    a = ex.derive_seed(7, "sobolev", 0.125).generate_state(4)
    b = ex.derive_seed(7, "sobolev", 0.125).generate_state(4)
    c = ex.derive_seed(7, "sobolev", 0.0625).generate_state(4)
    d = ex.derive_seed(8, "sobolev", 0.125).generate_state(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert ex.seed_label(7, "sobolev", 0.125) == "7:sobolev:0.125"


def test_report_serialization_is_clean():
    rep = ex.ExperimentReport("demo", {"x": np.float64(1.5), "t": (1, 2)})
    rep.rows.append({"a": np.nan, "b": np.int64(3)})
    rep.check("c", np.float32(0.5), "< 1", True)
    rep.wall_time = 12.0
    d = json.loads(rep.to_json())
    assert d["rows"] == [{"a": None, "b": 3}]
    assert d["config"] == {"t": [1, 2], "x": 1.5}
    assert "wall_time" not in d
    assert rep.passed
    assert rep.to_csv().splitlines()[1] == "a,b"


def test_spectrum_report_flags_missing_levels(harmonic_d1):
    rep = ex.spectrum_report(harmonic_d1, count=10_000, reference="harmonic")
    assert not rep.passed
    assert rep.criteria[0].name == "trusted levels available"
    ok = ex.spectrum_report(harmonic_d1, count=20, reference="harmonic")
    assert ok.passed


def test_weyl_slope_on_harmonic(harmonic_d2):
    rep = ex.weyl_law(harmonic_d2, 10, 100, n_points=12)
    assert rep.passed
    ratios = [r["count_over_volume"] for r in rep.rows if "count_over_volume" in r]
    assert ratios and all(0.5 < q < 1.5 for q in ratios)


def test_two_sided_p1_theta0_is_exactly_one(harmonic_d2):
    rep = ex.two_sided_integrals(harmonic_d2, [1 / 8, 1 / 16], ps=(1, 2), thetas=[0.0])
    ones = [r["ratio"] for r in rep.rows if r.get("p") == 1 and "ratio" in r]
    assert len(ones) == 2
    np.testing.assert_allclose(ones, 1.0, atol=1e-12)


def test_window_uniformity_zero_constant_is_a_zero_check(harmonic_d2):
    rep = ex.window_uniformity(harmonic_d2, [20, 30], C0=0)
    assert rep.rows and rep.passed


def test_sobolev_scan_edge_cases(harmonic_d2):
    empty = ex.sobolev_scan(harmonic_d2, [1 / 8], M=0)
    assert empty.rows == [] and empty.notes
    small = ex.sobolev_scan(harmonic_d2, [1 / 8, 1 / 16], M=40, seed=3)
    assert len(small.rows) == 2
    again = ex.sobolev_scan(harmonic_d2, [1 / 8, 1 / 16], M=40, seed=3)
    assert small.to_json() == again.to_json()
    other = ex.sobolev_scan(harmonic_d2, [1 / 8, 1 / 16], M=40, seed=4)
    assert other.to_json() != small.to_json()


def test_lr_scan_with_one_sample(harmonic_d2):
    rep = ex.lr_scan(harmonic_d2, 1 / 16, M=1)
    assert rep.notes
    assert rep.rows[0]["q25"] is None or math.isnan(rep.rows[0]["q25"])


def test_constant_observable_matrix_elements_are_exact():
    U = np.exp(1j * np.arange(12)).reshape(3, 4) / 2
    vals = ex.matrix_elements(constant_symbol(2, 1.0), np.eye(4), U)
    assert np.array_equal(vals, np.ones(3))


@given(st.integers(0, 10_000))
def test_matrix_elements_match_direct_formula(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    M = M + M.conj().T
    U = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    want = [np.real(np.vdot(u, M @ u)) for u in U]
    np.testing.assert_allclose(ex.matrix_elements(monomial(2, (1, 0), (0, 0)), M, U), want)


def test_ergodicity_statistics_are_unitarily_invariant(harmonic_d2):
    # isotropic Gaussian states are Haar-distributed on the window sphere, so
    # rotating the window basis must not change the law of <u, A u>
    W = make_window(harmonic_d2, 1 / 16, 1.0, 1.5)
    A = ex.default_observables()["x1^2/|z|^2"]
    M = ex.observable_matrix(A, harmonic_d2, W)
    U = ex._isotropic_states(W, 3000, ex.derive_seed(0, "ks", "a"), "complex-gaussian")
    V = ex._isotropic_states(W, 3000, ex.derive_seed(0, "ks", "b"), "complex-gaussian")
    R = haar_basis(W.N_h, 5)
    f = ex.matrix_elements(A, M, U)
    g = ex.matrix_elements(A, R.conj().T @ M @ R, V)
    assert stats.ks_2samp(f, g).pvalue > 1e-3
    # the test has power: a non-isotropic family shifts the law visibly
    skew = V * np.sqrt(np.linspace(0.2, 1.8, W.N_h))
    skew /= np.linalg.norm(skew, axis=1, keepdims=True)
    assert stats.ks_2samp(f, ex.matrix_elements(A, M, skew)).pvalue < 1e-3


def test_ergodicity_small_run(harmonic_d2):
    obs = {"x1*xi2/|z|^2": ex.default_observables()["x1*xi2/|z|^2"]}
    rep = ex.ergodicity(harmonic_d2, obs, [1 / 16, 1 / 32], M=2000, seed=1)
    for row in rep.rows:
        assert row["variance"] > 0
        assert row["predicted_variance"] == pytest.approx(row["variance"], rel=0.25)


def test_mehler_diagonal_limits():
    pts = np.zeros((1, 1))
    # K(t;0,0) = (2 pi sinh 2t)^(-1/2) in d = 1
    assert ex.mehler_diagonal(1, 0.3, pts)[0] == pytest.approx((2 * math.pi * math.sinh(0.6)) ** -0.5)


def test_heat_bound_harmonic_only():
    from conftest import cached_basis

    cases = {"harmonic-d1": cached_basis("harmonic", 1, 400)}
    rep = ex.heat_bound(cases, ts=(0.1, 1.0))
    assert rep.passed


def test_moyal_check_reports_exactness():
    pairs = [(monomial(1, (2,), (0,)), monomial(1, (0,), (2,)))]
    rep = ex.moyal_check(pairs, hs=(1.0,), n_axis=8)
    assert rep.passed
    assert rep.rows[0]["rel_error"] < 1e-12


def test_no_smoothing_band_check(harmonic_d1, quartic_d1):
    rep = ex.no_smoothing({"harmonic-d1": harmonic_d1, "quartic-d1": quartic_d1})
    assert rep.passed
    names = [c.name for c in rep.criteria]
    assert any("quartic" in n for n in names) and any("harmonic" in n for n in names)

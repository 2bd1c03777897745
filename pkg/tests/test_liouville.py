import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schrolab.liouville import (
    EnergySurfaceSpec,
    energy_surface,
    liouville_mc,
    liouville_sphere,
    liouville_sphere_exact,
    sphere_moment,
    sphere_samples,
)
from schrolab.potential import harmonic, radial_power
from schrolab.quantization import RadialRatioSymbol, harmonic_symbol, monomial


@given(st.integers(1, 6))
def test_sphere_moments(n):
    e = np.zeros(n, dtype=int)
    e[0] = 2
    assert sphere_moment(e) == pytest.approx(1 / n)
    e[0] = 4
    assert sphere_moment(e) == pytest.approx(3 / (n * (n + 2)))
    e[0] = 3
    assert sphere_moment(e) == 0.0


@given(st.integers(1, 2), st.floats(0.5, 20))
def test_sphere_average_of_hamiltonian_is_level(d, eta):
    assert liouville_sphere_exact(d, eta, harmonic_symbol(d)) == pytest.approx(eta)


def test_mc_agrees_with_closed_form():
    A = RadialRatioSymbol(monomial(2, (2, 0), (0, 0)), eps=0.1)
    exact = liouville_sphere_exact(2, 1.0, A)
    assert exact == pytest.approx(0.25)
    est = liouville_sphere(2, 1.0, A, n_samples=40_000, seed=3)
    assert abs(est.estimate - exact) < 5 * est.se
    q = liouville_sphere(2, 1.0, A, n_samples=4096, seed=3, method="qmc")
    assert abs(q.estimate - exact) < max(5 * q.se, 1e-3)


def test_sphere_samples_lie_on_sphere():
    z = sphere_samples(2, 4.0, 100, seed=1)
    np.testing.assert_allclose(np.sum(z * z, axis=1), 4.0)


def test_thin_shell_mc_on_harmonic_d1():
    # on x^2 + xi^2 = eta the average of x^2 is eta / 2
    spec = energy_surface(harmonic(1), 2.0, shell=0.01)
    est = liouville_mc(spec, monomial(1, (2,), (0,)), 20_000, seed=5)
    assert abs(est.estimate - 1.0) < 5 * est.se + 0.01


def test_thin_shell_mc_quartic_virial():
    # |xi|^2 + x^4 = eta: the microcanonical virial identity gives <xi^2> = 2 <x^4>
    spec = energy_surface(radial_power(1, 2), 1.0, shell=0.005)
    p2 = liouville_mc(spec, monomial(1, (0,), (2,)), 20_000, seed=7)
    x4 = liouville_mc(spec, monomial(1, (4,), (0,)), 20_000, seed=7)
    assert p2.estimate == pytest.approx(2 * x4.estimate, rel=0.01)
    assert p2.estimate + x4.estimate == pytest.approx(1.0, abs=0.01)


def test_mc_is_seed_deterministic():
    spec = energy_surface(harmonic(2), 1.0)
    A = monomial(2, (1, 1), (0, 0))
    a = liouville_mc(spec, A, 2000, seed=11)
    b = liouville_mc(spec, A, 2000, seed=11)
    assert a.estimate == b.estimate and a.spec_hash == b.spec_hash


def test_bad_shell_parameters():
    with pytest.raises(ValueError):
        energy_surface(harmonic(1), -1.0)
    with pytest.raises(ValueError):
        EnergySurfaceSpec(harmonic_symbol(1), 1.0, x_radius=None)
    with pytest.raises(ValueError):
        liouville_sphere_exact(2, 0.01, RadialRatioSymbol(monomial(2, (2, 0), (0, 0)), eps=0.1))

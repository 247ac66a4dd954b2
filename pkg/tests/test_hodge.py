import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexmoduli import make_flat_torus, make_triple, solve_coupled_vortex
from vortexmoduli.families import twisted_triple
from vortexmoduli.hodge import C0Element, HodgeComplex


def solved(t):
    h1, h2, _, _ = solve_coupled_vortex(t)
    return t.with_metrics(h1, h2)


@pytest.fixture(scope="module")
def base64():
    # spectral products satisfy the Leibniz rule only once they are resolved on the grid
    return make_flat_torus(0.3 + 1.1j, 64)


@pytest.fixture(scope="module")
def stable(base64):
    return HodgeComplex(solved(twisted_triple(base64, 1.0, [0.8 + 0.2j], [0.1], twist=0.2, seed=5)))


@pytest.fixture(scope="module")
def split(base64):
    # phi = 0 at alpha = 0: two line bundles side by side, polystable
    return HodgeComplex(solved(twisted_triple(base64, 0.0, [0.0], [0.1], twist=0.2, seed=5)))


def test_complex_property(stable, rng):
    f = stable.random(0, rng)
    assert stable.norm(stable.d1(stable.d0(f))) <= 1e-12 * stable.norm(f)
    assert stable.norm(stable.d0(stable.identity())) <= 1e-12


@pytest.mark.parametrize("level", [0, 1])
def test_adjoints(stable, rng, level):
    d, ds = ((stable.d0, stable.d0_star), (stable.d1, stable.d1_star))[level]
    x = stable.random(level, rng)
    y = stable.random(level + 1, rng)
    a, b = stable.inner(d(x), y), stable.inner(x, ds(y))
    assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_green_inverts_laplacian_off_the_kernel(stable, rng, level):
    x = stable.random(level, rng)
    back = stable.green(level, stable.laplacian(level, x)) + stable.harmonic_projection(level, x)
    assert stable.norm(back - x) <= 1e-9 * stable.norm(x)


def test_green_is_positive(stable, rng):
    x = stable.random(1, rng)
    x = x - stable.harmonic_projection(1, x)
    assert stable.inner(stable.green(1, x), x).real >= -1e-10


def test_harmonic_dimensions(stable, split):
    assert stable.harmonic_dim(0) == 1
    assert stable.harmonic_dim(1) == 1
    assert stable.harmonic_dim(2) == 0
    assert split.harmonic_dim(0) >= 2


def test_kernel_report_states_threshold_and_gap(stable):
    rep = stable.kernel_report(1)
    assert rep["threshold"] == 1e-6
    assert rep["dimension"] == 1
    assert rep["largest_kernel_eigenvalue"] < 1e-10
    assert rep["spectral_gap"] > 1e-3


def test_identity_is_harmonic_automorphism(stable):
    one = stable.identity()
    assert stable.norm(stable.laplacian(0, one)) <= 1e-10 * stable.norm(one)
    assert isinstance(one, C0Element)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_complex_on_unsolved_random_metrics(seed):
    # d1 d0 = 0 and adjointness hold for any metric, not only solutions
    base = make_flat_torus(0.3 + 1.1j, 16)
    r = np.random.default_rng(seed)
    t = make_triple(base, 1.0 + 0.5j, 1.0)
    x = base.lowpass(r, (1, 1), 2, 0.2)
    t = t.with_metrics(np.exp(x.real) + 0j, np.exp(-x.real) + 0j)
    H = HodgeComplex(t)
    f = H.random(0, r)
    assert H.norm(H.d1(H.d0(f))) <= 1e-12 * H.norm(f)
    y = H.random(1, r)
    a, b = H.inner(H.d0(f), y), H.inner(f, H.d0_star(y))
    assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)

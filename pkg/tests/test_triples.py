import numpy as np
import pytest
from hypothesis import given, strategies as st

from vortexmoduli import Verdict, alpha_slope, check_stability, make_family, make_triple, taus_from_alpha
from vortexmoduli.errors import HolomorphyError
from vortexmoduli.families import jacobian_family, twisted_triple
from vortexmoduli.triples import Direction


@given(d1=st.integers(-5, 5), d2=st.integers(-5, 5), r1=st.integers(1, 4), r2=st.integers(1, 4),
       alpha=st.floats(-3, 3))
def test_taus_satisfy_the_trace_normalisation(d1, d2, r1, r2, alpha):
    t1, t2 = taus_from_alpha(d1, d2, r1, r2, alpha)
    assert t1 - t2 == pytest.approx(alpha, abs=1e-12)
    assert r1 * t1 + r2 * t2 == pytest.approx(d1 + d2, abs=1e-10)


def test_alpha_slope():
    assert alpha_slope((2, 0), (1, 1), 1.0) == pytest.approx(1.5)
    # the alpha term is weighted by the rank of the second bundle
    assert alpha_slope((0, 0), (2, 1), 3.0) == pytest.approx(1.0)


@pytest.mark.parametrize("alpha,expected", [(1.0, Verdict.STABLE), (1e-3, Verdict.STABLE),
                                            (0.0, Verdict.SEMISTABLE), (-0.5, Verdict.UNSTABLE)])
def test_rank_one_pairs_with_nonzero_phi(base16, alpha, expected):
    assert check_stability(make_triple(base16, 1.0, alpha)) is expected


@pytest.mark.parametrize("alpha,expected", [(0.0, Verdict.POLYSTABLE), (1.0, Verdict.UNSTABLE),
                                            (-1.0, Verdict.UNSTABLE)])
def test_rank_one_pairs_with_zero_phi(base16, alpha, expected):
    assert check_stability(make_triple(base16, 0.0, alpha)) is expected


def test_degree_difference_shifts_the_threshold(base16):
    t = make_triple(base16, 1.0, 1.5)
    assert check_stability(t, degrees=(1, 0)) is Verdict.STABLE
    assert check_stability(t, degrees=(2, 0)) is Verdict.UNSTABLE


def test_direct_sums_and_unsupported_cases(base16):
    assert check_stability(make_triple(base16, np.diag([1.0, 0.5]), 1.0)) is Verdict.POLYSTABLE
    assert check_stability(make_triple(base16, np.diag([1.0, 0.0]), 1.0)) is Verdict.UNSTABLE
    assert check_stability(make_triple(base16, np.array([[1.0, 1.0], [0.0, 1.0]]), 1.0)) is Verdict.UNSUPPORTED
    assert check_stability(make_triple(base16, np.ones((2, 1)), 1.0)) is Verdict.UNSUPPORTED


def test_twisted_triple_is_holomorphic(base32):
    t = twisted_triple(base32, 1.0, [1.0, 0.5j], [0.1, -0.2], twist=0.25, seed=3)
    assert t.holomorphy_residual() < 1e-8
    t.check()


def test_constant_direction_must_preserve_holomorphy(base16):
    center = make_triple(base16, 1.0, 1.0)
    ok = Direction(dbeta1=np.full(base16.shape + (1, 1), 1.0 + 0j), dbeta2=np.full(base16.shape + (1, 1), 1.0 + 0j))
    fam = make_family(center, [ok], 1e-3)
    assert fam.holomorphy_in_s() < 1e-8
    bad = Direction(dbeta1=np.full(base16.shape + (1, 1), 1.0 + 0j))
    with pytest.raises(HolomorphyError):
        make_family(center, [bad], 1e-3)


def test_family_offsets_and_parameters(base32):
    fam = jacobian_family(base32, delta=1e-2)
    assert fam.s_of((1, 2))[0] == pytest.approx(1e-2 + 2e-2j)
    assert len(fam.param_grid) == 25
    assert fam.holomorphy_in_s() < 1e-6

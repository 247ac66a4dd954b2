import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexmoduli import SolverConfig, make_flat_torus, make_triple, solve_coupled_vortex, vortex_residual
from vortexmoduli.bundles import hermitian_part
from vortexmoduli.errors import DegenerationError, NonConvergenceError
from vortexmoduli.families import twisted_triple
from vortexmoduli.vortex import KH_HINT, energy_terms, l2_inner, linearized_df0, solver_state


def random_self_adjoint(base, rng, h, amp=1.0):
    r = h.shape[-1]
    x = base.lowpass(rng, (r, r), 3, amp)
    return np.linalg.solve(h, hermitian_part(x))


def _gauge_potentials(base, seed, twist, cutoff=2):
    # same draws as twisted_triple for rank one
    rng = np.random.default_rng(seed)
    xs = [base.lowpass(rng, (), cutoff, twist) for _ in range(4)]
    return xs[0], xs[2]


@pytest.fixture(scope="module")
def twisted(base32):
    return twisted_triple(base32, 1.0, [0.8 + 0.2j], [0.1 - 0.05j], twist=0.25, seed=7)


@pytest.fixture(scope="module")
def twisted_solution(twisted):
    return solve_coupled_vortex(twisted)


# oracles -------------------------------------------------------------------


@pytest.mark.parametrize("alpha,c", [(1.0, 1.0), (0.3, 0.5 + 0.5j), (2.0, 0.7j)])
def test_constant_data_closed_form(base16, alpha, c):
    h1, h2, rep, _ = solve_coupled_vortex(make_triple(base16, c, alpha))
    assert rep.sup_norm <= 1e-9
    assert np.allclose(h1[..., 0, 0] / h2[..., 0, 0], alpha / (2 * abs(c) ** 2), rtol=1e-10, atol=0)


def test_gauge_twisted_data_solved_by_pulled_back_metric(base32, twisted, twisted_solution):
    # the exact solution is |exp(xi_nu)|^2 times the constant-data solution
    h1, h2, rep, _ = twisted_solution
    xi1, xi2 = _gauge_potentials(base32, 7, 0.25)
    a = h1[..., 0, 0].real / np.abs(np.exp(xi1)) ** 2
    b = h2[..., 0, 0].real / np.abs(np.exp(xi2)) ** 2
    assert np.ptp(a) / a.mean() < 1e-8 and np.ptp(b) / b.mean() < 1e-8
    assert a.mean() / b.mean() == pytest.approx(1.0 / (2 * abs(0.8 + 0.2j) ** 2), rel=1e-8)


# the linearisation -----------------------------------------------------------


def test_energy_identity_and_symmetry(twisted, twisted_solution, rng):
    t = twisted.with_metrics(*twisted_solution[:2])
    base = t.base
    c1, c2 = random_self_adjoint(base, rng, t.h1), random_self_adjoint(base, rng, t.h2)
    e1, e2 = random_self_adjoint(base, rng, t.h1), random_self_adjoint(base, rng, t.h2)
    L1, L2, _ = linearized_df0(t, c1, c2)
    lhs = l2_inner(base, L1, c1, t.h1) + l2_inner(base, L2, c2, t.h2)
    assert lhs.real == pytest.approx(sum(energy_terms(t, c1, c2)), rel=1e-9)
    assert abs(lhs.imag) < 1e-9 * abs(lhs)
    M1, M2, _ = linearized_df0(t, e1, e2)
    a = l2_inner(base, L1, e1, t.h1) + l2_inner(base, L2, e2, t.h2)
    b = l2_inner(base, c1, M1, t.h1) + l2_inner(base, c2, M2, t.h2)
    assert a == pytest.approx(b, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.01, 3.0))
def test_df0_is_positive_semidefinite(seed, amp):
    base = make_flat_torus(0.3 + 1.1j, 16)
    r = np.random.default_rng(seed)
    t = make_triple(base, 0.9, 1.0)
    c1, c2 = random_self_adjoint(base, r, t.h1, amp), random_self_adjoint(base, r, t.h2, amp)
    L1, L2, _ = linearized_df0(t, c1, c2)
    q = l2_inner(base, L1, c1, t.h1) + l2_inner(base, L2, c2, t.h2)
    assert q.real >= -1e-12 * amp**2


def test_df0_rejects_non_self_adjoint_input(twisted, rng):
    x = twisted.base.lowpass(rng, (1, 1), 2) * 1j
    with pytest.raises(ValueError):
        linearized_df0(twisted, x, x)


def test_identity_is_the_kernel_on_constant_data(base16):
    t = make_triple(base16, 0.0, 0.0)
    one = np.ones(base16.shape + (1, 1), complex)
    L1, L2, m = linearized_df0(t, one, one)
    assert np.abs(L1).max() < 1e-14 and np.abs(L2).max() < 1e-14
    assert m.real == pytest.approx(4 * np.pi)


# the solver ------------------------------------------------------------------


def test_solver_trace_and_gauge_pin(twisted, twisted_solution):
    h1, h2, rep, trace = twisted_solution
    assert rep.sup_norm <= 1e-9
    assert all(abs(r["trace_integral"]) <= 1e-10 for r in trace)
    state = solver_state(twisted, h1, h2)
    assert state.gauge_integral == pytest.approx(4 * np.pi, rel=1e-12)
    assert vortex_residual(twisted.with_metrics(h1, h2)).sup_norm <= 1e-9


def test_solutions_agree_up_to_one_joint_constant(twisted, twisted_solution, base32):
    h1, h2, _, _ = twisted_solution
    start = twisted.with_metrics(3.0 * twisted.h1, 3.0 * twisted.h2 + 0.0)
    g1, g2, _, _ = solve_coupled_vortex(start)
    lam = g1[0, 0, 0, 0].real / h1[0, 0, 0, 0].real
    assert np.abs(g1 / lam - h1).max() / np.abs(h1).max() < 1e-6
    assert np.abs(g2 / lam - h2).max() / np.abs(h2).max() < 1e-6


def test_polystable_sum_converges(base32):
    t = twisted_triple(base32, 1.0, [1.0, 0.6 - 0.3j], [0.1, -0.05j], twist=0.1, seed=1)
    h1, h2, rep, _ = solve_coupled_vortex(t, SolverConfig(tol=1e-9))
    assert rep.sup_norm <= 1e-9


@pytest.mark.parametrize("alpha", [0.0, -0.5])
def test_no_solution_outside_the_stable_range(base16, alpha):
    with pytest.raises(NonConvergenceError) as info:
        solve_coupled_vortex(make_triple(base16, 0.8 + 0.2j, alpha))
    assert info.value.report["hint"] == KH_HINT
    assert isinstance(info.value, DegenerationError)


def test_iteration_cap_reports_non_convergence(twisted):
    with pytest.raises(NonConvergenceError) as info:
        solve_coupled_vortex(twisted, SolverConfig(max_iter=1))
    assert info.value.report["status"] == "nonconvergent"
    assert len(info.value.report["trace"]) == 2

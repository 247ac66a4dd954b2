"""Solve the coupled vortex equations, first where the answer is known, then where it is not obvious.

Run with: python3 demos/01_solving_the_vortex_equations.py
"""
import numpy as np

from vortexmoduli import SolverConfig, check_stability, make_flat_torus, make_triple, solve_coupled_vortex
from vortexmoduli.errors import NonConvergenceError
from vortexmoduli.families import twisted_triple

base = make_flat_torus(0.3 + 1.1j, 32)

# Constant data on two trivial line bundles. Both metrics are constants and
# their ratio is alpha / (2|c|^2).
c, alpha = 0.8 + 0.2j, 1.0
h1, h2, rep, trace = solve_coupled_vortex(make_triple(base, c, alpha))
print(f"constant data: h1/h2 = {(h1[0, 0, 0, 0] / h2[0, 0, 0, 0]).real:.12f}"
      f" (expected {alpha / (2 * abs(c) ** 2):.12f}), {len(trace) - 1} Newton steps")

# Move the same data by a complex gauge transformation. The triple is unchanged
# up to isomorphism, so a solution still exists, but now every field varies.
t = twisted_triple(base, alpha, [c], [0.1], twist=0.25, seed=7)
h1, h2, rep, trace = solve_coupled_vortex(t)
print(f"gauge-moved data: residual {rep.sup_norm:.1e} after {len(trace) - 1} steps;"
      f" h1 ranges over [{h1.real.min():.3f}, {h1.real.max():.3f}]")

# Rank two, a sum of two such pieces: solutions exist but are not unique, and
# the solver reports a fixed representative.
t2 = twisted_triple(base, alpha, [c, 0.5], [0.1, -0.1j], twist=0.25, seed=3)
_, _, rep, trace = solve_coupled_vortex(t2, SolverConfig(tol=1e-8))
print(f"rank (2,2) sum: residual {rep.sup_norm:.1e}, trace integral {abs(rep.trace_integral):.1e}")

# Equal degrees: stability, and hence a solution, needs alpha > 0.
print("\nalpha sweep for constant rank (1,1) data:")
for a in (-0.5, 0.0, 0.1, 1.0):
    t = make_triple(base, c, a)
    try:
        _, _, rep, trace = solve_coupled_vortex(t)
        outcome = f"converged in {len(trace) - 1} steps"
    except NonConvergenceError as exc:
        outcome = f"no solution ({type(exc).__name__})"
    print(f"  alpha = {a:5.2f}  {check_stability(t).value:22s} {outcome}")

"""Numerical engine for the coupled vortex equations of holomorphic triples on a flat torus."""
from .torus import TorusBase, make_flat_torus
from .triples import Triple, TripleFamily, Verdict, alpha_slope, check_stability, make_family, make_triple, taus_from_alpha
from .vortex import SolverConfig, solve_coupled_vortex, vortex_residual

__version__ = "0.1.0"

__all__ = [
    "TorusBase", "make_flat_torus", "Triple", "TripleFamily", "Verdict", "alpha_slope",
    "check_stability", "make_family", "make_triple", "taus_from_alpha", "SolverConfig",
    "solve_coupled_vortex", "vortex_residual",
]

"""Ready-made holomorphic families of triples.

Every family here is a complex gauge transform of a triple with constant
data.  In degree zero on a torus the polystable triples are sums of rank-one
pieces (L, L, c), and the moduli directions move the line bundles L.  The
gauge twist makes the solved metrics and every intermediate quantity
non-trivial while leaving the isomorphism class untouched, so the exact
answers stay known.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bundles import identity_field
from .torus import TorusBase
from .triples import TripleFamily, make_family, make_triple

Holo = Callable[[np.ndarray], complex]


@dataclass(frozen=True)
class GaugeSpec:
    """Gauge g = exp(sum_k p_k(s) xi_k(x)) (I + sum_k q_k(s) eta_k(x) N) on one bundle.

    p_k, q_k are holomorphic polynomials in s given by coefficient maps
    {multi-index: coefficient}; N is a fixed nilpotent matrix.
    """

    scalar: tuple = ()
    nilpotent: tuple = ()
    N: np.ndarray | None = None


def _poly(coeffs: dict, s) -> complex:
    out = 0.0 + 0.0j
    for idx, c in coeffs.items():
        term = complex(c)
        for si, p in zip(s, idx):
            term *= si**p
        out += term
    return out


def _gauge(base: TorusBase, spec: GaugeSpec, rank: int, s):
    """(g^{-1}, dbar g g^{-1}-free pieces) returned as (g, g^{-1}, g^{-1} dbar g)."""
    w = np.zeros(base.shape, complex)
    for coeffs, xi in spec.scalar:
        w = w + _poly(coeffs, s) * xi
    e = np.exp(w)[..., None, None]
    einv = np.exp(-w)[..., None, None]
    dw = base.dzbar(w)[..., None, None]
    eye = identity_field(base, rank)
    if spec.N is None or not spec.nilpotent:
        return e * eye, einv * eye, dw * eye
    v = np.zeros(base.shape, complex)
    for coeffs, eta in spec.nilpotent:
        v = v + _poly(coeffs, s) * eta
    N = np.asarray(spec.N, complex)
    m = v[..., None, None] * N
    u = eye + m
    uinv = eye - m  # N^2 = 0
    du = base.dzbar(v)[..., None, None] * N
    # g = e u  =>  g^{-1} dbar g = dw + u^{-1} du
    return e * u, einv * uinv, dw * eye + uinv @ du


def twisted_family(base: TorusBase, alpha: float, eps1: Sequence[Holo], eps2: Sequence[Holo],
                   c: Sequence[complex], m: int, delta: float, gauge1: GaugeSpec = GaugeSpec(),
                   gauge2: GaugeSpec = GaugeSpec(), extent: int = 2) -> TripleFamily:
    """Family g(s) . (diag eps1(s), diag eps2(s), diag c) of rank (r, r).

    eps1[k], eps2[k] are holomorphic functions of s giving constant dzbar
    coefficients; holomorphy of the diagonal phi forces eps1[k] = eps2[k]
    whenever c[k] != 0.
    """
    r = len(c)
    c = np.asarray(c, complex)

    def deform(s):
        s = np.asarray(s, complex)
        b1 = np.diag([complex(f(s)) for f in eps1])
        b2 = np.diag([complex(f(s)) for f in eps2])
        g1, g1inv, a1 = _gauge(base, gauge1, r, s)
        g2, g2inv, a2 = _gauge(base, gauge2, r, s)
        beta1 = a1 + g1inv @ b1 @ g1
        beta2 = a2 + g2inv @ b2 @ g2
        phi = g1inv @ np.diag(c) @ g2
        return beta1, beta2, phi

    def projectors(s):
        s = np.asarray(s, complex)
        g1, g1inv, _ = _gauge(base, gauge1, r, s)
        g2, g2inv, _ = _gauge(base, gauge2, r, s)
        out = []
        for k in range(r):
            E = np.zeros((r, r), complex)
            E[k, k] = 1.0
            out.append((g1inv @ E @ g1, g2inv @ E @ g2))
        return out

    s0 = np.zeros(m, complex)
    b1, b2, phi = deform(s0)
    summands = tuple(range(r))
    center = make_triple(base, phi, alpha, b1, b2, summands=summands)
    return make_family(center, deform, delta, m=m, extent=extent, summands=summands,
                       projectors=projectors if r > 1 else None)


def jacobian_family(base: TorusBase, alpha: float = 1.0, c: complex = 1.0, eps0: complex = 0.15 + 0.05j,
                    direction: complex = 1.0, curve: complex = 0.3, delta: float = 1e-3,
                    twist: float = 0.25, seed: int = 0, cutoff: int = 2, extent: int = 2) -> TripleFamily:
    """Rank (1,1), one direction: L_s = (dbar + eps(s)), eps(s) = eps0 + d s + curve s^2.

    The gauge exp(xi_nu(s, x)) with xi_nu = xi_nu^0 + s xi_nu^1 is applied to
    E_nu separately, so phi and the metrics vary in x and s.
    """
    rng = np.random.default_rng(seed)
    xs = [base.lowpass(rng, (), cutoff, twist) for _ in range(4)]

    def eps(s):
        return eps0 + direction * s[0] + curve * s[0] ** 2

    g1 = GaugeSpec(scalar=(({(0,): 1.0}, xs[0]), ({(1,): 1.0}, xs[1])))
    g2 = GaugeSpec(scalar=(({(0,): 1.0}, xs[2]), ({(1,): 1.0}, xs[3])))
    return twisted_family(base, alpha, [eps], [eps], [c], 1, delta, g1, g2, extent)


def polystable_family(base: TorusBase, alpha: float = 1.0, c=(1.0, 0.8 + 0.3j),
                      eps0=(0.12 + 0.04j, -0.07 + 0.1j), delta: float = 1e-3, twist: float = 0.25,
                      seed: int = 0, cutoff: int = 2, nonlinear: float = 0.3, extent: int = 2) -> TripleFamily:
    """Rank (2,2), two directions: sum of two rank-one pieces moving independently.

    eps_a(s) = eps0_a + s1 + q s1^2 + q s1 s2,  eps_b(s) = eps0_b + s2 - q s2^2 + q s1 s2,
    twisted by scalar and nilpotent gauges that depend on s.
    """
    rng = np.random.default_rng(seed)
    xs = [base.lowpass(rng, (), cutoff, twist) for _ in range(8)]
    q = nonlinear

    def ea(s):
        return eps0[0] + s[0] + q * s[0] ** 2 + q * s[0] * s[1]

    def eb(s):
        return eps0[1] + s[1] - q * s[1] ** 2 + q * s[0] * s[1]

    N = np.array([[0, 1], [0, 0]], complex)
    g1 = GaugeSpec(scalar=(({(0, 0): 1.0}, xs[0]), ({(1, 0): 1.0}, xs[1])),
                   nilpotent=(({(0, 0): 1.0}, xs[2]), ({(0, 1): 1.0, (1, 0): 0.5}, xs[3])), N=N)
    g2 = GaugeSpec(scalar=(({(0, 0): 1.0}, xs[4]), ({(0, 1): 1.0}, xs[5])),
                   nilpotent=(({(0, 0): 1.0}, xs[6]), ({(1, 0): 1.0}, xs[7])), N=N.T.copy())
    return twisted_family(base, alpha, [ea, eb], [ea, eb], list(c), 2, delta, g1, g2, extent)


def twisted_triple(base: TorusBase, alpha: float, c, eps, twist: float = 0.25, seed: int = 0,
                   cutoff: int = 2):
    """diag(eps), diag(eps), diag(c) moved by a seeded gauge; twist = 0 keeps it constant.

    eps must agree on the summands where c is non-zero for the data to be holomorphic.
    """
    c = [complex(x) for x in c]
    eps = [complex(x) for x in eps]
    r = len(c)
    rng = np.random.default_rng(seed)
    xs = [base.lowpass(rng, (), cutoff, twist) for _ in range(4)]
    N = None
    nil1 = nil2 = ()
    if r >= 2:
        N = np.zeros((r, r), complex)
        N[0, 1] = 1.0
        nil1 = (({(): 1.0}, xs[1]),)
        nil2 = (({(): 1.0}, xs[3]),)
    g1 = GaugeSpec(scalar=(({(): 1.0}, xs[0]),), nilpotent=nil1, N=N)
    g2 = GaugeSpec(scalar=(({(): 1.0}, xs[2]),), nilpotent=nil2, N=N)
    s0 = np.zeros(0, complex)
    a1_, a1inv, a1 = _gauge(base, g1, r, s0)
    a2_, a2inv, a2 = _gauge(base, g2, r, s0)
    beta1 = a1 + a1inv @ np.diag(eps) @ a1_
    beta2 = a2 + a2inv @ np.diag(eps) @ a2_
    phi = a1inv @ np.diag(c) @ a2_
    return make_triple(base, phi, alpha, beta1, beta2, summands=tuple(range(r)))


def constant_family(base: TorusBase, alpha: float = 1.0, c: complex = 1.0, delta: float = 1e-3) -> TripleFamily:
    """No s-dependence at all."""
    return twisted_family(base, alpha, [lambda s: 0.1 + 0.0j], [lambda s: 0.1 + 0.0j], [c], 1, delta)

"""Holomorphic triples (E1, E2, phi), alpha-stability and parametrised families."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import bundles
from .errors import DimensionError, HolomorphyError
from .torus import TorusBase

HOLOMORPHY_TOL = 1e-8


class Verdict(str, enum.Enum):
    STABLE = "stable"
    SEMISTABLE = "semistable-not-stable"
    UNSTABLE = "unstable"
    POLYSTABLE = "polystable"
    UNSUPPORTED = "unsupported"


def alpha_slope(degrees, ranks, alpha: float) -> float:
    d1, d2 = degrees
    r1, r2 = ranks
    if r1 < 0 or r2 < 0:
        raise ValueError("ranks must be non-negative")
    if r1 + r2 == 0:
        raise ZeroDivisionError("alpha-slope of a rank zero triple")
    return (d1 + d2 + alpha * r2) / (r1 + r2)


def taus_from_alpha(d1, d2, r1, r2, alpha):
    """Solve tau1 - tau2 = alpha, d1 + d2 = tau1 r1 + tau2 r2."""
    if r1 < 1 or r2 < 1:
        raise ValueError("both ranks must be positive")
    tau2 = (d1 + d2 - alpha * r1) / (r1 + r2)
    return tau2 + alpha, tau2


@dataclass(frozen=True)
class Triple:
    """A triple on the torus together with the Hermitian metrics currently attached.

    beta1/beta2 are the dzbar-coefficients of the two dbar-operators, phi is a
    Hom(E2, E1) field of shape (N, N, r1, r2) and h1/h2 are metric fields.
    """

    base: TorusBase
    beta1: np.ndarray
    beta2: np.ndarray
    phi: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    alpha: float
    degrees: tuple[int, int] = (0, 0)
    summands: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        r1, r2 = self.beta1.shape[-1], self.beta2.shape[-1]
        if self.phi.shape[-2:] != (r1, r2):
            raise DimensionError(f"phi must be {r1} x {r2}, got {self.phi.shape[-2:]}")
        if self.h1.shape[-1] != r1 or self.h2.shape[-1] != r2:
            raise DimensionError("metric ranks do not match the structures")

    @property
    def ranks(self) -> tuple[int, int]:
        return self.beta1.shape[-1], self.beta2.shape[-1]

    @property
    def taus(self) -> tuple[float, float]:
        return taus_from_alpha(*self.degrees, *self.ranks, self.alpha)

    @property
    def tau1(self) -> float:
        return self.taus[0]

    @property
    def tau2(self) -> float:
        return self.taus[1]

    @property
    def structure1(self):
        return bundles.HolomorphicStructure(self.ranks[0], self.beta1)

    @property
    def structure2(self):
        return bundles.HolomorphicStructure(self.ranks[1], self.beta2)

    def with_metrics(self, h1, h2) -> "Triple":
        return replace(self, h1=np.asarray(h1), h2=np.asarray(h2))

    def holomorphy_residual(self) -> float:
        return bundles.holomorphy_residual(self.base, self.phi, self.beta1, self.beta2)

    def check(self, tol: float = HOLOMORPHY_TOL) -> None:
        res = self.holomorphy_residual()
        if res > tol:
            raise HolomorphyError(f"phi is not holomorphic: residual {res:.3e}")
        d = self.degrees
        t1, t2 = self.taus
        if abs(t1 - t2 - self.alpha) > 1e-12 or abs(d[0] + d[1] - t1 * self.ranks[0] - t2 * self.ranks[1]) > 1e-10:
            raise ValueError("tau normalisation violated")


def make_triple(base: TorusBase, phi, alpha: float, beta1=None, beta2=None, h1=None, h2=None,
                summands=None) -> Triple:
    phi = np.asarray(phi, dtype=complex)
    if phi.ndim == 2 and phi.shape != base.shape:
        phi = bundles.constant_field(base, phi)
    elif phi.ndim == 0 or (phi.ndim == 2 and phi.shape == base.shape):
        phi = (phi * np.ones(base.shape))[..., None, None]
    r1, r2 = phi.shape[-2:]
    beta1 = np.zeros(base.shape + (r1, r1), complex) if beta1 is None else np.asarray(beta1, complex)
    beta2 = np.zeros(base.shape + (r2, r2), complex) if beta2 is None else np.asarray(beta2, complex)
    h1 = bundles.identity_field(base, r1) if h1 is None else np.asarray(h1, complex)
    h2 = bundles.identity_field(base, r2) if h2 is None else np.asarray(h2, complex)
    return Triple(base, beta1, beta2, phi, h1, h2, float(alpha), summands=summands)


# stability -------------------------------------------------------------------

_ZERO_TOL = 1e-12


def _rank11_verdict(d1, d2, alpha, phi_nonzero, tol=1e-12):
    """Verdict for a rank (1,1) triple from its saturated subtriples.

    phi != 0: the only proper saturated subtriple of smaller total rank is (E1, 0).
    phi == 0: (E1, 0) and (0, E2) are both subtriples.
    """
    mu = alpha_slope((d1, d2), (1, 1), alpha)
    if phi_nonzero:
        sub = alpha_slope((d1, 0), (1, 0), alpha)
        if sub < mu - tol:
            return Verdict.STABLE
        if sub <= mu + tol:
            return Verdict.SEMISTABLE
        return Verdict.UNSTABLE
    subs = [alpha_slope((d1, 0), (1, 0), alpha), alpha_slope((0, d2), (0, 1), alpha)]
    if max(subs) > mu + tol:
        return Verdict.UNSTABLE
    # both summands sit exactly at the slope: a direct sum of stable rank-one pieces
    return Verdict.POLYSTABLE


def _is_diagonal(x, tol=_ZERO_TOL):
    off = x - np.einsum("...ii->...i", x)[..., None] * np.eye(x.shape[-1])
    return np.max(np.abs(off)) <= tol * max(1.0, np.max(np.abs(x)))


def check_stability(triple: Triple, degrees=None) -> Verdict:
    """alpha-stability verdict for rank (1,1) triples and diagonal direct sums of them.

    Anything else is reported as unsupported; general subsheaf enumeration is
    not attempted.
    """
    d1, d2 = triple.degrees if degrees is None else degrees
    r1, r2 = triple.ranks
    alpha = triple.alpha
    if (r1, r2) == (1, 1):
        nonzero = np.max(np.abs(triple.phi)) > _ZERO_TOL
        return _rank11_verdict(d1, d2, alpha, nonzero)
    if r1 == r2 and all(_is_diagonal(x) for x in (triple.beta1, triple.beta2, triple.phi)):
        # summands (L_k, L'_k, phi_kk) with the degree split evenly (trivial topological type)
        if d1 or d2:
            return Verdict.UNSUPPORTED
        verdicts = []
        for k in range(r1):
            nonzero = np.max(np.abs(triple.phi[..., k, k])) > _ZERO_TOL
            verdicts.append(_rank11_verdict(0, 0, alpha, nonzero))
        if any(v == Verdict.UNSTABLE for v in verdicts):
            return Verdict.UNSTABLE
        if all(v in (Verdict.STABLE, Verdict.POLYSTABLE) for v in verdicts):
            # equal slopes alpha/2 for every summand
            return Verdict.POLYSTABLE
        return Verdict.SEMISTABLE
    return Verdict.UNSUPPORTED


# families ---------------------------------------------------------------------

Deformation = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class Direction:
    """A linear first-order deformation (d beta1, d beta2, d phi)."""

    dbeta1: np.ndarray | None = None
    dbeta2: np.ndarray | None = None
    dphi: np.ndarray | None = None


class TripleFamily:
    """A holomorphic family of triples over a polydisc in C^m around s0.

    Members live on the lattice s0 + delta * (p + i q) in each complex
    direction; an offset is a tuple of 2m integers (p_1, q_1, ..., p_m, q_m).
    Members are built on demand from `deform(s) -> (beta1, beta2, phi)`,
    which must be holomorphic in s.

    ``projectors(s)``, when given, returns the idempotents (P1_k, P2_k) of a
    splitting into direct summands.  Solved metrics of a polystable sum are
    only fixed up to one scale per summand; the projectors let the solver pin
    each scale so that the metrics vary smoothly with s.
    """

    def __init__(self, center: Triple, deform: Deformation, m: int, delta: float, s0=None,
                 extent: int = 2, summands=None, projectors=None):
        self.center_triple = center
        self.deform = deform
        self.m = int(m)
        self.delta = float(delta)
        self.s0 = np.zeros(self.m, complex) if s0 is None else np.asarray(s0, complex)
        self.extent = extent
        self.summands = summands
        self.projectors = projectors
        self._members: dict[tuple, Triple] = {}

    @property
    def base(self) -> TorusBase:
        return self.center_triple.base

    @property
    def center(self) -> tuple:
        return (0,) * (2 * self.m)

    @property
    def param_grid(self):
        ax = range(-self.extent, self.extent + 1)
        return list(itertools.product(ax, repeat=2 * self.m))

    def s_of(self, offset) -> np.ndarray:
        off = np.asarray(offset, float).reshape(self.m, 2)
        return self.s0 + self.delta * (off[:, 0] + 1j * off[:, 1])

    def member(self, offset) -> Triple:
        offset = tuple(int(o) for o in offset)
        if offset not in self._members:
            if offset == self.center:
                self._members[offset] = self.center_triple
            else:
                b1, b2, phi = self.deform(self.s_of(offset))
                c = self.center_triple
                t = replace(c, beta1=np.asarray(b1, complex), beta2=np.asarray(b2, complex),
                            phi=np.asarray(phi, complex))
                self._members[offset] = t
        return self._members[offset]

    def set_member(self, offset, triple: Triple) -> None:
        self._members[tuple(offset)] = triple

    def members(self):
        return dict(self._members)

    def holomorphy_in_s(self) -> float:
        """Finite-difference Cauchy-Riemann residual |d/d sbar (beta, phi)| at s0."""
        worst = 0.0
        for i in range(self.m):
            e_re = [0] * (2 * self.m)
            e_im = [0] * (2 * self.m)
            e_re[2 * i] = 1
            e_im[2 * i + 1] = 1
            parts = []
            for off in (e_re, [-v for v in e_re], e_im, [-v for v in e_im]):
                t = self.member(off)
                parts.append((t.beta1, t.beta2, t.phi))
            for k in range(3):
                dre = (parts[0][k] - parts[1][k]) / (2 * self.delta)
                dim = (parts[2][k] - parts[3][k]) / (2 * self.delta)
                worst = max(worst, float(np.max(np.abs(0.5 * (dre + 1j * dim)))))
        return worst


def linear_deformation(center: Triple, directions: Sequence[Direction]) -> Deformation:
    def deform(s):
        b1, b2, phi = center.beta1.copy(), center.beta2.copy(), center.phi.copy()
        for si, d in zip(s, directions):
            if d.dbeta1 is not None:
                b1 = b1 + si * d.dbeta1
            if d.dbeta2 is not None:
                b2 = b2 + si * d.dbeta2
            if d.dphi is not None:
                phi = phi + si * d.dphi
        return b1, b2, phi

    return deform


def _check_direction(base, center: Triple, d: Direction, tol):
    zero1 = np.zeros_like(center.beta1)
    zero2 = np.zeros_like(center.beta2)
    db1 = zero1 if d.dbeta1 is None else d.dbeta1
    db2 = zero2 if d.dbeta2 is None else d.dbeta2
    dphi = np.zeros_like(center.phi) if d.dphi is None else d.dphi
    # first order: dbar dphi + db1 phi + beta1 dphi - dphi beta2 - phi db2 = 0
    first = bundles.cov_dzbar(base, dphi, center.beta1, center.beta2) + db1 @ center.phi - center.phi @ db2
    second = db1 @ dphi - dphi @ db2
    # for n = 1 every (0,1)-form is dbar-closed; the beta-bumps must still be
    # compatible with phi, which is what the two orders above test
    res = max(float(np.max(np.abs(first))), float(np.max(np.abs(second))))
    if res > tol:
        raise HolomorphyError(f"direction breaks holomorphy of phi: residual {res:.3e}")


def make_family(center: Triple, directions, delta: float, m: int | None = None, extent: int = 2,
                tol: float = HOLOMORPHY_TOL, summands=None, projectors=None) -> TripleFamily:
    """Build a family from linear directions or from a holomorphic deformation callable."""
    if callable(directions):
        if m is None:
            raise ValueError("m is required with a deformation callable")
        deform = directions
    else:
        directions = list(directions)
        m = len(directions) if m is None else m
        if m != len(directions):
            raise DimensionError("m does not match the number of directions")
        for d in directions:
            _check_direction(center.base, center, d, tol)
        deform = linear_deformation(center, directions)
    center.check(tol)
    fam = TripleFamily(center, deform, m, delta, extent=extent, summands=summands, projectors=projectors)
    for off in [fam.center] + [tuple((1 if k == a else 0) * sgn for k in range(2 * m))
                               for a in range(2 * m) for sgn in (1, -1)]:
        res = fam.member(off).holomorphy_residual()
        if res > tol:
            raise HolomorphyError(f"family member {off} is not holomorphic: residual {res:.3e}")
    return fam

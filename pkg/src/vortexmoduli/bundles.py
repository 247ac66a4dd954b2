"""Hermitian holomorphic bundles of trivial topological type on the torus.

A rank-r bundle is C^r with dbar-operator dbar_0 + beta, beta an r x r matrix
field (the coefficient of dzbar).  Sections are column vectors, so matrices
compose in endomorphism order.  A Hermitian metric is a field h of positive
definite Hermitian matrices with <s, t>_h = t^dagger h s.

Chern connection (1,0)-part:   A = h^-1 d_z h - h^-1 beta^dagger h
Curvature (dz ^ dzbar coeff.): R = d_z beta - d_zbar A + [A, beta]

With these conventions sqrt(-1) Lambda Omega = R / g and the degree is
(2 pi)^-1 times the integral of tr(R / g).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConnectionError_, DimensionError, MetricError
from .torus import TorusBase

PIVOT_TOL = 1e-12


def dag(x):
    return np.conj(np.swapaxes(x, -1, -2))


def comm(x, y):
    return x @ y - y @ x


def identity_field(base: TorusBase, rank: int) -> np.ndarray:
    return np.broadcast_to(np.eye(rank, dtype=complex), base.shape + (rank, rank)).copy()


def constant_field(base: TorusBase, matrix) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    return np.broadcast_to(matrix, base.shape + matrix.shape).copy()


@dataclass(frozen=True)
class HolomorphicStructure:
    rank: int
    beta: np.ndarray

    def __post_init__(self):
        if self.beta.shape[-2:] != (self.rank, self.rank):
            raise DimensionError("beta must be rank x rank")

    @classmethod
    def trivial(cls, base: TorusBase, rank: int) -> "HolomorphicStructure":
        return cls(rank, np.zeros(base.shape + (rank, rank), dtype=complex))


@dataclass(frozen=True)
class HermitianMetric:
    h: np.ndarray

    def __post_init__(self):
        check_positive(self.h)

    @property
    def rank(self) -> int:
        return self.h.shape[-1]

    @classmethod
    def flat(cls, base: TorusBase, rank: int, scale: float = 1.0) -> "HermitianMetric":
        return cls(scale * identity_field(base, rank))

    def retwist(self, psi) -> "HermitianMetric":
        """The metric h~(s, t) = h(psi s, t), i.e. h~ = h psi."""
        return HermitianMetric(hermitian_part(self.h @ psi))


@dataclass(frozen=True)
class CurvatureField:
    R: np.ndarray
    trace_integral: complex

    @property
    def degree(self) -> float:
        return float((self.trace_integral / (2 * np.pi)).real)


def hermitian_part(x):
    return 0.5 * (x + dag(x))


def check_positive(h, tol: float = PIVOT_TOL):
    """Cholesky every node; the smallest pivot must exceed tol (relative to the largest)."""
    h = np.asarray(h)
    if h.shape[-1] != h.shape[-2]:
        raise DimensionError("metric fields must be square")
    if np.max(np.abs(h - dag(h))) > 1e-10 * max(1.0, np.max(np.abs(h))):
        raise MetricError("metric is not Hermitian")
    try:
        chol = np.linalg.cholesky(hermitian_part(h))
    except np.linalg.LinAlgError as exc:
        raise MetricError("metric is not positive definite") from exc
    piv = np.abs(np.diagonal(chol, axis1=-2, axis2=-1)) ** 2
    if not np.all(np.isfinite(piv)) or piv.min() <= tol * max(piv.max(), 1.0):
        raise MetricError(f"metric degenerate: smallest pivot {piv.min():.3e}")
    return chol


def _as_h(metric):
    return metric.h if isinstance(metric, HermitianMetric) else np.asarray(metric)


def _as_beta(structure):
    return structure.beta if isinstance(structure, HolomorphicStructure) else np.asarray(structure)


def chern_connection(base: TorusBase, structure, metric) -> np.ndarray:
    """dz-coefficient A of the Chern connection's (1,0)-part."""
    h = _as_h(metric)
    beta = _as_beta(structure)
    check_positive(h)
    hinv = np.linalg.inv(h)
    return hinv @ base.dz(h) - hinv @ dag(beta) @ h


def curvature_from_connection(base: TorusBase, beta, A) -> np.ndarray:
    return base.dz(beta) - base.dzbar(A) + comm(A, beta)


def curvature(base: TorusBase, structure, metric) -> CurvatureField:
    beta = _as_beta(structure)
    A = chern_connection(base, beta, metric)
    R = curvature_from_connection(base, beta, A)
    tr = np.trace(R, axis1=-2, axis2=-1) / base.g_coeff
    return CurvatureField(R, complex(base.integral(tr)))


def contract(base: TorusBase, R) -> np.ndarray:
    """sqrt(-1) Lambda of an End-valued (1,1)-form given by its dz^dzbar coefficient."""
    return R / base.g_coeff


def adjoint_hom(phi, h1, h2) -> np.ndarray:
    """Adjoint of phi: E2 -> E1, i.e. phi^* = h2^-1 phi^dagger h1."""
    phi, h1, h2 = np.asarray(phi), _as_h(h1), _as_h(h2)
    if phi.shape[-2] != h1.shape[-1] or phi.shape[-1] != h2.shape[-1]:
        raise DimensionError(f"phi {phi.shape[-2:]} incompatible with ranks {h1.shape[-1]}, {h2.shape[-1]}")
    return np.linalg.solve(h2, dag(phi) @ h1)


def adjoint(x, h_target, h_source) -> np.ndarray:
    """Adjoint of x: E_source -> E_target as a map E_target -> E_source."""
    return np.linalg.solve(_as_h(h_source), dag(x) @ _as_h(h_target))


def retwist_connection(base: TorusBase, A, psi) -> np.ndarray:
    """Connection of h psi in terms of that of h: A + psi^-1 (d_A psi)."""
    return A + np.linalg.solve(psi, base.dz(psi) + comm(A, psi))


# covariant derivatives -------------------------------------------------------


def cov_dz(base: TorusBase, x, A_left=None, A_right=None):
    """(1,0) covariant derivative of a Hom(E_right, E_left)-valued field.

    Pass None for a slot that is absent (a section has no right slot); a slot
    that is present but has no connection raises.
    """
    out = base.dz(x)
    if A_left is not None:
        out = out + A_left @ x
    if A_right is not None:
        out = out - x @ A_right
    return out


def cov_dzbar(base: TorusBase, x, beta_left=None, beta_right=None):
    out = base.dzbar(x)
    if beta_left is not None:
        out = out + beta_left @ x
    if beta_right is not None:
        out = out - x @ beta_right
    return out


def covariant_derivative(base: TorusBase, x, connections, direction: str):
    """Covariant derivative of a section (connections of length 1) or a tensor (length 2).

    connections holds (A, beta) pairs, one per bundle slot: left slot first.
    direction is 'z' or 'zbar'.
    """
    if len(connections) == 0 or any(c is None for c in connections):
        raise ConnectionError_("missing connection for a tensor slot")
    left = connections[0]
    right = connections[1] if len(connections) > 1 else None
    if direction == "z":
        return cov_dz(base, x, left[0], None if right is None else right[0])
    if direction == "zbar":
        return cov_dzbar(base, x, left[1], None if right is None else right[1])
    raise ValueError(f"direction must be 'z' or 'zbar', got {direction!r}")


def commutator_defect(base: TorusBase, psi, conn_left, conn_right, R_left, R_right):
    """psi_{;z zbar} - psi_{;zbar z} + [R, psi] for psi in Hom(E_right, E_left).

    The subscript order follows the semicolon convention: psi_{;a b} differentiates
    in a first.  The result vanishes identically for the Chern connections.
    """
    A1, b1 = conn_left
    A2, b2 = conn_right
    d_z = cov_dz(base, psi, A1, A2)
    d_zb = cov_dzbar(base, psi, b1, b2)
    psi_z_zbar = cov_dzbar(base, d_z, b1, b2)
    psi_zbar_z = cov_dz(base, d_zb, A1, A2)
    return psi_z_zbar - psi_zbar_z + (R_left @ psi - psi @ R_right)


def holomorphy_residual(base: TorusBase, phi, structure1, structure2) -> float:
    """sup-norm of dbar phi + beta1 phi - phi beta2."""
    b1, b2 = _as_beta(structure1), _as_beta(structure2)
    phi = np.asarray(phi)
    if phi.shape[-2] != b1.shape[-1] or phi.shape[-1] != b2.shape[-1]:
        raise DimensionError("phi shape incompatible with the structures")
    return float(np.max(np.abs(cov_dzbar(base, phi, b1, b2))))


def hsqrt(h):
    """Hermitian square root and its inverse of a positive Hermitian field."""
    w, v = np.linalg.eigh(hermitian_part(h))
    if w.min() <= 0:
        raise MetricError("metric is not positive definite")
    s = np.sqrt(w)
    root = (v * s[..., None, :]) @ dag(v)
    iroot = (v / s[..., None, :]) @ dag(v)
    return root, iroot

"""Coupled vortex equations: residuals, the F-map, its linearisation and a Newton solver.

Metrics are reparametrised as h~ = h psi with psi self-adjoint and positive
with respect to the reference metric h.  Newton steps move h -> h exp(chi),
written in "hat" coordinates chi = h^{-1/2} K h^{1/2} with K Hermitian so
that the h-inner product becomes the Euclidean one on K.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import bundles
from .bundles import dag, hermitian_part
from .errors import DegenerationError, MetricError, NonConvergenceError
from .torus import TorusBase
from .triples import Triple

KH_HINT = ("no solution was found; by the Kobayashi-Hitchin correspondence this is expected "
           "when the triple is not alpha-polystable")
GAUGE_NOTE = "gauge pinned: integral of tr psi1 + tr psi2 held at its initial value"


@dataclass
class ResidualReport:
    rho1: np.ndarray
    rho2: np.ndarray
    sup_norm: float
    trace_integral: complex

    def summary(self) -> dict:
        return {"sup_norm": self.sup_norm,
                "trace_integral": [self.trace_integral.real, self.trace_integral.imag]}


@dataclass
class SolverState:
    psi1: np.ndarray
    psi2: np.ndarray
    gauge_integral: float


@dataclass
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 40
    cg_tol: float = 1e-10
    cg_maxiter: int = 500
    lm_shift: float = 1.0
    armijo: float = 1e-4
    min_step: float = 1.0 / 64
    collapse: float = 1e-12
    max_log_step: float = 30.0
    # a converged iterate must also have stopped moving: sup of the last log-metric update
    settle: float = 1e-4


# residuals -------------------------------------------------------------------

def _sup(x) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def residual_fields(base: TorusBase, beta1, beta2, phi, h1, h2, tau1, tau2):
    R1 = bundles.curvature_from_connection(base, beta1, bundles.chern_connection(base, beta1, h1))
    R2 = bundles.curvature_from_connection(base, beta2, bundles.chern_connection(base, beta2, h2))
    phistar = bundles.adjoint_hom(phi, h1, h2)
    r1, r2 = h1.shape[-1], h2.shape[-1]
    rho1 = R1 / base.g_coeff + phi @ phistar - tau1 * np.eye(r1)
    rho2 = R2 / base.g_coeff - phistar @ phi - tau2 * np.eye(r2)
    return rho1, rho2


def _report(base, rho1, rho2) -> ResidualReport:
    tr = np.trace(rho1, axis1=-2, axis2=-1) + np.trace(rho2, axis1=-2, axis2=-1)
    return ResidualReport(rho1, rho2, max(_sup(rho1), _sup(rho2)), complex(base.integral(tr)))


def vortex_residual(triple: Triple) -> ResidualReport:
    t1, t2 = triple.taus
    rho1, rho2 = residual_fields(triple.base, triple.beta1, triple.beta2, triple.phi,
                                 triple.h1, triple.h2, t1, t2)
    return _report(triple.base, rho1, rho2)


def f_map(triple: Triple, state: SolverState):
    """(psi1 rho~1, psi2 rho~2, integral of tr psi1 + tr psi2) for h~ = h psi."""
    for psi, h in ((state.psi1, triple.h1), (state.psi2, triple.h2)):
        # psi is h-self-adjoint and positive iff h psi is Hermitian positive
        try:
            bundles.check_positive(h @ psi)
        except MetricError as exc:
            raise DegenerationError(f"state is not positive: {exc}") from exc
    h1t = hermitian_part(triple.h1 @ state.psi1)
    h2t = hermitian_part(triple.h2 @ state.psi2)
    rho1, rho2 = residual_fields(triple.base, triple.beta1, triple.beta2, triple.phi, h1t, h2t, *triple.taus)
    tr = np.trace(state.psi1, axis1=-2, axis2=-1) + np.trace(state.psi2, axis1=-2, axis2=-1)
    return state.psi1 @ rho1, state.psi2 @ rho2, float(triple.base.integral(tr).real)


# linearisation ----------------------------------------------------------------

def dz_cov(base, chi, A):
    return base.dz(chi) + bundles.comm(A, chi)


def dz_cov_adjoint(base, y, beta):
    """L2 adjoint of chi -> d_z chi + [A, chi] for the Chern connection of (beta, h).

    With the pairing tr(X Y^*) this is -(d_zbar y + [beta, y]) / g, independent of h.
    """
    return -(base.dzbar(y) + bundles.comm(beta, y)) / base.g_coeff


def _self_adjoint_defect(chi, h):
    hc = h @ chi
    return _sup(hc - dag(hc)) / max(1.0, _sup(hc))


def _df0_data(triple: Triple):
    base = triple.base
    return (bundles.chern_connection(base, triple.beta1, triple.h1),
            bundles.chern_connection(base, triple.beta2, triple.h2),
            bundles.adjoint_hom(triple.phi, triple.h1, triple.h2))


def linearized_df0(triple: Triple, chi1, chi2, check: bool = True, data=None):
    """DF_0 at the metrics carried by the triple."""
    base = triple.base
    if check:
        for chi, h in ((chi1, triple.h1), (chi2, triple.h2)):
            if _self_adjoint_defect(chi, h) > 1e-10:
                raise ValueError("chi must be self-adjoint with respect to the metric")
    A1, A2, phistar = data if data is not None else _df0_data(triple)
    phi = triple.phi
    w = phistar @ chi1 - chi2 @ phistar
    L1 = dz_cov_adjoint(base, dz_cov(base, chi1, A1), triple.beta1) + phi @ w
    L2 = dz_cov_adjoint(base, dz_cov(base, chi2, A2), triple.beta2) - w @ phi
    tr = np.trace(chi1, axis1=-2, axis2=-1) + np.trace(chi2, axis1=-2, axis2=-1)
    return L1, L2, complex(base.integral(tr))


def l2_inner(base, x, y, hx, hy=None):
    """<x, y> = integral tr(x y^*) for Hom(E_b, E_a) fields; hx = h_a, hy = h_b."""
    ystar = bundles.adjoint(y, hx, hy if hy is not None else hx)
    return complex(base.integral(np.einsum("...ij,...ji->...", x, ystar)))


def energy_terms(triple: Triple, chi1, chi2):
    """The three squared norms on the right of the DF_0 energy identity."""
    base = triple.base
    A1 = bundles.chern_connection(base, triple.beta1, triple.h1)
    A2 = bundles.chern_connection(base, triple.beta2, triple.h2)
    d1, d2 = dz_cov(base, chi1, A1), dz_cov(base, chi2, A2)
    phistar = bundles.adjoint_hom(triple.phi, triple.h1, triple.h2)
    w = phistar @ chi1 - chi2 @ phistar
    n1 = l2_inner(base, d1, d1, triple.h1).real / base.g_coeff
    n2 = l2_inner(base, d2, d2, triple.h2).real / base.g_coeff
    n3 = l2_inner(base, w, w, triple.h2, triple.h1).real
    return n1, n2, n3


# solver -----------------------------------------------------------------------

class _HatSystem:
    """DF_0 + P in hat coordinates, P the projector onto (Id, Id)."""

    def __init__(self, triple: Triple, shift: float = 0.0):
        self.t = triple
        self.shift = shift
        self.base = triple.base
        self.r1, self.r2 = triple.ranks
        self.s1, self.is1 = bundles.hsqrt(triple.h1)
        self.s2, self.is2 = bundles.hsqrt(triple.h2)
        n = self.base.n_grid
        self.shape1 = (n, n, self.r1, self.r1)
        self.shape2 = (n, n, self.r2, self.r2)
        self.size1 = int(np.prod(self.shape1))
        self.dim = 2 * (self.size1 + int(np.prod(self.shape2)))
        lam = 1.0 + 2.0 * float(np.max(np.abs(triple.phi)) ** 2) * self._metric_spread()
        self.pre_symbol = 1.0 / (self.base.symbol_laplacian + lam + shift)
        self.id_norm2 = (self.r1 + self.r2) * n * n
        self.data = _df0_data(triple)
        self.n_matvec = 0

    def _metric_spread(self):
        w1 = np.linalg.eigvalsh(self.t.h1)
        w2 = np.linalg.eigvalsh(self.t.h2)
        return max(w1.max() / w2.min(), 1.0)

    def unpack(self, v):
        c = v.view(complex)
        return c[: self.size1].reshape(self.shape1), c[self.size1:].reshape(self.shape2)

    @staticmethod
    def pack(k1, k2):
        return np.concatenate([k1.ravel(), k2.ravel()]).view(float)

    def to_chi(self, k1, k2):
        return self.is1 @ k1 @ self.s1, self.is2 @ k2 @ self.s2

    def to_hat(self, x1, x2):
        return self.s1 @ x1 @ self.is1, self.s2 @ x2 @ self.is2

    def _id_coeff(self, k1, k2):
        tr = np.trace(k1, axis1=-2, axis2=-1).sum() + np.trace(k2, axis1=-2, axis2=-1).sum()
        return tr.real / self.id_norm2

    def matvec(self, v):
        k1, k2 = self.unpack(np.asarray(v, float).copy())
        k1, k2 = hermitian_part(k1), hermitian_part(k2)
        c1, c2 = self.to_chi(k1, k2)
        self.n_matvec += 1
        L1, L2, _ = linearized_df0(self.t, c1, c2, check=False, data=self.data)
        o1, o2 = self.to_hat(L1, L2)
        a = self._id_coeff(k1, k2)
        o1 = hermitian_part(o1) + a * np.eye(self.r1) + self.shift * k1
        o2 = hermitian_part(o2) + a * np.eye(self.r2) + self.shift * k2
        return self.pack(o1, o2)

    def precondition(self, v):
        k1, k2 = self.unpack(np.asarray(v, float).copy())
        p1 = self.base.fourier_multiply(k1, self.pre_symbol)
        p2 = self.base.fourier_multiply(k2, self.pre_symbol)
        return self.pack(hermitian_part(p1), hermitian_part(p2))

    def solve(self, rhs1, rhs2, cfg: SolverConfig):
        # the h-anti-self-adjoint part of the residual is aliasing error outside the range
        b = self.pack(*[hermitian_part(x) for x in self.to_hat(rhs1, rhs2)])
        op = LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=float)
        pre = LinearOperator((self.dim, self.dim), matvec=self.precondition, dtype=float)
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            z1, z2 = np.zeros(self.shape1, complex), np.zeros(self.shape2, complex)
            self.decrement = 0.0
            return z1, z2, 0
        # below ~tol/100 per node the linear solve cannot improve the Newton step
        atol = max(1e-15 * bnorm, 1e-2 * cfg.tol * self.base.n_grid)
        x, info = cg(op, b, rtol=cfg.cg_tol, atol=atol, maxiter=cfg.cg_maxiter, M=pre)
        if not np.all(np.isfinite(x)):
            raise DegenerationError("linear solve broke down")
        # Newton decrement: RMS energy norm of the step, blind to kernel directions
        self.decrement = float(np.sqrt(abs(x @ b) / (self.base.n_grid**2)))
        k1, k2 = self.unpack(x.copy())
        k1, k2 = hermitian_part(k1), hermitian_part(k2)
        a = self._id_coeff(k1, k2)
        # drop the (Id, Id) component; the gauge is fixed by rescaling afterwards
        return k1 - a * np.eye(self.r1), k2 - a * np.eye(self.r2), info


def _exp_update(h, k, t, cfg):
    """h^{1/2} exp(t k) h^{1/2} and the sup of |t k| (the log-metric step)."""
    s, _ = bundles.hsqrt(h)
    w, v = np.linalg.eigh(hermitian_part(k))
    step = t * float(np.max(np.abs(w))) if np.all(np.isfinite(w)) else np.inf
    if step > cfg.max_log_step:
        raise DegenerationError("Newton increment overflowed: metric is degenerating")
    e = (v * np.exp(t * w)[..., None, :]) @ dag(v)
    return hermitian_part(s @ e @ s), step


def _pin(base, h1, h2, href1, href2, target):
    psi1 = np.linalg.solve(href1, h1)
    psi2 = np.linalg.solve(href2, h2)
    tr = np.trace(psi1, axis1=-2, axis2=-1) + np.trace(psi2, axis1=-2, axis2=-1)
    c = target / float(base.integral(tr).real)
    return c * h1, c * h2


def _check_collapse(h1, h2, cfg):
    for h in (h1, h2):
        w = np.linalg.eigvalsh(h)
        if not np.all(np.isfinite(w)) or w.min() <= cfg.collapse * w.max():
            raise DegenerationError("metric eigenvalues collapsed")


def _l2(base, rep: ResidualReport):
    return float(np.sqrt(base.integral(np.sum(np.abs(rep.rho1) ** 2, axis=(-2, -1))
                                       + np.sum(np.abs(rep.rho2) ** 2, axis=(-2, -1))).real))


def _drift_message(rep, step):
    return (f"residual {rep.sup_norm:.3e} decays only because the metric keeps moving by a fixed factor "
            f"(log step {step:.3f}); it drifts to the boundary")


def solve_coupled_vortex(triple: Triple, config: SolverConfig | None = None):
    """Damped Newton iteration on DF_0 starting from psi = (Id, Id).

    Returns (h1, h2, report, trace) where trace lists one record per iterate.
    Raises NonConvergenceError or DegenerationError (both carry .report).
    """
    cfg = config or SolverConfig()
    base = triple.base
    r1, r2 = triple.ranks
    href1, href2 = triple.h1, triple.h2
    target = float(base.vol_norm * (r1 + r2))
    h1, h2 = href1.copy(), href2.copy()
    trace: list[dict] = []

    def failure(kind, msg, rep):
        info = {"status": kind, "message": msg, "hint": KH_HINT, "gauge": GAUGE_NOTE, "trace": trace,
                "last_sup_norm": None if rep is None else rep.sup_norm}
        cls = DegenerationError if kind == "degenerate" else NonConvergenceError
        return cls(f"{msg}; {KH_HINT}", report=info)

    cur = triple.with_metrics(h1, h2)
    rep = vortex_residual(cur)
    increment = np.inf
    moved = 0.0  # last non-zero log-metric step
    log_steps: list[float] = []
    stalled = 0
    for it in range(cfg.max_iter + 1):
        trace.append({"iter": it, "sup_norm": rep.sup_norm,
                      "trace_integral": abs(rep.trace_integral),
                      "increment": None if not np.isfinite(increment) else increment})
        # a degenerating metric can drive the residual to zero while moving by a
        # fixed factor per step; only a settled iterate counts as a solution
        if rep.sup_norm <= cfg.tol and increment <= cfg.tol:
            if moved <= cfg.settle:
                return h1, h2, rep, trace
            if log_steps and log_steps[-1] == 0.0:
                raise failure("degenerate", _drift_message(rep, moved), rep)
        if it == cfg.max_iter:
            break
        try:
            # Levenberg shift: polystable triples carry extra near-kernel directions
            sys_ = _HatSystem(cur, cfg.lm_shift * min(rep.sup_norm, 1e-2))
            k1, k2, info = sys_.solve(-rep.rho1, -rep.rho2, cfg)
            merit = _l2(base, rep)
            t = 1.0
            while True:
                n1, l1 = _exp_update(h1, k1, t, cfg)
                n2, l2 = _exp_update(h2, k2, t, cfg)
                n1, n2 = _pin(base, n1, n2, href1, href2, target)
                _check_collapse(n1, n2, cfg)
                cand = triple.with_metrics(n1, n2)
                new = vortex_residual(cand)
                if _l2(base, new) <= (1 - cfg.armijo * t) * merit or t <= cfg.min_step or merit == 0.0:
                    break
                t *= 0.5
        except (DegenerationError, MetricError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise failure("degenerate", f"iteration {it}: {exc}", rep) from None
        increment = t * sys_.decrement
        log_step = max(l1, l2)
        log_steps.append(log_step)
        if log_step > 0.0:
            moved = log_step
        trace[-1].update(step=t, log_step=log_step, cg_info=int(info), matvecs=sys_.n_matvec)
        stalled = stalled + 1 if t <= cfg.min_step and new.sup_norm >= rep.sup_norm else 0
        h1, h2, cur, rep = n1, n2, cand, new
        if stalled >= 3:
            raise failure("nonconvergent", f"Newton stalled at residual {rep.sup_norm:.3e}", rep)
        if not np.isfinite(rep.sup_norm):
            raise failure("degenerate", "residual overflow", rep)
    tail = log_steps[-5:]
    if rep.sup_norm <= 1e3 * cfg.tol and len(tail) == 5 and min(tail) > 0.5 * max(tail) and min(tail) > cfg.settle:
        raise failure("degenerate", _drift_message(rep, tail[-1]), rep)
    raise failure("nonconvergent", f"no convergence after {cfg.max_iter} Newton steps", rep)


def solver_state(triple: Triple, h1, h2) -> SolverState:
    psi1 = np.linalg.solve(triple.h1, h1)
    psi2 = np.linalg.solve(triple.h2, h2)
    tr = np.trace(psi1, axis1=-2, axis2=-1) + np.trace(psi2, axis1=-2, axis2=-1)
    return SolverState(psi1, psi2, float(triple.base.integral(tr).real))


def solve_triple(triple: Triple, config: SolverConfig | None = None) -> Triple:
    h1, h2, _, _ = solve_coupled_vortex(triple, config)
    return triple.with_metrics(h1, h2)


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)

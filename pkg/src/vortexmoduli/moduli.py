"""Kodaira-Spencer representatives, the moduli metric and its curvature.

Members of a family are solved lazily on the integer lattice of offsets
(see TripleFamily).  Derivatives in s are second-order central differences:
for a real axis a, D_a F = (F(+e_a) - F(-e_a)) / (2 delta), and

    d/ds_i = (D_{2i} - sqrt(-1) D_{2i+1}) / 2,   d/dsbar_i = (D_{2i} + sqrt(-1) D_{2i+1}) / 2.

Everything is computed from grid data (also the s-derivatives of beta and
phi).  Quantities needing two s-derivatives are either nested (first
differences of first differences) or compact (three/four point stencils);
both are O(delta^2).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import bundles
from .bundles import comm
from .errors import (DegenerateFamilyError, GridError, NonConvergenceError, PreconditionError)
from .hodge import C0Element, C1Element, C2Element, HodgeComplex
from .triples import Triple, TripleFamily
from .vortex import SolverConfig, solve_coupled_vortex

FAMILY_SOLVER = SolverConfig(tol=1e-10, max_iter=40)


@dataclass
class KSRep:
    mu: C1Element
    direction: int
    delta: float
    projection_distance: float | None = None


@dataclass
class ModuliTensors:
    G: np.ndarray
    R: np.ndarray
    terms: dict = field(default_factory=dict)
    identity_residuals: dict = field(default_factory=dict)


def _lin(coeffs, values):
    """sum c_k v_k for arrays, C-elements or tuples of those."""
    out = None
    for c, v in zip(coeffs, values):
        if c == 0:
            continue
        if isinstance(v, tuple):
            term = tuple(c * x for x in v)
            out = term if out is None else tuple(a + b for a, b in zip(out, term))
        else:
            term = c * v
            out = term if out is None else out + term
    return out


def pin_summands(raw: Triple, h1, h2, projectors):
    """Rescale each summand so that its trace share against the reference metrics equals its rank times the volume.

    Each (P1, P2) must be an idempotent automorphism orthogonal for (h1, h2);
    rescaling along it maps solutions to solutions.
    """
    base = raw.base
    ref1, ref2 = np.linalg.inv(raw.h1), np.linalg.inv(raw.h2)
    scale1 = np.zeros_like(h1)
    scale2 = np.zeros_like(h2)
    for P1, P2 in projectors:
        w = base.integral(np.einsum("...ij,...jk,...ki->...", P1, ref1, h1)
                          + np.einsum("...ij,...jk,...ki->...", P2, ref2, h2)).real
        target = base.integral(np.trace(P1, axis1=-2, axis2=-1) + np.trace(P2, axis1=-2, axis2=-1)).real
        lam = target / w
        scale1 = scale1 + lam * P1
        scale2 = scale2 + lam * P2
    return bundles.hermitian_part(h1 @ scale1), bundles.hermitian_part(h2 @ scale2)


class ModuliGeometry:
    """Finite-difference geometry of a solved family around its centre."""

    def __init__(self, family: TripleFamily, solver: SolverConfig | None = None, solve: bool = True,
                 hodge_kw: dict | None = None):
        self.family = family
        self.m = family.m
        self.delta = family.delta
        self.solver = solver or FAMILY_SOLVER
        self.solve = solve
        self.hodge_kw = hodge_kw or {}
        self._solved: dict[tuple, Triple] = {}
        self._hodge: dict[tuple, HodgeComplex] = {}
        self._cache: dict = {}
        self.center = family.center

    # members --------------------------------------------------------------

    def _off(self, at, axis, k):
        o = list(at)
        o[axis] += k
        return tuple(o)

    def triple(self, at) -> Triple:
        at = tuple(at)
        if at not in self._solved:
            raw = self.family.member(at)
            if not self.solve:
                self._solved[at] = raw
            else:
                if at == self.center:
                    start = raw
                else:
                    c = self.triple(self.center)
                    start = raw.with_metrics(c.h1, c.h2)
                try:
                    h1, h2, _, _ = solve_coupled_vortex(start, self.solver)
                except NonConvergenceError as exc:
                    raise PreconditionError(f"family member {at} could not be solved: {exc}") from exc
                if self.family.projectors is not None:
                    h1, h2 = pin_summands(raw, h1, h2, self.family.projectors(self.family.s_of(at)))
                self._solved[at] = raw.with_metrics(h1, h2)
        return self._solved[at]

    def hodge(self, at=None) -> HodgeComplex:
        at = self.center if at is None else tuple(at)
        if at not in self._hodge:
            self._hodge[at] = HodgeComplex(self.triple(at), **self.hodge_kw)
        return self._hodge[at]

    @property
    def solved_offsets(self):
        return sorted(self._solved)

    # finite differences ---------------------------------------------------

    def d_axis(self, F, axis, at):
        return _lin([0.5 / self.delta, -0.5 / self.delta], [F(self._off(at, axis, 1)), F(self._off(at, axis, -1))])

    def d_hol(self, F, i, at):
        return _lin([0.5, -0.5j], [self.d_axis(F, 2 * i, at), self.d_axis(F, 2 * i + 1, at)])

    def d_antihol(self, F, i, at):
        return _lin([0.5, 0.5j], [self.d_axis(F, 2 * i, at), self.d_axis(F, 2 * i + 1, at)])

    def dd_axes(self, F, a, b, at):
        """Compact D_a D_b."""
        d2 = self.delta**2
        if a == b:
            return _lin([1 / d2, -2 / d2, 1 / d2], [F(self._off(at, a, 1)), F(at), F(self._off(at, a, -1))])
        pts = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
        vals = [F(self._off(self._off(at, a, sa), b, sb)) for sa, sb, _ in pts]
        return _lin([c / (4 * d2) for _, _, c in pts], vals)

    def dd_hol_antihol(self, F, i, j, at):
        """Compact d/ds_i d/dsbar_j."""
        xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
        if i == j:
            return _lin([0.25, 0.25], [self.dd_axes(F, xi, xi, at), self.dd_axes(F, yi, yi, at)])
        return _lin([0.25, 0.25, 0.25j, -0.25j],
                    [self.dd_axes(F, xi, xj, at), self.dd_axes(F, yi, yj, at),
                     self.dd_axes(F, xi, yj, at), self.dd_axes(F, yi, xj, at)])

    # pointwise data ---------------------------------------------------------

    def _metrics(self, at):
        t = self.triple(at)
        return (t.h1, t.h2)

    def _data(self, at):
        t = self.triple(at)
        return (t.beta1, t.beta2, t.phi)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def A_s(self, i, at):
        """(h1^{-1} d_i h1, h2^{-1} d_i h2)."""
        def make():
            dh1, dh2 = self.d_hol(self._metrics, i, at)
            h1, h2 = self._metrics(at)
            return np.linalg.solve(h1, dh1), np.linalg.solve(h2, dh2)
        return self._cached(("A_s", i, tuple(at)), make)

    def A_z(self, at):
        def make():
            t = self.triple(at)
            return (bundles.chern_connection(t.base, t.beta1, t.h1), bundles.chern_connection(t.base, t.beta2, t.h2))
        return self._cached(("A_z", tuple(at)), make)

    def R_s_zbar(self, i, at):
        """Mixed curvature d_i beta - d_zbar A_i + [A_i, beta] for both bundles."""
        def make():
            base = self.family.base
            db1, db2, _ = self.d_hol(self._data, i, at)
            A1, A2 = self.A_s(i, at)
            b1, b2, _ = self._data(at)
            return (db1 - base.dzbar(A1) + comm(A1, b1), db2 - base.dzbar(A2) + comm(A2, b2))
        return self._cached(("Rsz", i, tuple(at)), make)

    def Phi_s(self, i, at):
        def make():
            _, _, dphi = self.d_hol(self._data, i, at)
            A1, A2 = self.A_s(i, at)
            phi = self.triple(at).phi
            return dphi + A1 @ phi - phi @ A2
        return self._cached(("Phis", i, tuple(at)), make)

    def mu(self, i, at=None) -> C1Element:
        at = self.center if at is None else tuple(at)
        R1, R2 = self.R_s_zbar(i, at)
        return C1Element(-self.Phi_s(i, at), R1, R2)

    def R_ss(self, i, j, at=None) -> C0Element:
        """R_{i jbar} = -d_jbar A_i by the compact stencil for h."""
        at = self.center if at is None else tuple(at)
        h = self._metrics(at)
        dh_i = self.d_hol(self._metrics, i, at)
        dh_jb = self.d_antihol(self._metrics, j, at)
        ddh = self.dd_hol_antihol(self._metrics, i, j, at)
        out = []
        for k in range(2):
            hinv = np.linalg.inv(h[k])
            out.append(hinv @ dh_jb[k] @ hinv @ dh_i[k] - hinv @ ddh[k])
        return C0Element(*out)

    def R_z_sbar(self, j, at=None):
        """R_{z jbar} = -d_jbar A_z."""
        at = self.center if at is None else tuple(at)
        dA = self.d_antihol(self.A_z, j, at)
        return (-dA[0], -dA[1])

    def act(self, A, x: C1Element) -> C1Element:
        """Infinitesimal gauge action of (A1, A2) on C1."""
        A1, A2 = A
        return C1Element(A1 @ x.a - x.a @ A2, comm(A1, x.b1), comm(A2, x.b2))

    def mu_cov(self, i, k, at=None) -> C1Element:
        """mu_{i;k}: covariant s_k-derivative of mu_i (nested stencil)."""
        at = self.center if at is None else tuple(at)
        return self.d_hol(lambda o: self.mu(i, o), k, at) + self.act(self.A_s(k, at), self.mu(i, at))

    def mu_antihol(self, i, j, at=None) -> C1Element:
        at = self.center if at is None else tuple(at)
        return self.d_antihol(lambda o: self.mu(i, o), j, at)

    # KS representatives and metric --------------------------------------------

    def ks_representative(self, i, project: bool = False) -> KSRep:
        mu = self.mu(i)
        dist = None
        if project:
            H = self.hodge()
            p = H.harmonic_projection(1, mu)
            dist = H.norm(mu - p)
            mu = p
        return KSRep(mu, i, self.delta, dist)

    def harmonicity_check(self, rep) -> tuple[float, float]:
        mu = rep.mu if isinstance(rep, KSRep) else self.mu(int(rep))
        H = self.hodge()
        return H.norm(H.d1(mu)), H.norm(H.d0_star(mu))

    def vm_metric(self, mu_i: C1Element, mu_j: C1Element) -> complex:
        return self.hodge().inner(mu_i, mu_j)

    def vm_metric_explicit(self, i, j) -> complex:
        """Sum of the Higgs-field term and the two curvature terms, written out."""
        t = self.triple(self.center)
        base = t.base
        Pi, Pj = self.Phi_s(i, self.center), self.Phi_s(j, self.center)
        Ri, Rj = self.R_s_zbar(i, self.center), self.R_s_zbar(j, self.center)
        val = base.integral(np.einsum("...ij,...ji->...", Pi, bundles.adjoint(Pj, t.h1, t.h2)))
        for k, h in enumerate((t.h1, t.h2)):
            val += base.integral(np.einsum("...ij,...ji->...", Ri[k], bundles.adjoint(Rj[k], h, h))) / base.g_coeff
        return complex(val)

    def metric(self, project: bool = True, at=None) -> np.ndarray:
        at = self.center if at is None else tuple(at)
        if at == self.center:
            mus = [self.ks_representative(i, project).mu for i in range(self.m)]
            H = self.hodge()
        else:
            mus = [self.mu(i, at) for i in range(self.m)]
            H = self.hodge(at)
        G = np.array([[H.inner(mus[i], mus[j]) for j in range(self.m)] for i in range(self.m)])
        return G

    def metric_at(self, at):
        """Unprojected metric at an offset; used by the finite-difference oracle."""
        return self._cached(("G", tuple(at)), lambda: self.metric(project=False, at=at)
                            if tuple(at) != self.center else self._center_raw_metric())

    def _center_raw_metric(self):
        H = self.hodge()
        mus = [self.mu(i) for i in range(self.m)]
        return np.array([[H.inner(mus[i], mus[j]) for j in range(self.m)] for i in range(self.m)])

    # products of Section-8 type ------------------------------------------------

    def bracket(self, x: C1Element, y: C1Element) -> C2Element:
        H = self.hodge()
        u = x.a @ y.b2 - y.b1 @ x.a + y.a @ x.b2 - x.b1 @ y.a
        z = H.zero(2)
        return C2Element(u, z.v1, z.v2)

    def dot(self, x: C1Element, y: C1Element) -> C0Element:
        t = self.triple(self.center)
        g = t.base.g_coeff
        ya_star = bundles.adjoint(y.a, t.h1, t.h2)
        yb1 = bundles.adjoint(y.b1, t.h1, t.h1)
        yb2 = bundles.adjoint(y.b2, t.h2, t.h2)
        return C0Element(x.a @ ya_star + comm(x.b1, yb1) / g, -ya_star @ x.a + comm(x.b2, yb2) / g)

    def trace_pairing(self, f: C0Element, f2: C0Element) -> complex:
        base = self.family.base
        tr = np.einsum("...ij,...ji->...", f.f1, f2.f1) + np.einsum("...ij,...ji->...", f.f2, f2.f2)
        return complex(base.integral(tr))

    # curvature -------------------------------------------------------------------

    def curvature_tensor(self, project: bool = True) -> ModuliTensors:
        m = self.m
        H = self.hodge()
        mus = [self.ks_representative(i, project).mu for i in range(m)]
        G = np.array([[H.inner(mus[i], mus[j]) for j in range(m)] for i in range(m)])
        br = {(i, k): self.bracket(mus[i], mus[k]) for i in range(m) for k in range(m)}
        gbr = {key: H.green(2, v) for key, v in br.items()}
        dots = {(i, j): self.dot(mus[i], mus[j]) for i in range(m) for j in range(m)}
        gdots = {key: H.green(0, v) for key, v in dots.items()}
        T1 = np.zeros((m,) * 4, complex)
        T2 = np.zeros_like(T1)
        T3 = np.zeros_like(T1)
        for i, j, k, l in itertools.product(range(m), repeat=4):
            T1[i, j, k, l] = -H.inner(br[(i, k)], gbr[(j, l)])
            T2[i, j, k, l] = self.trace_pairing(dots[(i, j)], gdots[(k, l)])
            T3[i, j, k, l] = self.trace_pairing(dots[(k, j)], gdots[(i, l)])
        R = T1 + T2 + T3
        return ModuliTensors(G, R, {"bracket_term": T1, "dot_term": T2, "dot_term_swapped": T3})

    def curvature_oracle(self) -> tuple[np.ndarray, dict]:
        """-d_k d_lbar G_{i jbar} + G^{p qbar} d_k G_{i qbar} d_lbar G_{p jbar} from metric differences."""
        m = self.m
        c = self.center
        G0 = self.metric_at(c)
        Ginv = np.linalg.inv(G0)
        dG = [self.d_hol(self.metric_at, k, c) for k in range(m)]
        dGb = [self.d_antihol(self.metric_at, l, c) for l in range(m)]
        ddG = {(k, l): self.dd_hol_antihol(self.metric_at, k, l, c) for k in range(m) for l in range(m)}
        second = np.zeros((m,) * 4, complex)
        first = np.zeros_like(second)
        for i, j, k, l in itertools.product(range(m), repeat=4):
            second[i, j, k, l] = -ddG[(k, l)][i, j]
            first[i, j, k, l] = sum(Ginv[q, p] * dG[k][i, q] * dGb[l][p, j] for p in range(m) for q in range(m))
        return second + first, {"second_derivative_term": second, "first_derivative_term": first}

    def bisectional_curvature(self, tensors: ModuliTensors, xi, eta) -> float:
        xi, eta = np.asarray(xi, complex), np.asarray(eta, complex)
        G = tensors.G
        if np.linalg.eigvalsh(0.5 * (G + G.conj().T)).min() <= 0:
            raise DegenerateFamilyError("moduli metric is not positive definite")
        num = np.einsum("ijkl,i,j,k,l->", tensors.R, xi, xi.conj(), eta, eta.conj())
        den = (xi @ G @ xi.conj()).real * (eta @ G @ eta.conj()).real
        return float((num / den).real)

    def semipositivity_scan(self, tensors: ModuliTensors, samples: int = 200, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        vals = []
        for _ in range(samples):
            xi = rng.standard_normal(self.m) + 1j * rng.standard_normal(self.m)
            eta = rng.standard_normal(self.m) + 1j * rng.standard_normal(self.m)
            vals.append(self.bisectional_curvature(tensors, xi / np.linalg.norm(xi), eta / np.linalg.norm(eta)))
        return {"min": float(min(vals)), "max": float(max(vals)), "samples": samples}

    # Section-8 identities ------------------------------------------------------

    def normal_coordinate_data(self, i, k):
        """mu_{i;k} corrected to normal coordinates: remove its component along span(mu_p)."""
        H = self.hodge()
        mus = [self.mu(p) for p in range(self.m)]
        G = np.array([[H.inner(mus[p], mus[q]) for q in range(self.m)] for p in range(self.m)])
        if np.linalg.cond(G) > 1e12:
            raise DegenerateFamilyError("moduli metric is singular at the centre")
        muik = self.mu_cov(i, k)
        b = np.array([H.inner(muik, mus[q]) for q in range(self.m)])
        coeff = np.linalg.solve(G.T, -b)
        out = muik
        for p in range(self.m):
            out = out + coeff[p] * mus[p]
        return out, coeff

    def identity_residuals(self) -> dict:
        """L2 norms of the Section-8 identities at the centre, one entry per identity."""
        H = self.hodge()
        m = self.m
        out = {"symmetry": 0.0, "d_mu_cov_plus_bracket": 0.0, "dstar_mu_cov": 0.0,
               "mu_antihol_minus_dR": 0.0, "laplace_R_minus_dot": 0.0, "normal_coordinates": 0.0,
               "harmonic_part_normal": 0.0}
        mus = [self.mu(i) for i in range(m)]
        for i, k in itertools.product(range(m), repeat=2):
            muik = self.mu_cov(i, k)
            out["symmetry"] = max(out["symmetry"], H.norm(muik - self.mu_cov(k, i)))
            br = self.bracket(mus[i], mus[k])
            out["d_mu_cov_plus_bracket"] = max(out["d_mu_cov_plus_bracket"], H.norm(H.d1(muik) + br))
            out["dstar_mu_cov"] = max(out["dstar_mu_cov"], H.norm(H.d0_star(muik)))
            nc, _ = self.normal_coordinate_data(i, k)
            rec = -H.d1_star(H.green(2, br))
            out["normal_coordinates"] = max(out["normal_coordinates"], H.norm(nc - rec))
            out["harmonic_part_normal"] = max(out["harmonic_part_normal"], H.norm(H.harmonic_projection(1, nc)))
        for i, j in itertools.product(range(m), repeat=2):
            Rij = self.R_ss(i, j)
            out["mu_antihol_minus_dR"] = max(out["mu_antihol_minus_dR"], H.norm(self.mu_antihol(i, j) - H.d0(Rij)))
            out["laplace_R_minus_dot"] = max(out["laplace_R_minus_dot"],
                                             H.norm(H.laplacian(0, Rij) - self.dot(mus[i], mus[j])))
        return out

    def identity_scales(self) -> dict:
        """Magnitudes of the individual terms, for relative reporting."""
        H = self.hodge()
        mus = [self.mu(i) for i in range(self.m)]
        cov = max(H.norm(self.mu_cov(i, k)) for i in range(self.m) for k in range(self.m))
        return {"mu": max(H.norm(x) for x in mus), "mu_cov": cov}

    # fiber integral ----------------------------------------------------------------

    def fiber_integral_check(self) -> dict:
        """Compare G_{s sbar} with the fibre integral of the total-space curvature.

        All values are coefficients of sqrt(-1) ds ^ dsbar.  Needs a one-direction
        family and offsets up to +-1 in both real axes.
        """
        if self.m != 1:
            raise GridError("the fibre-integral check needs a one-direction family")
        if self.family.extent < 1:
            raise GridError("the s-grid must be at least 3 x 3")
        c = self.center
        t = self.triple(c)
        base = t.base
        g = base.g_coeff
        G = self.metric(project=False)[0, 0].real
        Rsz = self.R_s_zbar(0, c)
        Rzs = self.R_z_sbar(0, c)
        Rss = self.R_ss(0, 0)
        R1 = bundles.curvature_from_connection(base, t.beta1, self.A_z(c)[0])
        R2 = bundles.curvature_from_connection(base, t.beta2, self.A_z(c)[1])
        Rzz = (R1, R2)

        def itr(x, y):
            return complex(base.integral(np.einsum("...ij,...ji->...", x, y)))

        chern = sum(itr(Rsz[k], Rzs[k]) - itr(Rzz[k], (Rss.f1, Rss.f2)[k]) for k in range(2)) / g
        tau1, tau2 = t.taus
        tr_ss = (complex(base.integral(np.trace(Rss.f1, axis1=-2, axis2=-1))),
                 complex(base.integral(np.trace(Rss.f2, axis1=-2, axis2=-1))))
        tau_term = tau1 * tr_ss[0] + tau2 * tr_ss[1]

        def potential(at):
            tt = self.triple(at)
            ps = bundles.adjoint_hom(tt.phi, tt.h1, tt.h2)
            return np.array(complex(base.integral(np.einsum("...ij,...ji->...", tt.phi, ps))))

        ddpot = complex(self.dd_hol_antihol(potential, 0, 0, c))
        rhs = chern + tau_term + ddpot
        rhs_display = chern + 0.5 * tau_term + ddpot
        # intermediate identity of the proof
        phi = t.phi
        ps = bundles.adjoint_hom(phi, t.h1, t.h2)
        lhs_mid = itr(phi @ ps, Rss.f1) - itr(ps @ phi, Rss.f2)
        P = self.Phi_s(0, c)
        rhs_mid = itr(P, bundles.adjoint(P, t.h1, t.h2)) - ddpot
        rel = abs(G - rhs) / max(abs(G), 1e-300)
        return {"lhs": G, "rhs": rhs.real, "rhs_imag": rhs.imag, "relative_deviation": rel,
                "terms": {"chern_weil": chern.real, "tau": tau_term.real, "potential": ddpot.real},
                "rhs_half_tau_variant": rhs_display.real,
                "relative_deviation_half_tau_variant": abs(G - rhs_display) / max(abs(G), 1e-300),
                "intermediate_identity": {"lhs": lhs_mid.real, "rhs": rhs_mid.real,
                                          "relative_deviation": abs(lhs_mid - rhs_mid) / max(abs(rhs_mid), abs(lhs_mid), 1e-300)}}


def refined(family: TripleFamily, factor: float = 2.0) -> TripleFamily:
    """Same family sampled with step delta / factor."""
    return TripleFamily(family.center_triple, family.deform, family.m, family.delta / factor,
                        s0=family.s0, extent=family.extent, summands=family.summands,
                        projectors=family.projectors)


def classify_refinement(coarse: float, fine: float, low: float = 3.0, high: float = 5.0,
                        floor: float = 0.0) -> dict:
    """Judge a residual pair measured at steps delta and delta/2.

    A second-order truncation error shrinks by a factor of about 4.  A residual
    that is already below ``floor`` at both steps carries no truncation error
    to measure, and is accepted as exact to that floor instead.
    """
    ratio = coarse / fine if fine > 0 else float("inf")
    if low <= ratio <= high:
        status = "second-order"
    elif max(coarse, fine) <= floor:
        status = "at-noise-floor"
    else:
        status = "failed"
    return {"coarse": coarse, "fine": fine, "ratio": ratio, "status": status, "passed": status != "failed"}


def refinement_study(family: TripleFamily, measure, levels: int = 1, **geometry_kw) -> list[dict]:
    """Evaluate measure(ModuliGeometry) -> {name: value} at delta / 2**k for k = 0..levels."""
    out = []
    fam = family
    for k in range(levels + 1):
        if k:
            fam = refined(fam)
        out.append(measure(ModuliGeometry(fam, **geometry_kw)))
    return out

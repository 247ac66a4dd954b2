"""The deformation complex of a triple and its Hodge theory.

    C0 = End E1 + End E2
    C1 = Hom(E2, E1) + A^{0,1}(End E1) + A^{0,1}(End E2)
    C2 = A^{0,1}(Hom(E2, E1)) + A^{0,2}(End E1) + A^{0,2}(End E2)

with d0 f = (f1 phi - phi f2, dbar f1, dbar f2) and
d1 (a, b) = (dbar a - (b1 phi - phi b2), dbar b1, dbar b2).  On a curve the
(0,2)-parts vanish; they are kept as zero arrays so the shapes stay uniform.
Adjoints are taken for the L2 products built from the metrics on the triple
and the Kaehler form; (0,1)-forms carry the weight 1/g.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, lobpcg

from . import bundles
from .bundles import dag
from .errors import BidegreeError, DimensionError, IllConditionedError
from .triples import Triple

KERNEL_THRESHOLD = 1e-6


class _Element:
    _fields: tuple = ()
    _forms: tuple = ()
    level: int = -1

    def parts(self):
        return tuple(getattr(self, f) for f in self._fields)

    def _new(self, parts):
        return type(self)(*parts)

    def __add__(self, other):
        self._same(other)
        return self._new([x + y for x, y in zip(self.parts(), other.parts())])

    def __sub__(self, other):
        self._same(other)
        return self._new([x - y for x, y in zip(self.parts(), other.parts())])

    def __mul__(self, c):
        return self._new([c * x for x in self.parts()])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def _same(self, other):
        if type(other) is not type(self):
            raise BidegreeError(f"cannot combine level {self.level} with {getattr(other, 'level', '?')}")

    def sup(self) -> float:
        return max(float(np.max(np.abs(x))) if x.size else 0.0 for x in self.parts())


@dataclass
class C0Element(_Element):
    f1: np.ndarray
    f2: np.ndarray
    _fields = ("f1", "f2")
    _forms = ((0, 0), (0, 0))
    level = 0


@dataclass
class C1Element(_Element):
    a: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    _fields = ("a", "b1", "b2")
    _forms = ((0, 0), (0, 1), (0, 1))
    level = 1


@dataclass
class C2Element(_Element):
    u: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    _fields = ("u", "v1", "v2")
    _forms = ((0, 1), (0, 2), (0, 2))
    level = 2


_LEVELS = {0: C0Element, 1: C1Element, 2: C2Element}


def delta(f: C0Element, phi) -> np.ndarray:
    """f1 phi - phi f2."""
    if f.f1.shape[-1] != phi.shape[-2] or f.f2.shape[-1] != phi.shape[-1]:
        raise DimensionError("endomorphism ranks do not match phi")
    return f.f1 @ phi - phi @ f.f2


class HodgeComplex:
    """Differentials, adjoints, Laplacians, harmonic projection and Green operators."""

    def __init__(self, triple: Triple, kernel_threshold: float = KERNEL_THRESHOLD,
                 n_eig: int = 8, seed: int = 0, cg_tol: float = 1e-13, cg_maxiter: int = 3000):
        self.t = triple
        self.base = triple.base
        self.g = self.base.g_coeff
        self.r1, self.r2 = triple.ranks
        self.phi = triple.phi
        self.h1, self.h2 = triple.h1, triple.h2
        self.phistar = bundles.adjoint_hom(self.phi, self.h1, self.h2)
        self.kernel_threshold = kernel_threshold
        self.n_eig = n_eig
        self.seed = seed
        self.cg_tol = cg_tol
        self.cg_maxiter = cg_maxiter
        self._harmonic: dict[int, np.ndarray] = {}
        self._eigs: dict[int, np.ndarray] = {}
        self._roots = {1: bundles.hsqrt(self.h1), 2: bundles.hsqrt(self.h2)}

    # shapes and zero elements --------------------------------------------

    def _shape(self, t, s):
        r = {1: self.r1, 2: self.r2}
        return self.base.shape + (r[t], r[s])

    def _slots(self, level):
        """(target, source, weight) for every component of a level."""
        w = 1.0 / self.g
        return {0: ((1, 1, 1.0), (2, 2, 1.0)),
                1: ((1, 2, 1.0), (1, 1, w), (2, 2, w)),
                2: ((1, 2, w), (1, 1, 0.0), (2, 2, 0.0))}[level]

    def zero(self, level):
        return _LEVELS[level](*[np.zeros(self._shape(t, s), complex) for t, s, _ in self._slots(level)])

    def random(self, level, rng, cutoff=3, amplitude=1.0):
        parts = []
        for t, s, w in self._slots(level):
            shp = self._shape(t, s)
            parts.append(self.base.lowpass(rng, shp[2:], cutoff, amplitude) if w else np.zeros(shp, complex))
        return _LEVELS[level](*parts)

    def identity(self):
        return C0Element(bundles.identity_field(self.base, self.r1), bundles.identity_field(self.base, self.r2))

    def _check(self, x, level):
        if not isinstance(x, _LEVELS[level]):
            raise BidegreeError(f"expected a level-{level} element, got {type(x).__name__}")
        for part, (t, s, _) in zip(x.parts(), self._slots(level)):
            if part.shape != self._shape(t, s):
                raise DimensionError(f"component shape {part.shape} != {self._shape(t, s)}")

    # dbar and its adjoint on Hom(E_s, E_t) --------------------------------

    def _beta(self, k):
        return self.t.beta1 if k == 1 else self.t.beta2

    def _h(self, k):
        return self.h1 if k == 1 else self.h2

    def dbar(self, x, t, s):
        return self.base.dzbar(x) + self._beta(t) @ x - x @ self._beta(s)

    def dbar_star(self, b, t, s):
        ht, hs = self._h(t), self._h(s)
        B = ht @ b @ np.linalg.inv(hs)
        W = -self.base.dz(B) + dag(self._beta(t)) @ B - B @ dag(self._beta(s))
        return np.linalg.solve(ht, W) @ hs / self.g

    # the complex ------------------------------------------------------------

    def d0(self, f: C0Element) -> C1Element:
        self._check(f, 0)
        return C1Element(delta(f, self.phi), self.dbar(f.f1, 1, 1), self.dbar(f.f2, 2, 2))

    def d1(self, x: C1Element) -> C2Element:
        self._check(x, 1)
        u = self.dbar(x.a, 1, 2) - (x.b1 @ self.phi - self.phi @ x.b2)
        z = self.zero(2)
        return C2Element(u, z.v1, z.v2)

    def d0_star(self, x: C1Element) -> C0Element:
        self._check(x, 1)
        return C0Element(x.a @ self.phistar + self.dbar_star(x.b1, 1, 1),
                         -self.phistar @ x.a + self.dbar_star(x.b2, 2, 2))

    def d1_star(self, y: C2Element) -> C1Element:
        self._check(y, 2)
        return C1Element(self.dbar_star(y.u, 1, 2), -y.u @ self.phistar, self.phistar @ y.u)

    def laplacian(self, level, x):
        if level == 0:
            return self.d0_star(self.d0(x))
        if level == 1:
            return self.d0(self.d0_star(x)) + self.d1_star(self.d1(x))
        if level == 2:
            return self.d1(self.d1_star(x))
        raise BidegreeError(f"no level {level}")

    # inner products and hat coordinates ---------------------------------------

    def inner(self, x, y) -> complex:
        """L2 product <x, y>, complex-linear in x."""
        if type(x) is not type(y):
            raise BidegreeError("inner product of different levels")
        total = 0.0 + 0.0j
        for xp, yp, (t, s, w) in zip(x.parts(), y.parts(), self._slots(x.level)):
            if w == 0.0:
                continue
            ystar = bundles.adjoint(yp, self._h(t), self._h(s))
            total += w * self.base.integral(np.einsum("...ij,...ji->...", xp, ystar))
        return complex(total)

    def norm(self, x) -> float:
        return float(np.sqrt(max(self.inner(x, x).real, 0.0)))

    def _scale(self):
        return np.sqrt(self.base.vol_norm) / self.base.n_grid

    def to_vec(self, x) -> np.ndarray:
        """Isometry onto C^n: X = sqrt(w dV) h_t^{1/2} x h_s^{-1/2}."""
        out = []
        for part, (t, s, w) in zip(x.parts(), self._slots(x.level)):
            if w == 0.0:
                continue
            rt, _ = self._roots[t]
            _, irs = self._roots[s]
            out.append((np.sqrt(w) * self._scale() * (rt @ part @ irs)).ravel())
        return np.concatenate(out)

    def from_vec(self, level, v) -> _Element:
        parts, pos = [], 0
        for t, s, w in self._slots(level):
            shp = self._shape(t, s)
            if w == 0.0:
                parts.append(np.zeros(shp, complex))
                continue
            n = int(np.prod(shp))
            X = v[pos:pos + n].reshape(shp)
            pos += n
            _, irt = self._roots[t]
            rs, _ = self._roots[s]
            parts.append(irt @ X @ rs / (np.sqrt(w) * self._scale()))
        return _LEVELS[level](*parts)

    def dim(self, level) -> int:
        return sum(int(np.prod(self._shape(t, s))) for t, s, w in self._slots(level) if w)

    def _operator(self, level, shift=0.0):
        n = self.dim(level)

        def mv(v):
            v = np.asarray(v, complex).reshape(-1)
            return self.to_vec(self.laplacian(level, self.from_vec(level, v))) + shift * v

        def mm(V):
            V = np.asarray(V, complex)
            if V.ndim == 1:
                return mv(V)
            return np.stack([mv(V[:, j]) for j in range(V.shape[1])], axis=1)

        return LinearOperator((n, n), matvec=mv, matmat=mm, dtype=complex)

    def _preconditioner(self, level, shift=1.0):
        n = self.dim(level)
        scale = 1.0 + float(np.max(np.abs(self.phi)) ** 2) * 2.0
        sym = 1.0 / (self.base.symbol_laplacian + scale * shift)
        # all components are spectrally Laplacian-like; approximate in hat coordinates
        slots = [(t, s) for t, s, w in self._slots(level) if w]

        def apply_one(v):
            out, pos = [], 0
            for t, s in slots:
                shp = self._shape(t, s)
                k = int(np.prod(shp))
                blk = v[pos:pos + k].reshape(shp)
                pos += k
                out.append(self.base.fourier_multiply(blk, sym).ravel())
            return np.concatenate(out)

        def mm(V):
            V = np.asarray(V, complex)
            if V.ndim == 1:
                return apply_one(V)
            return np.stack([apply_one(V[:, j]) for j in range(V.shape[1])], axis=1)

        return LinearOperator((n, n), matvec=apply_one, matmat=mm, dtype=complex)

    # spectrum, harmonic projection, Green --------------------------------------

    def low_spectrum(self, level, k=None):
        """The k smallest eigenvalues of the Laplacian and their eigenvectors (hat coordinates)."""
        k = self.n_eig if k is None else k
        if level in self._eigs and self._eigs[level].shape[0] >= k:
            return self._eigs[level][:k], self._vecs[level][:, :k]
        n = self.dim(level)
        rng = np.random.default_rng(self.seed)
        X = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
        op = self._operator(level)
        pre = self._preconditioner(level)
        with warnings.catch_warnings():
            # lobpcg stops near 1e-12 relative accuracy; the kernel is polished below anyway
            warnings.filterwarnings("ignore", message="Exited", category=UserWarning)
            w, V = lobpcg(op, X, M=pre, largest=False, tol=1e-11, maxiter=400)
        order = np.argsort(w)
        w, V = np.asarray(w)[order], V[:, order]
        # polish the kernel by Rayleigh-Ritz after a few inverse-iteration steps
        ker = w < self.kernel_threshold
        if np.any(ker):
            V = self._polish(level, V, ker)
            w = np.real(np.einsum("ij,ij->j", V.conj(), op.matmat(V)))
        if not hasattr(self, "_vecs"):
            self._vecs = {}
        self._eigs[level], self._vecs[level] = w, V
        return w, V

    def _polish(self, level, V, ker):
        eps = 1e-6
        op = self._operator(level, shift=eps)
        pre = self._preconditioner(level)
        K = V[:, ker]
        for _ in range(2):
            cols = []
            for j in range(K.shape[1]):
                y, _ = cg(op, K[:, j], rtol=1e-14, atol=0.0, maxiter=self.cg_maxiter, M=pre)
                cols.append(y)
            K, _ = np.linalg.qr(np.stack(cols, axis=1))
        A = K.conj().T @ self._operator(level).matmat(K)
        w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
        K = K @ U
        rest = V[:, ~ker]
        rest = rest - K @ (K.conj().T @ rest)
        rest, _ = np.linalg.qr(rest)
        return np.concatenate([K, rest], axis=1)

    def harmonic_basis(self, level) -> np.ndarray:
        if level not in self._harmonic:
            k = self.n_eig
            while True:
                w, V = self.low_spectrum(level, k)
                ker = w < self.kernel_threshold
                if ker.sum() < k - 1 or k >= self.dim(level):
                    break
                # the whole block sits in the kernel: widen the search
                k *= 2
                self._eigs.pop(level, None)
            self._harmonic[level] = V[:, ker]
        return self._harmonic[level]

    def harmonic_dim(self, level) -> int:
        return int(self.harmonic_basis(level).shape[1])

    def harmonic_projection(self, level, x):
        self._check(x, level)
        K = self.harmonic_basis(level)
        v = self.to_vec(x)
        return self.from_vec(level, K @ (K.conj().T @ v))

    def green(self, level, x):
        """G x: the solution of Lap y = x - H x with H y = 0."""
        self._check(x, level)
        K = self.harmonic_basis(level)
        v = self.to_vec(x)
        v = v - K @ (K.conj().T @ v)
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return self.zero(level)
        # adding the projector onto the kernel makes the operator definite
        base_op = self._operator(level)

        def mv(y):
            return base_op.matvec(y) + K @ (K.conj().T @ y)

        op = LinearOperator(base_op.shape, matvec=mv, dtype=complex)
        y, info = cg(op, v, rtol=self.cg_tol, atol=0.0, maxiter=self.cg_maxiter, M=self._preconditioner(level))
        if info != 0:
            res = np.linalg.norm(mv(y) - v) / nrm
            if res > 1e-8:
                raise IllConditionedError(f"Green operator solve did not converge (relative residual {res:.2e})")
        y = y - K @ (K.conj().T @ y)
        return self.from_vec(level, y)

    def kernel_report(self, level) -> dict:
        w, _ = self.low_spectrum(level)
        dim = self.harmonic_dim(level)
        ker, rest = w[w < self.kernel_threshold], w[w >= self.kernel_threshold]
        return {"level": level, "dimension": dim, "threshold": self.kernel_threshold,
                "largest_kernel_eigenvalue": float(ker.max()) if ker.size else None,
                "spectral_gap": float(rest.min()) if rest.size else None,
                "low_eigenvalues": [float(x) for x in w]}


def hodge_for(triple: Triple, **kw) -> HodgeComplex:
    return HodgeComplex(triple, **kw)

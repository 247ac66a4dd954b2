"""Flat torus X = C / (Z + tau Z) with a Fourier spectral calculus.

Grid coordinates (x, y) in [0, 1)^2 parametrise z = x + tau * y.  Arrays of
field values have the grid on their two leading axes; any trailing axes
(matrix indices of bundle-valued fields) are carried along untouched.

The Kaehler form is omega = sqrt(-1) g dz ^ dzbar with the constant g chosen
so that the total volume is 2 pi.  Integrals are therefore 2 pi times the grid
mean, which is exact for trigonometric polynomials below the Nyquist limit.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BidegreeError, DimensionError, InvalidGridError, InvalidLatticeError

VOLUME = 2.0 * np.pi

BIDEGREES = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class TorusBase:
    tau_lattice: complex
    n_grid: int
    g_coeff: float
    vol_norm: float = VOLUME

    @cached_property
    def _modes(self):
        freq = np.fft.fftfreq(self.n_grid, d=1.0 / self.n_grid)
        return np.meshgrid(freq, freq, indexing="ij")

    @cached_property
    def symbol_dz(self) -> np.ndarray:
        m, n = self._modes
        t = complex(self.tau_lattice)
        return 2j * np.pi * (n - np.conj(t) * m) / (t - np.conj(t))

    @cached_property
    def symbol_dzbar(self) -> np.ndarray:
        m, n = self._modes
        t = complex(self.tau_lattice)
        return 2j * np.pi * (t * m - n) / (t - np.conj(t))

    @cached_property
    def symbol_laplacian(self) -> np.ndarray:
        """Fourier symbol of -g^{-1} d_z d_zbar (non-negative)."""
        return (-(self.symbol_dz * self.symbol_dzbar) / self.g_coeff).real

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n_grid) / self.n_grid
        return np.meshgrid(x, x, indexing="ij")

    @property
    def z(self) -> np.ndarray:
        x, y = self.coords
        return x + self.tau_lattice * y

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_grid, self.n_grid)

    # raw-array calculus -------------------------------------------------

    def _apply(self, f, symbol):
        f = np.asarray(f)
        if f.shape[:2] != self.shape:
            raise DimensionError(f"field grid {f.shape[:2]} does not match {self.shape}")
        sym = symbol.reshape(self.shape + (1,) * (f.ndim - 2))
        return np.fft.ifft2(sym * np.fft.fft2(f, axes=(0, 1)), axes=(0, 1))

    def dz(self, f):
        return self._apply(f, self.symbol_dz)

    def dzbar(self, f):
        return self._apply(f, self.symbol_dzbar)

    def lap(self, f):
        return self._apply(f, self.symbol_laplacian)

    def fourier_multiply(self, f, symbol):
        return self._apply(f, symbol)

    def integral(self, f):
        """2 pi times the grid mean over the two leading axes."""
        f = np.asarray(f)
        if f.shape[:2] != self.shape:
            raise DimensionError(f"field grid {f.shape[:2]} does not match {self.shape}")
        return self.vol_norm * f.mean(axis=(0, 1))

    def inner(self, f, w):
        """Euclidean L2 pairing sum_nodes <f, w> weighted by the volume element."""
        return self.vol_norm * np.vdot(w, f) / (self.n_grid**2)

    def mode(self, m: int, n: int) -> np.ndarray:
        x, y = self.coords
        return np.exp(2j * np.pi * (m * x + n * y))

    def mode_dz(self, m: int, n: int) -> complex:
        """Hand-computed d/dz coefficient of the mode exp(2 pi i (m x + n y))."""
        t = complex(self.tau_lattice)
        return 2j * np.pi * (n - np.conj(t) * m) / (t - np.conj(t))

    def mode_dzbar(self, m: int, n: int) -> complex:
        t = complex(self.tau_lattice)
        return 2j * np.pi * (t * m - n) / (t - np.conj(t))

    def lowpass(self, rng: np.random.Generator, extra_shape=(), cutoff: int = 3, amplitude=1.0):
        """Random complex trigonometric polynomial with |m|, |n| <= cutoff."""
        spec = np.zeros(self.shape + tuple(extra_shape), dtype=complex)
        ks = list(range(0, cutoff + 1)) + list(range(-cutoff, 0))
        idx = np.ix_(ks, ks)
        block = rng.standard_normal((len(ks), len(ks)) + tuple(extra_shape)) + 1j * rng.standard_normal(
            (len(ks), len(ks)) + tuple(extra_shape)
        )
        spec[idx] = block
        f = np.fft.ifft2(spec, axes=(0, 1)) * self.n_grid**2 / (2 * cutoff + 1) ** 2
        return amplitude * f


def make_flat_torus(tau_lattice: complex, n_grid: int) -> TorusBase:
    tau_lattice = complex(tau_lattice)
    if not tau_lattice.imag > 0:
        raise InvalidLatticeError(f"Im(tau) must be positive, got {tau_lattice}")
    if int(n_grid) != n_grid or n_grid % 2 or n_grid < 8:
        raise InvalidGridError(f"n_grid must be an even integer >= 8, got {n_grid}")
    # i g dz^dzbar = 2 g dA and the fundamental domain has area Im(tau)
    g = VOLUME / (2.0 * tau_lattice.imag)
    return TorusBase(tau_lattice, int(n_grid), g)


# typed-field API -------------------------------------------------------------


@dataclass(frozen=True)
class Field:
    """Grid values of a scalar-valued (p, q)-form.

    Forms are stored by a single coefficient: f for (0,0), f_z for f dz,
    f_zbar for f dzbar and f_{z zbar} for f dz ^ dzbar.
    """

    values: np.ndarray
    form_type: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if tuple(self.form_type) not in BIDEGREES:
            raise BidegreeError(f"unsupported bidegree {self.form_type}")


ScalarField = Field
FormField = Field


def _check(base: TorusBase, f: Field, form_type):
    if not isinstance(f, Field):
        f = Field(np.asarray(f))
    if tuple(f.form_type) != tuple(form_type):
        raise BidegreeError(f"expected bidegree {form_type}, got {f.form_type}")
    if f.values.shape[:2] != base.shape:
        raise DimensionError(f"field grid {f.values.shape[:2]} does not match {base.shape}")
    return f


def integrate(base: TorusBase, f) -> complex:
    f = _check(base, f, (0, 0))
    return complex(base.integral(f.values)) if f.values.ndim == 2 else base.integral(f.values)


def dbar(base: TorusBase, f) -> Field:
    f = _check(base, f, (0, 0))
    return Field(base.dzbar(f.values), (0, 1))


def partial(base: TorusBase, f) -> Field:
    f = _check(base, f, (0, 0))
    return Field(base.dz(f.values), (1, 0))


def dbar_adjoint(base: TorusBase, w) -> Field:
    """L2 adjoint of dbar on functions: -g^{-1} d_z of the dzbar coefficient."""
    w = _check(base, w, (0, 1))
    return Field(-base.dz(w.values) / base.g_coeff, (0, 0))


def kahler_form(base: TorusBase) -> Field:
    return Field(np.full(base.shape, 1j * base.g_coeff), (1, 1))


def lambda_contract(base: TorusBase, w) -> Field:
    """Contraction with omega: Lambda(c dz^dzbar) = c / (sqrt(-1) g)."""
    w = _check(base, w, (1, 1))
    return Field(w.values / (1j * base.g_coeff), (0, 0))


def laplacian_scalar(base: TorusBase, f) -> Field:
    """dbar^* dbar on functions, -g^{-1} d_z d_zbar; non-negative."""
    f = _check(base, f, (0, 0))
    return Field(base.lap(f.values), (0, 0))


def form_inner(base: TorusBase, a, b) -> complex:
    """L2 inner product <a, b> of two scalar forms of equal bidegree."""
    if a.form_type != b.form_type:
        raise BidegreeError("bidegree mismatch in inner product")
    weight = {(0, 0): 1.0, (0, 1): 1.0 / base.g_coeff, (1, 0): 1.0 / base.g_coeff,
              (1, 1): 1.0 / base.g_coeff**2}[tuple(a.form_type)]
    return complex(weight * base.integral(a.values * np.conj(b.values)))

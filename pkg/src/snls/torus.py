"""Periodic grid and Fourier machinery on the flat 2-torus.

Every linear operator used by the simulator (Laplacian, free Schrödinger
group, Bessel potentials, gradient) is diagonal in the discrete Fourier
basis, so each one is a single multiplier applied to ``fft2`` coefficients.
Fields are plain complex ``ndarray`` objects whose last two axes are the
grid axes; leading axes are treated as a batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools

import numpy as np


class NonFiniteFieldError(ValueError):
    """Raised when a field handed to a spectral operator has NaN/Inf samples."""


def _check_finite(u: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(u)):
        bad = int(np.size(u) - np.count_nonzero(np.isfinite(u)))
        raise NonFiniteFieldError(f"{what} has {bad} non-finite samples")


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n x n`` grid on the torus ``[0, side)^2``."""

    n: int = 32
    side: float = 2 * np.pi

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 4, got n={self.n}")
        if not self.side > 0:
            raise ValueError("side length must be positive")

    # geometry -------------------------------------------------------------
    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def cell_area(self) -> float:
        return self.h ** 2

    @property
    def volume(self) -> float:
        return self.side ** 2

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(x1, x2)`` with ``x1`` varying along axis 0."""
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    # spectrum -------------------------------------------------------------
    @cached_property
    def int_wavenumbers(self) -> np.ndarray:
        """Integer wave numbers in fft order, Nyquist taken as ``+n/2``."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(int)
        k[self.n // 2] = self.n // 2
        return k

    @cached_property
    def wavevectors(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.int_wavenumbers * (2 * np.pi / self.side)
        return tuple(np.meshgrid(k, k, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        k1, k2 = self.wavevectors
        return k1 ** 2 + k2 ** 2

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes that sit on a Nyquist line of either axis."""
        ki = self.int_wavenumbers
        nyq = np.abs(ki) == self.n // 2
        return nyq[:, None] | nyq[None, :]

    @cached_property
    def _grad_multipliers(self) -> tuple[np.ndarray, np.ndarray]:
        k1, k2 = self.wavevectors
        nyq = np.abs(self.int_wavenumbers) == self.n // 2
        m1 = np.where(nyq[:, None], 0.0, 1j * k1)
        m2 = np.where(nyq[None, :], 0.0, 1j * k2)
        return m1, m2

    def fft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.fft2(u, axes=(-2, -1))

    def ifft(self, u_hat: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(u_hat, axes=(-2, -1))

    def apply_multiplier(self, u: np.ndarray, mult: np.ndarray) -> np.ndarray:
        _check_finite(u)
        return self.ifft(mult * self.fft(u))

    # operators ------------------------------------------------------------
    def free_propagator(self, u: np.ndarray, t: float) -> np.ndarray:
        """``U_t u = exp(i t Δ) u``, i.e. multiply mode ``k`` by ``exp(-i|k|^2 t)``."""
        if t == 0:
            _check_finite(u)
            return np.array(u, dtype=complex, copy=True)
        return self.apply_multiplier(u, self.propagator_symbol(t))

    def propagator_symbol(self, t: float) -> np.ndarray:
        return np.exp(-1j * self.k2 * t)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return self.apply_multiplier(u, -self.k2)

    def bessel_multiplier(self, u: np.ndarray, s: float) -> np.ndarray:
        """``(1 - Δ)^{s/2} u``."""
        if not -2 <= s <= 2:
            raise ValueError(f"Bessel order must lie in [-2, 2], got {s}")
        if s == 0:
            _check_finite(u)
            return np.array(u, dtype=complex, copy=True)
        return self.apply_multiplier(u, (1.0 + self.k2) ** (s / 2))

    def gradient(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _check_finite(u)
        u_hat = self.fft(u)
        m1, m2 = self._grad_multipliers
        return self.ifft(m1 * u_hat), self.ifft(m2 * u_hat)

    # discrete integrals ---------------------------------------------------
    def integrate(self, u: np.ndarray) -> np.ndarray:
        return self.cell_area * np.sum(u, axis=(-2, -1))

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Complex L^2 inner product ``∫ u conj(v)``."""
        return self.integrate(u * np.conj(v))

    def node(self, a: int, b: int) -> tuple[float, float]:
        return (a % self.n) * self.h, (b % self.n) * self.h

    def geodesic_distance(self, x1, x2) -> float:
        """Flat-torus distance: shortest Euclidean distance over the 9 nearest images."""
        L = self.side
        best = np.inf
        for s1, s2 in itertools.product((-L, 0.0, L), repeat=2):
            d = np.hypot(x2[0] + s1 - x1[0], x2[1] + s2 - x1[1])
            best = min(best, d)
        return float(best)

    @cached_property
    def shift_distances(self) -> np.ndarray:
        """Torus distance from the origin node to node ``(a, b)``, shape ``(n, n)``."""
        d = np.minimum(self.axis, self.side - self.axis)
        return np.hypot(d[:, None], d[None, :])

    # field constructors ---------------------------------------------------
    def plane_wave(self, k1: int, k2: int, amplitude: complex = 1.0) -> np.ndarray:
        x1, x2 = self.coords
        scale = 2 * np.pi / self.side
        return amplitude * np.exp(1j * scale * (k1 * x1 + k2 * x2))

    def constant(self, c: complex) -> np.ndarray:
        return np.full((self.n, self.n), c, dtype=complex)

    def random_bandlimited(self, rng: np.random.Generator, cutoff: int | None = None,
                           real: bool = False) -> np.ndarray:
        """Random field ``Σ_{|k|_∞ <= cutoff} a_k e^{ik·x}`` with unit-variance Gaussian ``a_k``.

        The default cutoff is ``n // 4``.
        """
        cutoff = self.n // 4 if cutoff is None else cutoff
        ki = self.int_wavenumbers
        band = (np.abs(ki)[:, None] <= cutoff) & (np.abs(ki)[None, :] <= cutoff)
        a = (rng.standard_normal((self.n, self.n))
             + 1j * rng.standard_normal((self.n, self.n))) / np.sqrt(2)
        a = np.where(band, a, 0.0)
        u = self.ifft(a) * self.n ** 2
        return u.real.astype(complex) if real else u

    def top_shell_fraction(self, u: np.ndarray) -> np.ndarray:
        """Fraction of discrete mass carried by modes with ``max|k_i| > n/3``."""
        p = np.abs(self.fft(u)) ** 2
        ki = np.abs(self.int_wavenumbers)
        top = np.maximum(ki[:, None], ki[None, :]) > self.n / 3
        total = p.sum(axis=(-2, -1))
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(total > 0, (p * top).sum(axis=(-2, -1)) / total, 0.0)
        return frac


@dataclass
class GridFunction:
    """A sampled field together with its (lazily computed) spectrum."""

    grid: TorusGrid
    values: np.ndarray
    _spectrum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"expected shape {(self.grid.n,) * 2}, got {self.values.shape}")

    @classmethod
    def from_spectrum(cls, grid: TorusGrid, spectrum: np.ndarray) -> "GridFunction":
        spectrum = np.asarray(spectrum, dtype=complex)
        return cls(grid, grid.ifft(spectrum), spectrum)

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = self.grid.fft(self.values)
        return self._spectrum

    def consistency_error(self) -> float:
        """Relative mismatch between stored samples and stored spectrum."""
        back = self.grid.ifft(self.spectrum)
        scale = max(np.linalg.norm(self.values), np.finfo(float).tiny)
        return float(np.linalg.norm(back - self.values) / scale)

"""Truncated spatially smooth Wiener noise on the torus.

The noise is ``W(t, x) = Σ_j W_j(t) Λe_j(x)`` with independent scalar Brownian
motions ``W_j`` and real modes ``Λe_j = c_j φ_j``, where ``φ_j`` runs through
``1, cos(k·x), sin(k·x)`` ordered by ``|k|`` and ``c_j = (1 + |k_j|²)^{-ρ/2}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import struct

import numpy as np

from .torus import TorusGrid

SUMMABILITY_THRESHOLD = 2.0
PATH_HEADER = struct.Struct("<QdQQ")  # seed, dt, steps, J


def mode_wavevectors(J: int) -> list[tuple[int, int, str]]:
    """First ``J`` real modes as ``(k1, k2, kind)`` with kind in {'const','cos','sin'}.

    Wave vectors are taken from the half plane (one per ``±k`` pair) and
    ordered by ``|k|``; each contributes a cosine then a sine.
    """
    radius = 1
    while 1 + 2 * sum(1 for k1 in range(-radius, radius + 1) for k2 in range(-radius, radius + 1)
                      if 0 < k1 * k1 + k2 * k2 <= radius * radius) // 2 < J:
        radius += 1
    half = [(k1, k2) for k1 in range(0, radius + 1) for k2 in range(-radius, radius + 1)
            if (k1 > 0 or k2 > 0) and k1 * k1 + k2 * k2 <= radius * radius]
    half.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, -k[0], -k[1]))
    out = [(0, 0, "const")]
    for k1, k2 in half:
        out += [(k1, k2, "cos"), (k1, k2, "sin")]
    return out[:J]


@dataclass
class NoiseBasis:
    grid: TorusGrid
    modes: np.ndarray            # (J, n, n) real
    weights: np.ndarray          # (J,)
    wavevectors: list
    rho: float
    summability: dict = field(default_factory=dict)
    _p: np.ndarray | None = field(default=None, repr=False)
    _q: np.ndarray | None = field(default=None, repr=False)

    @property
    def J(self) -> int:
        return self.modes.shape[0]

    @property
    def p_field(self) -> np.ndarray:
        if self._p is None:
            self._p, self._q = trace_fields(self)
        return self._p

    @property
    def q_field(self) -> np.ndarray:
        if self._q is None:
            self._p, self._q = trace_fields(self)
        return self._q


def build_basis(J: int, rho: float, grid: TorusGrid) -> NoiseBasis:
    """Weighted real Fourier modes, constant mode first.

    The summability report compares ``Σ_j c_j² (1 + |k_j|²)`` over the kept
    modes; in the ``J -> ∞`` limit this converges in 2D iff ``ρ > 2``.
    """
    if J < 1:
        raise ValueError("need at least one noise mode")
    ks = mode_wavevectors(J)
    x1, x2 = grid.coords
    scale = 2 * np.pi / grid.side
    modes = np.empty((J, grid.n, grid.n))
    weights = np.empty(J)
    for j, (k1, k2, kind) in enumerate(ks):
        phase = scale * (k1 * x1 + k2 * x2)
        phi = np.ones_like(x1) if kind == "const" else (np.cos(phase) if kind == "cos" else np.sin(phase))
        weights[j] = (1.0 + scale ** 2 * (k1 ** 2 + k2 ** 2)) ** (-rho / 2)
        modes[j] = weights[j] * phi
    k2s = np.array([scale ** 2 * (k[0] ** 2 + k[1] ** 2) for k in ks])
    summ = {
        "h1_weighted_sum": float(np.sum(weights ** 2 * (1 + k2s))),
        "l2_sum": float(np.sum(np.sum(modes ** 2, axis=(1, 2)) * grid.cell_area)),
        "rho": float(rho),
        "summable": bool(rho > SUMMABILITY_THRESHOLD),
    }
    return NoiseBasis(grid, modes, weights, ks, float(rho), summ)


def trace_fields(basis: NoiseBasis) -> tuple[np.ndarray, np.ndarray]:
    """``p(x) = Σ_j (Λe_j(x))²`` and ``q(x) = Σ_j |∇Λe_j(x)|²``."""
    grid = basis.grid
    p = np.sum(basis.modes ** 2, axis=0)
    g1, g2 = grid.gradient(basis.modes.astype(complex))
    q = np.sum(g1.real ** 2 + g2.real ** 2, axis=0)
    return p, q


@dataclass
class BrownianPath:
    dt: float
    increments: np.ndarray   # (steps, J)
    seed: int
    path_id: int = 0

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @property
    def J(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    def coarsen(self, factor: int) -> "BrownianPath":
        """Same Brownian path on a mesh ``factor`` times coarser."""
        if self.steps % factor:
            raise ValueError("step count not divisible by coarsening factor")
        inc = self.increments.reshape(self.steps // factor, factor, self.J).sum(axis=1)
        return BrownianPath(self.dt * factor, inc, self.seed, self.path_id)

    def truncate(self, steps: int) -> "BrownianPath":
        return BrownianPath(self.dt, self.increments[:steps].copy(), self.seed, self.path_id)

    def to_bytes(self) -> bytes:
        head = PATH_HEADER.pack(self.seed, self.dt, self.steps, self.J)
        return head + np.ascontiguousarray(self.increments, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BrownianPath":
        seed, dt, steps, J = PATH_HEADER.unpack_from(blob)
        payload = np.frombuffer(blob, dtype="<f8", offset=PATH_HEADER.size)
        if payload.size != steps * J:
            raise ValueError(f"payload has {payload.size} values, header says {steps}x{J}")
        return cls(dt, payload.reshape(steps, J).astype(float), seed)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BrownianPath":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _mode_stream(seed: int, path_id: int, mode: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, path_id, mode])))


def sample_path(J: int, dt: float, steps: int, seed: int, path_id: int = 0) -> BrownianPath:
    """Brownian increments with one counter-based stream per ``(seed, path, mode)``.

    The increments of mode ``j`` do not depend on ``J``, on the other paths, or
    on the order in which paths are generated.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    inc = np.empty((steps, J))
    for j in range(J):
        inc[:, j] = _mode_stream(seed, path_id, j).standard_normal(steps)
    return BrownianPath(dt, inc * np.sqrt(dt), seed, path_id)


def sample_paths(J: int, dt: float, steps: int, seed: int, count: int,
                 first_id: int = 0) -> list[BrownianPath]:
    return [sample_path(J, dt, steps, seed, first_id + i) for i in range(count)]


def noise_increment(increments: np.ndarray, basis: NoiseBasis) -> np.ndarray:
    """``Σ_j ΔW_j Λe_j`` for increments of shape ``(..., J)``; result ``(..., n, n)``."""
    J = basis.J
    inc = np.asarray(increments)[..., :J]
    return np.tensordot(inc, basis.modes, axes=([-1], [0]))


def noise_field(path: BrownianPath, step: int, basis: NoiseBasis) -> np.ndarray:
    """Real field ``ΔW(t_step, x)``."""
    if not 0 <= step < path.steps:
        raise IndexError(f"step {step} outside [0, {path.steps})")
    if path.J < basis.J:
        raise ValueError("path has fewer modes than the basis")
    return noise_increment(path.increments[step], basis)


def r_norm_sq(xi: np.ndarray, basis: NoiseBasis, sobolev_s: float = 0.0) -> np.ndarray:
    """``‖ξ‖²_{R(K, H)} = Σ_j |ξ Λe_j|²_H`` for multiplication operators ``ξ``.

    ``H`` is ``H^{s,2}`` with ``s = sobolev_s``.
    """
    grid = basis.grid
    xi = np.asarray(xi, dtype=complex)
    prod = xi[..., None, :, :] * basis.modes
    if sobolev_s:
        prod = grid.bessel_multiplier(prod, sobolev_s)
    return np.sum(grid.cell_area * np.sum(np.abs(prod) ** 2, axis=(-2, -1)), axis=-1)


def stochastic_convolution_all(integrand: np.ndarray, increments: np.ndarray,
                               basis: NoiseBasis, dt: float) -> np.ndarray:
    """``J(t_i) = Σ_{r<i} U_{t_i - t_r}[ξ(t_r) ΔW_r]`` for every mesh index ``i``.

    ``integrand`` has shape ``(M, ..., n, n)`` (left endpoints ``t_0..t_{M-1}``)
    and ``increments`` ``(M, ..., J)``. Returns shape ``(M+1, ..., n, n)``.
    """
    grid = basis.grid
    M = integrand.shape[0]
    if increments.shape[0] != M:
        raise ValueError(f"mesh mismatch: integrand has {M} steps, path has {increments.shape[0]}")
    sym = grid.propagator_symbol(dt)
    out = np.zeros((M + 1,) + integrand.shape[1:], dtype=complex)
    acc = np.zeros(integrand.shape[1:], dtype=complex)
    for r in range(M):
        acc = grid.ifft(sym * grid.fft(acc + integrand[r] * noise_increment(increments[r], basis)))
        out[r + 1] = acc
    return out


def stochastic_convolution(integrand: np.ndarray, path: BrownianPath, t_index: int,
                           basis: NoiseBasis) -> np.ndarray:
    """Single-time version of :func:`stochastic_convolution_all`."""
    if t_index > path.steps or t_index > integrand.shape[0]:
        raise ValueError("t_index beyond integrand or path mesh")
    if t_index == 0:
        return np.zeros(integrand.shape[1:], dtype=complex)
    return stochastic_convolution_all(integrand[:t_index], path.increments[:t_index],
                                      basis, path.dt)[-1]

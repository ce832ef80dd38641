"""Composition operators ``γ -> f∘γ`` and numerical audits of their estimates.

Each audit evaluates both sides of an inequality on concrete grid fields
and returns an :class:`AuditRecord` with the slack ``rhs - lhs``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
import json

import numpy as np

from .coefficients import RadialMap
from .norms import lq_norm, slobodetskii_seminorm
from .torus import TorusGrid


def apply(fn, gamma: np.ndarray) -> np.ndarray:
    """Pointwise composition ``fn ∘ gamma``."""
    out = fn(np.asarray(gamma))
    return np.broadcast_to(np.asarray(out, dtype=complex), np.shape(gamma)).copy()


def _jacobian(fn, z, h=1e-6):
    if isinstance(fn, RadialMap):
        return fn.jacobian(z)
    z = np.asarray(z, dtype=complex)
    jac = np.empty(z.shape + (2, 2))
    for col, dz in enumerate((h, 1j * h)):
        d = (np.asarray(fn(z + dz)) - np.asarray(fn(z - dz))) / (2 * h)
        jac[..., 0, col] = d.real
        jac[..., 1, col] = d.imag
    return jac


def estimate_K(fn, R: float, j: int = 1, samples: int = 4000, seed: int = 0) -> float:
    """Sampled lower bound for ``K_j(f, R)``: the largest difference quotient
    of ``f^{(j-1)}`` over pairs drawn from the closed disc of radius ``R``.

    Half of the points are placed on the boundary circle, where the sup of a
    radially growing map is attained. Samples are nested in ``samples`` and
    scale with ``R``, so the estimate is monotone in both for such maps.
    """
    if R <= 0:
        raise ValueError("radius must be positive")
    if samples < 1000:
        raise ValueError("estimate_K needs at least 10^3 samples")
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    rng = np.random.default_rng(seed)
    rho = np.sqrt(rng.random((samples, 2)))
    rho[::2, 0] = 1.0
    ang = 2 * np.pi * rng.random((samples, 2))
    pts = R * rho * np.exp(1j * ang)
    x, y = pts[:, 0], pts[:, 1]
    # Close pairs probe the local derivative.
    near = rng.random(samples) < 0.5
    eps = R * 1e-3 * np.exp(2j * np.pi * rng.random(samples))
    y = np.where(near, x + eps, y)
    y = np.where(np.abs(y) > R, y * R / np.abs(y), y)
    dist = np.abs(y - x)
    ok = dist > 0
    if j == 1:
        num = np.abs(np.asarray(fn(y)) - np.asarray(fn(x)))
    else:
        num = np.linalg.norm(_jacobian(fn, y) - _jacobian(fn, x), ord=2, axis=(-2, -1))
    num = np.broadcast_to(num, dist.shape)
    return float(np.max(num[ok] / dist[ok])) if ok.any() else 0.0


def estimate_K_tilde(fn, R: float, samples: int = 4000, seed: int = 0) -> float:
    """Sampled ``sup_{|x|<=R} ‖f'(x)‖``."""
    rng = np.random.default_rng(seed)
    rho = np.sqrt(rng.random(samples))
    rho[::2] = 1.0
    z = R * rho * np.exp(2j * np.pi * rng.random(samples))
    return float(np.max(np.linalg.norm(_jacobian(fn, z), ord=2, axis=(-2, -1))))


def cubic_K(R: float, j: int = 1) -> float:
    """Exact ``K_j`` for ``f(z) = |z|² z``: ``3R²`` for j=1 and ``6R`` for j=2."""
    return 3.0 * R ** 2 if j == 1 else 6.0 * R


@dataclass
class AuditRecord:
    inequality: str
    lhs: float
    rhs: float
    slack: float
    K: dict = field(default_factory=dict)
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.slack >= 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _w_norm(u, grid, theta, q):
    semi = slobodetskii_seminorm(u, grid, theta, q)
    return float(lq_norm(u, grid, q)) + semi, semi


def audit_growth(fn, gamma: np.ndarray, grid: TorusGrid, theta: float, q: float,
                 K1: float | None = None, samples: int = 4000, seed: int | None = None
                 ) -> AuditRecord:
    """Both sides of ``‖F(γ)‖_{θ,q} <= |f(0)| vol(M) + K₁(f,|γ|_∞) ‖γ‖_{θ,q}``.

    For ``θ = 1`` the seminorm is the gradient L^q norm and ``K₁`` is replaced by
    ``K̃₁ = sup ‖f'‖``. When ``K1`` is not supplied it is estimated by sampling;
    the sampled value is a lower bound of the true constant, so the reported
    slack is then biased towards violation.
    """
    if not 0 < theta <= 1:
        raise ValueError("θ must lie in (0, 1]")
    R = float(lq_norm(gamma, grid, np.inf))
    f0 = abs(complex(np.asarray(fn(np.array([0j])))[0]))
    Fg = apply(fn, gamma)
    if theta == 1:
        def norm(u):
            g1, g2 = grid.gradient(u)
            grad = (grid.cell_area * np.sum((np.abs(g1) ** 2 + np.abs(g2) ** 2) ** (q / 2))) ** (1 / q)
            return float(lq_norm(u, grid, q)) + float(grad)
        key = "K1_tilde"
        if K1 is None:
            K1 = estimate_K_tilde(fn, max(R, 1e-12), samples, seed or 0)
    else:
        norm = lambda u: _w_norm(u, grid, theta, q)[0]
        key = "K1"
        if K1 is None:
            K1 = estimate_K(fn, max(R, 1e-12), 1, samples, seed or 0)
    lhs = norm(Fg)
    rhs = f0 * grid.volume + K1 * norm(gamma)
    return AuditRecord("growth", lhs, rhs, rhs - lhs, {key: K1}, seed,
                       {"theta": theta, "q": q, "sup_gamma": R})


def audit_lipschitz(fn, gamma: np.ndarray, sigma: np.ndarray, grid: TorusGrid,
                    theta: float, q: float, K1: float | None = None, K2: float | None = None,
                    samples: int = 4000, seed: int | None = None) -> list[AuditRecord]:
    """Both sides of the L^q difference bound and of the seminorm difference bound
    (with the ``K₂`` cross term) for ``F(γ) - F(σ)``."""
    R = max(float(lq_norm(gamma, grid, np.inf)), float(lq_norm(sigma, grid, np.inf)), 1e-12)
    if K1 is None:
        K1 = estimate_K(fn, R, 1, samples, seed or 0)
    if K2 is None:
        K2 = estimate_K(fn, R, 2, samples, seed or 0)
    Fg, Fs = apply(fn, gamma), apply(fn, sigma)
    d = gamma - sigma
    lhs_lq = float(lq_norm(Fg - Fs, grid, q))
    rhs_lq = K1 * float(lq_norm(d, grid, q))
    lhs_semi = slobodetskii_seminorm(Fg - Fs, grid, theta, q)
    semi_d = slobodetskii_seminorm(d, grid, theta, q)
    cross = K2 * float(lq_norm(d, grid, np.inf)) * (
        slobodetskii_seminorm(sigma, grid, theta, q) + 0.5 * semi_d)
    rhs_semi = cross + K1 * semi_d
    K = {"K1": K1, "K2": K2}
    extra = {"theta": theta, "q": q, "R": R}
    return [
        AuditRecord("lipschitz-lq", lhs_lq, rhs_lq, rhs_lq - lhs_lq, K, seed, extra),
        AuditRecord("lipschitz-seminorm", lhs_semi, rhs_semi, rhs_semi - lhs_semi, K, seed,
                    dict(extra, cross_term=cross, half_term=0.5 * K2 * semi_d
                         * float(lq_norm(d, grid, np.inf)))),
    ]


def audit_algebra(sigma: np.ndarray, gamma: np.ndarray, grid: TorusGrid, theta: float,
                  q: float, seed: int | None = None) -> list[AuditRecord]:
    """``⦀σγ⦀ <= ‖σγ‖ <= |σ|_∞ ‖γ‖ + |γ|_∞ ‖σ‖`` in the ``W^{θ,q}`` norms."""
    prod = sigma * gamma
    n_prod, semi_prod = _w_norm(prod, grid, theta, q)
    n_g, _ = _w_norm(gamma, grid, theta, q)
    n_s, _ = _w_norm(sigma, grid, theta, q)
    sup_s = float(lq_norm(sigma, grid, np.inf))
    sup_g = float(lq_norm(gamma, grid, np.inf))
    rhs = sup_s * n_g + sup_g * n_s
    extra = {"theta": theta, "q": q}
    return [
        AuditRecord("algebra-left", semi_prod, n_prod, n_prod - semi_prod, {}, seed, extra),
        AuditRecord("algebra-middle", n_prod, rhs, rhs - n_prod, {}, seed, extra),
    ]

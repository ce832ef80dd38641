"""Discrete function-space norms on the torus grid.

Conventions
-----------
* ``|u|_q``          : ``(cell_area * Σ |u|^q)^{1/q}``, max modulus for ``q = inf``.
* ``|u|_{H^{s,2}}``  : ``|(1 - Δ)^{s/2} u|_2``.
* ``⦀u⦀_{θ,q}``      : double Riemann sum of ``|u(y) - u(x)|^q / d(x, y)^{2 + θq}``
  over off-diagonal node pairs, weighted by ``cell_area**2``.
* ``‖u‖_{θ,q}``      : ``|u|_q + ⦀u⦀_{θ,q}``.
* ``‖u‖_R``          : ``‖u‖_{θ,q} + |u|_∞``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .torus import TorusGrid

SLOBODETSKII_MAX_N = 64

E_BESSEL = "bessel"
E_SLOBODETSKII = "slobodetskii"


def lq_norm(u: np.ndarray, grid: TorusGrid, q: float) -> np.ndarray:
    if q < 1:
        raise ValueError(f"L^q exponent must be >= 1, got {q}")
    a = np.abs(u)
    if np.isinf(q):
        return a.max(axis=(-2, -1))
    return (grid.cell_area * np.sum(a ** q, axis=(-2, -1))) ** (1.0 / q)


def sobolev_norm(u: np.ndarray, grid: TorusGrid, s: float) -> np.ndarray:
    if not 0 <= s <= 2:
        raise ValueError(f"Sobolev order must lie in [0, 2], got {s}")
    return lq_norm(grid.bessel_multiplier(u, s), grid, 2)


def h1_norm(u: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return sobolev_norm(u, grid, 1.0)


def _shift_sums(u: np.ndarray, q: float) -> np.ndarray:
    """``S[a, b] = Σ_x |u(x + (a, b)) - u(x)|^q`` for every lattice shift."""
    n = u.shape[-1]
    cols = (np.arange(n)[None, :] + np.arange(n)[:, None]) % n  # cols[b, j] = j + b
    out = np.empty((n, n))
    for a in range(n):
        ua = np.roll(u, -a, axis=0)[:, cols]       # (i, b, j) -> u(i + a, j + b)
        d = np.abs(ua - u[:, None, :])
        out[a] = np.sum(d ** q, axis=(0, 2))
    return out


def slobodetskii_seminorm(u: np.ndarray, grid: TorusGrid, theta: float, q: float) -> float:
    """Discrete Besov-Slobodetskii seminorm ``⦀u⦀_{θ,q}``.

    The kernel depends only on the lattice shift between the two nodes, so the
    double sum is reorganised as a sum over shifts of ``Σ_x |u(x+h) - u(x)|^q``.
    The reduction order is fixed, so results are bit-stable.
    """
    if not 0 < theta < 1:
        raise ValueError(f"θ must lie in (0, 1), got {theta}")
    if not 1 <= q < np.inf:
        raise ValueError(f"q must lie in [1, ∞), got {q}")
    if grid.n > SLOBODETSKII_MAX_N:
        raise ValueError(
            f"the Slobodetskii double sum is O(n^4); n={grid.n} exceeds "
            f"{SLOBODETSKII_MAX_N}. Subsample the field onto a coarser grid first.")
    u = np.asarray(u)
    if u.shape != (grid.n, grid.n):
        raise ValueError("seminorm takes a single field")
    dist = grid.shift_distances
    with np.errstate(divide="ignore"):
        w = np.where(dist > 0, dist ** -(2 + theta * q), 0.0)
    total = np.sum(_shift_sums(u, q) * w)
    return float((grid.cell_area ** 2 * total) ** (1.0 / q))


def slobodetskii_norm(u, grid: TorusGrid, theta: float, q: float) -> float:
    return float(lq_norm(u, grid, q)) + slobodetskii_seminorm(u, grid, theta, q)


def r_norm(u, grid: TorusGrid, theta: float, q: float) -> float:
    return slobodetskii_norm(u, grid, theta, q) + float(lq_norm(u, grid, np.inf))


def e_norm(u: np.ndarray, grid: TorusGrid, s_hat: float, q: float,
           kind: str = E_BESSEL) -> np.ndarray:
    """Spatial norm used inside the Y-norm.

    ``kind="bessel"`` gives ``|(1-Δ)^{ŝ/2} u|_q`` (any grid size, batched);
    ``kind="slobodetskii"`` gives the literal ``W^{ŝ,q}`` norm (``n <= 64``).
    """
    if kind == E_BESSEL:
        return lq_norm(grid.bessel_multiplier(u, s_hat), grid, q)
    if kind == E_SLOBODETSKII:
        u = np.asarray(u)
        if u.ndim == 2:
            return np.float64(slobodetskii_norm(u, grid, s_hat, q))
        flat = u.reshape(-1, grid.n, grid.n)
        vals = [slobodetskii_norm(v, grid, s_hat, q) for v in flat]
        return np.asarray(vals).reshape(u.shape[:-2])
    raise ValueError(f"unknown E-norm kind {kind!r}")


@dataclass
class NormReport:
    lq: dict = field(default_factory=dict)
    sobolev: dict = field(default_factory=dict)
    slobodetskii: dict = field(default_factory=dict)  # (θ, q) -> (seminorm, full norm)
    linf: float = 0.0
    r_norm: float | None = None


def norm_report(u, grid: TorusGrid, qs=(2, 4), sobolev_orders=(0.5, 1.0),
                slobodetskii_pairs=((0.5, 4),)) -> NormReport:
    rep = NormReport()
    for q in qs:
        rep.lq[q] = float(lq_norm(u, grid, q))
    for s in sobolev_orders:
        rep.sobolev[s] = float(sobolev_norm(u, grid, s))
    rep.linf = float(lq_norm(u, grid, np.inf))
    for theta, q in slobodetskii_pairs:
        semi = slobodetskii_seminorm(u, grid, theta, q)
        rep.slobodetskii[(theta, q)] = (semi, float(lq_norm(u, grid, q)) + semi)
    if slobodetskii_pairs:
        first = rep.slobodetskii[tuple(slobodetskii_pairs[0])]
        rep.r_norm = first[1] + rep.linf
    return rep


@dataclass
class Trajectory:
    """States on a uniform time mesh plus per-time scalar diagnostics."""

    grid: TorusGrid
    times: np.ndarray
    states: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("trajectory needs a non-empty 1-d time mesh")
        if self.times.size > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0):
                raise ValueError("time mesh must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValueError("time mesh must be uniform")
        if self.states is not None:
            self.states = np.asarray(self.states)
            if self.states.shape != (self.times.size, self.grid.n, self.grid.n):
                raise ValueError("states must have shape (len(times), n, n)")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def __len__(self):
        return self.times.size

    def restrict(self, stop: int) -> "Trajectory":
        """Trajectory on the first ``stop`` mesh points."""
        states = None if self.states is None else self.states[:stop]
        diag = {k: np.asarray(v)[:stop] for k, v in self.diagnostics.items()}
        return Trajectory(self.grid, self.times[:stop], states, diag)


def y_norm_profile(states: np.ndarray, grid: TorusGrid, dt: float, p: float, s: float,
                   s_hat: float, q: float, e_kind: str = E_BESSEL) -> np.ndarray:
    """``|X|_{Y_{t_i}}`` for every mesh index ``i`` (left-endpoint time quadrature).

    ``states`` has shape ``(M+1, ..., n, n)``; extra middle axes are batches.
    """
    if states.shape[0] == 0:
        raise ValueError("empty trajectory")
    sup_part = np.maximum.accumulate(sobolev_norm(states, grid, s) ** p, axis=0)
    e_part = e_norm(states, grid, s_hat, q, e_kind) ** p
    integral = np.zeros_like(sup_part)
    integral[1:] = dt * np.cumsum(e_part[:-1], axis=0)
    return (sup_part + integral) ** (1.0 / p)


def y_norm(tr: Trajectory, p: float, s: float, s_hat: float, q: float,
           e_kind: str = E_BESSEL) -> float:
    """``(sup_t |u(t)|_{H^{s,2}}^p + ∫ |u(t)|_E^p dt)^{1/p}`` over the whole trajectory."""
    if not 2 < p < np.inf:
        raise ValueError(f"p must lie in (2, ∞), got {p}")
    if tr.states is None or len(tr) == 0:
        raise ValueError("y_norm needs a trajectory with stored states")
    prof = y_norm_profile(tr.states, tr.grid, tr.dt, p, s, s_hat, q, e_kind)
    return float(prof[-1])

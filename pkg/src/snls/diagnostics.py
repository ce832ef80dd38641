"""Conserved quantities, energy pairings and empirical estimate constants."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import brentq

from .coefficients import CoefficientSpec
from .noise import NoiseBasis, BrownianPath, noise_increment, r_norm_sq, stochastic_convolution_all
from .norms import E_BESSEL, e_norm, lq_norm, sobolev_norm
from .torus import TorusGrid

MC_BATCHES = 8


# conservation and energy ----------------------------------------------------

def mass(u, grid: TorusGrid):
    """``|u|²_{L²}``."""
    return grid.cell_area * np.sum(np.abs(u) ** 2, axis=(-2, -1))


def _grad_weight(grid: TorusGrid) -> np.ndarray:
    m1, m2 = grid._grad_multipliers
    return np.abs(m1) ** 2 + np.abs(m2) ** 2


def kinetic_from_spectrum(u_hat, grid: TorusGrid):
    """``½|∇u|²_{L²}`` from ``fft2`` coefficients (Parseval)."""
    w = _grad_weight(grid)
    return 0.5 * grid.cell_area / grid.n ** 2 * np.sum(w * np.abs(u_hat) ** 2, axis=(-2, -1))


@dataclass
class EnergyRecord:
    kinetic: np.ndarray
    potential: np.ndarray
    total: np.ndarray
    mass: np.ndarray
    time: float = 0.0


def energy_psi(u, grid: TorusGrid, spec: CoefficientSpec, time: float = 0.0) -> EnergyRecord:
    """``Ψ(u) = ½|∇u|² + ½∫F̃(|u|²)`` and its two parts."""
    g1, g2 = grid.gradient(u)
    kin = 0.5 * grid.cell_area * np.sum(np.abs(g1) ** 2 + np.abs(g2) ** 2, axis=(-2, -1))
    pot = 0.5 * grid.integrate(spec.antiderivative_F(np.abs(u) ** 2))
    return EnergyRecord(kin, pot, kin + pot, mass(u, grid), time)


def psi_derivative(u, v, grid: TorusGrid, spec: CoefficientSpec):
    """``Ψ'(u)(v) = Re∫∇u·conj(∇v) + ∫f̃(|u|²) Re(u conj v)``."""
    gu1, gu2 = grid.gradient(u)
    gv1, gv2 = grid.gradient(v)
    grad_part = grid.integrate((gu1 * np.conj(gv1) + gu2 * np.conj(gv2)).real)
    pot_part = grid.integrate(spec.f_tilde(np.abs(u) ** 2) * (u * np.conj(v)).real)
    return grad_part + pot_part


def psi_second(u, v, grid: TorusGrid, spec: CoefficientSpec):
    """``Ψ''(u)(v, v) = |∇v|² + ∫f̃(|u|²)|v|² + 2∫f̃'(|u|²)(Re u conj v)²``."""
    gv1, gv2 = grid.gradient(v)
    r = np.abs(u) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        f_prime = np.where(r > 0, spec.f_r_dtilde(r) / r, 0.0)
    return (grid.integrate(np.abs(gv1) ** 2 + np.abs(gv2) ** 2)
            + grid.integrate(spec.f_tilde(r) * np.abs(v) ** 2)
            + 2 * grid.integrate(f_prime * (u * np.conj(v)).real ** 2))


def ito_drift_psi(u, basis: NoiseBasis, spec: CoefficientSpec) -> float:
    """``dt``-coefficient of ``dΨ(u)`` in Itô form:
    ``Ψ'(u)(i[Δu - f(u)] + ½p m(u)) + ½ Σ_j Ψ''(u)(ig(u)Λe_j, ig(u)Λe_j)``."""
    grid = basis.grid
    drift = 1j * (grid.laplacian(u) - spec.f(u)) + 0.5 * basis.p_field * spec.m(u)
    first = psi_derivative(u, drift, grid, spec)
    gu = spec.g(u)
    trace = sum(psi_second(u, 1j * gu * e, grid, spec) for e in basis.modes)
    return float(first + 0.5 * trace)


def pairing_drift(u, grid: TorusGrid, spec: CoefficientSpec):
    """``Ψ'(u)(i[Δu - f(u)])``; vanishes identically for band-limited ``u``."""
    v = 1j * (grid.laplacian(u) - spec.f(u))
    return psi_derivative(u, v, grid, spec)


def pairing_noise(u, basis: NoiseBasis, spec: CoefficientSpec) -> np.ndarray:
    """``∫ Re(∇u · conj(∇[i g(u) Λe_j]))`` for every noise mode ``j``."""
    grid = basis.grid
    gu1, gu2 = grid.gradient(u)
    dirs = 1j * spec.g(u)[None] * basis.modes
    gv1, gv2 = grid.gradient(dirs)
    return grid.integrate((gu1 * np.conj(gv1) + gu2 * np.conj(gv2)).real)


def coercivity_constant(u_states, grid: TorusGrid, spec: CoefficientSpec) -> float:
    """Smallest ``c >= 0`` with ``|u|²_{H^{1,2}} <= 2Ψ(u) + c|u|²_{L²}`` on the given states."""
    u_states = np.asarray(u_states)
    h1 = sobolev_norm(u_states, grid, 1.0) ** 2
    psi = energy_psi(u_states, grid, spec).total
    m = mass(u_states, grid)
    ok = m > 0
    if not np.any(ok):
        return 0.0
    return float(max(0.0, np.max((h1[ok] - 2 * psi[ok]) / m[ok])))


# Monte Carlo helpers -----------------------------------------------------------

def batch_means_se(samples, batches: int = MC_BATCHES) -> float:
    """Standard error of the mean by batch means."""
    x = np.asarray(samples, dtype=float)
    if x.size < batches:
        return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else np.nan
    usable = x.size - x.size % batches
    means = x[:usable].reshape(batches, -1).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(batches))


def bootstrap_max_band(values, seed: int = 0, resamples: int = 1000) -> float:
    """Bootstrap standard deviation of the sample maximum."""
    v = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(resamples, v.size))
    return float(np.std(v[idx].max(axis=1), ddof=1))


@dataclass
class QuotientReport:
    quotients: list
    max: float
    mean: float
    T: float
    p: float
    q: float
    s: float
    ensemble: int
    mc_se: float | None = None
    band: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _report(quotients, T, p, q, s, extra=None, stochastic=False, seed=0):
    qs = np.asarray(quotients, dtype=float)
    return QuotientReport(
        quotients=qs.tolist(), max=float(qs.max()), mean=float(qs.mean()), T=float(T),
        p=float(p), q=float(q), s=float(s), ensemble=int(qs.size),
        mc_se=batch_means_se(qs) if stochastic else None,
        band=bootstrap_max_band(qs, seed) if qs.size > 1 else 0.0, extra=extra or {})


def check_admissible(p: float, q: float, tol: float = 1e-12) -> None:
    if abs(2.0 / p + 2.0 / q - 1.0) > tol:
        raise ValueError(f"scaling condition 2/p+2/q=1 violated (p={p}, q={q})")


# Strichartz quotients ---------------------------------------------------------

def free_orbit(v0, grid: TorusGrid, times) -> np.ndarray:
    """``U_t v0`` for every ``t`` in ``times``; shape ``(len(times), ..., n, n)``."""
    v_hat = grid.fft(v0)
    phases = np.exp(-1j * np.multiply.outer(np.asarray(times), grid.k2))
    phases = phases.reshape((len(times),) + (1,) * (np.ndim(v0) - 2) + grid.k2.shape)
    return grid.ifft(phases * v_hat)


def lp_time_e_norm(orbit, grid: TorusGrid, dt: float, p: float, s_hat: float, q: float,
                   e_kind: str = E_BESSEL):
    """``(Σ_{i<M} dt |u(t_i)|_E^p)^{1/p}`` over an orbit with ``M+1`` samples."""
    e = e_norm(orbit[:-1], grid, s_hat, q, e_kind)
    return (dt * np.sum(e ** p, axis=0)) ** (1.0 / p)


def strichartz_hom(v0s, grid: TorusGrid, T: float, dt: float, p: float = 4, q: float = 4,
                   s: float = 1.0, e_kind: str = E_BESSEL, seed: int = 0) -> QuotientReport:
    """Quotients ``|U_· v0|_{L^p(0,T;E)} / |v0|_{H^{s,2}}`` with ``E`` of order ``s - 1/p``."""
    check_admissible(p, q)
    s_hat = s - 1.0 / p
    if s_hat < 0:
        raise ValueError("need s - 1/p >= 0")
    M = int(round(T / dt))
    times = dt * np.arange(M + 1)
    v0s = np.asarray(v0s)
    if np.any(sobolev_norm(v0s, grid, s) == 0):
        raise ValueError("zero initial datum has no quotient")
    orbit = free_orbit(v0s, grid, times)
    num = lp_time_e_norm(orbit, grid, dt, p, s_hat, q, e_kind)
    den = sobolev_norm(v0s, grid, s)
    return _report(np.atleast_1d(num / den), T, p, q, s, {"dt": dt, "e_kind": e_kind}, seed=seed)


def strichartz_inhom(forcings, grid: TorusGrid, dt: float, p: float = 4, q: float = 4,
                     s: float = 1.0, e_kind: str = E_BESSEL, seed: int = 0):
    """Quotients of the Duhamel term against ``|f|_{L¹(0,T;H)}``.

    ``forcings`` has shape ``(draws, M, n, n)`` (left-endpoint samples).
    Returns ``(L^p(E) report, C(H) report)``.
    """
    from .evolution import deterministic_convolution_all

    check_admissible(p, q)
    s_hat = s - 1.0 / p
    forcings = np.asarray(forcings)
    M = forcings.shape[1]
    T = M * dt
    lp_q, c_q = [], []
    for f in forcings:
        duh = deterministic_convolution_all(f, grid, dt)
        l1 = dt * np.sum(sobolev_norm(f, grid, s))
        if l1 == 0:
            raise ValueError("zero forcing has no quotient")
        lp_q.append(float(lp_time_e_norm(duh, grid, dt, p, s_hat, q, e_kind)) / l1)
        c_q.append(float(np.max(sobolev_norm(duh, grid, s))) / l1)
    extra = {"dt": dt, "e_kind": e_kind}
    return (_report(lp_q, T, p, q, s, extra, seed=seed),
            _report(c_q, T, p, q, s, dict(extra, norm="C(H)"), seed=seed))


def _integrand_steps(xi, M, grid):
    xi = np.asarray(xi, dtype=complex)
    if xi.shape == (grid.n, grid.n):
        return np.broadcast_to(xi, (M, grid.n, grid.n))
    if xi.shape != (M, grid.n, grid.n):
        raise ValueError("integrand must be one field or one field per time step")
    return xi


@dataclass
class StochasticEstimate:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    ratio: float | None
    ratio_se: float | None
    max_lhs: float
    max_lhs_se: float
    max_ratio: float | None
    paths: int
    lhs_samples: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("lhs_samples")
        return d


def _ratio_se(num, num_se, den, den_se):
    if den == 0 or num == 0:
        return None
    r = num / den
    return abs(r) * np.hypot(num_se / num, den_se / den if den_se else 0.0)


def strichartz_stoch(xi, basis: NoiseBasis, paths: list[BrownianPath], p: float = 4,
                     q: float = 4, s: float = 1.0, steps: int | None = None,
                     e_kind: str = E_BESSEL) -> StochasticEstimate:
    """MC estimate of ``E∫|Jξ(t)|_E^p dt`` against ``E(∫|ξ|²_{R(K,H)} dt)^{p/2}``.

    ``xi`` is a deterministic multiplication integrand (one field, or one field
    per step). The maximal variant uses ``E sup_t |Jξ(t)|^p_H``.
    """
    if not p > 2:
        raise ValueError("p must exceed 2")
    if len(paths) < 32:
        raise ValueError("stochastic Strichartz estimates need at least 32 paths")
    check_admissible(p, q)
    grid = basis.grid
    s_hat = s - 1.0 / p
    dt = paths[0].dt
    M = paths[0].steps if steps is None else steps
    xi_t = _integrand_steps(xi, M, grid)
    rn = r_norm_sq(xi_t, basis, s)
    rhs_val = float((dt * np.sum(rn)) ** (p / 2))
    lhs, mx = [], []
    for path in paths:
        Jt = stochastic_convolution_all(xi_t, path.increments[:M], basis, dt)
        lhs.append(dt * float(np.sum(e_norm(Jt[:-1], grid, s_hat, q, e_kind) ** p)))
        mx.append(float(np.max(sobolev_norm(Jt, grid, s)) ** p))
    lhs, mx = np.asarray(lhs), np.asarray(mx)
    l, lse = float(lhs.mean()), batch_means_se(lhs)
    m, mse = float(mx.mean()), batch_means_se(mx)
    ratio = l / rhs_val if rhs_val > 0 else None
    return StochasticEstimate(
        lhs=l, lhs_se=lse, rhs=rhs_val, rhs_se=0.0, ratio=ratio,
        ratio_se=lse / rhs_val if rhs_val > 0 else None,
        max_lhs=m, max_lhs_se=mse, max_ratio=m / rhs_val if rhs_val > 0 else None,
        paths=len(paths), lhs_samples=lhs.tolist())


def ito_isometry(xi, basis: NoiseBasis, paths: list[BrownianPath], t_index: int | None = None):
    """``E|Jξ(t)|²_{L²}`` (MC, with SE) and the exact ``Σ_r dt ‖ξ_r‖²_{R(K,L²)}``."""
    grid = basis.grid
    dt = paths[0].dt
    M = paths[0].steps if t_index is None else t_index
    xi_t = _integrand_steps(xi, M, grid)
    vals = []
    for path in paths:
        Jt = stochastic_convolution_all(xi_t, path.increments[:M], basis, dt)
        vals.append(float(mass(Jt[-1], grid)))
    vals = np.asarray(vals)
    exact = float(dt * np.sum(r_norm_sq(xi_t, basis)))
    return {"mc": float(vals.mean()), "se": batch_means_se(vals), "exact": exact,
            "paths": len(paths)}


def burkholder_check(xi, basis: NoiseBasis, paths: list[BrownianPath], p: float = 4,
                     steps: int | None = None) -> dict:
    """Empirical ``E sup_t |∫ξ dW|^p_{L²} / E(∫‖ξ‖²_{R(K,L²)})^{p/2}``."""
    grid = basis.grid
    dt = paths[0].dt
    M = paths[0].steps if steps is None else steps
    xi_t = _integrand_steps(xi, M, grid)
    den = float((dt * np.sum(r_norm_sq(xi_t, basis))) ** (p / 2))
    sups = []
    for path in paths:
        incr = xi_t * noise_increment(path.increments[:M], basis)
        partial = np.cumsum(incr, axis=0)
        sups.append(float(np.max(lq_norm(partial, grid, 2)) ** p))
    sups = np.asarray(sups)
    num = float(sups.mean())
    if den == 0:
        return {"ratio": None, "degenerate": True, "lhs": num, "rhs": den}
    return {"ratio": num / den, "ratio_se": batch_means_se(sups) / den, "lhs": num,
            "rhs": den, "degenerate": False, "paths": len(paths)}


def kahane_khinchin_check(basis: NoiseBasis, p: float = 4, samples: int = 4096, seed: int = 0,
                          s_hat: float = 0.0, q: float = 2, e_kind: str = E_BESSEL) -> dict:
    """``(E|Σβ_jΛe_j|^p_E)^{1/p} / (E|Σβ_jΛe_j|²_E)^{1/2}`` on the same Gaussian draws."""
    grid = basis.grid
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal((samples, basis.J))
    fields = noise_increment(beta, basis).astype(complex)
    norms = e_norm(fields, grid, s_hat, q, e_kind)
    lp = float(np.mean(norms ** p) ** (1.0 / p))
    l2 = float(np.mean(norms ** 2) ** 0.5)
    return {"ratio": lp / l2 if l2 > 0 else None, "lp": lp, "l2": l2, "p": p,
            "samples": samples}


# Gronwall envelope ---------------------------------------------------------------

def gronwall_envelope(times, psi, masses, h1_sq, u0_l2: float, spec: CoefficientSpec) -> dict:
    """Fit the smallest ``C >= 0`` with
    ``mean Ψ̂(t) <= [mean Ψ̂(0) + C t φ(|u0|_{L²})] e^{Ct}`` at every mesh time,
    where ``Ψ̂ = Ψ + c·mass`` and ``c`` is the measured coercivity constant.

    ``psi``, ``masses``, ``h1_sq`` have shape ``(paths, times)``.
    """
    times = np.asarray(times, dtype=float)
    psi, masses, h1_sq = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (psi, masses, h1_sq))
    ok = masses > 0
    c = float(max(0.0, np.max((h1_sq[ok] - 2 * psi[ok]) / masses[ok]))) if ok.any() else 0.0
    shifted = psi + c * masses
    mean = shifted.mean(axis=0)
    phi = u0_l2 ** spec.phi_exponent
    base = mean[0]

    def envelope(t, C):
        return (base + C * t * phi) * np.exp(C * t)

    C = 0.0
    for t, target in zip(times[1:], mean[1:]):
        if envelope(t, C) >= target:
            continue
        hi = max(1.0, 2 * C)
        while envelope(t, hi) < target:
            hi *= 2
            if hi > 1e12:
                return {"C": np.inf, "c": c, "violations": int(len(times)), "finite": False}
        C = brentq(lambda x: envelope(t, x) - target, C, hi, xtol=1e-14, rtol=1e-12)
        C = float(np.nextafter(C, np.inf))
    env = envelope(times, C)
    tol = 1e-12 * np.maximum(1.0, np.abs(env))
    violations = int(np.sum(mean > env + tol))
    return {"C": C, "c": c, "violations": violations, "finite": bool(np.isfinite(C)),
            "phi": phi, "min_shifted": float(np.min(shifted)),
            "mean_shifted": mean.tolist(), "envelope": env.tolist()}

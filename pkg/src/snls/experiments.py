"""Experiment pipelines shared by the command line and the acceptance suite.

Each function returns plain dicts/lists of floats so results can be written
as artifacts directly.
"""
from __future__ import annotations

import math

import numpy as np

from . import diagnostics as dg
from .coefficients import CoefficientSpec
from .evolution import SimConfig, initial_state, run_batch, run_ensemble, picard_solve
from .nemytskii import audit_algebra, audit_growth, audit_lipschitz, cubic_K
from .noise import build_basis, sample_path, sample_paths
from .norms import lq_norm, sobolev_norm
from .torus import TorusGrid


def fitted_order(hs, errors) -> float:
    """Least-squares slope of ``log|error|`` against ``log h``."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.abs(np.asarray(errors, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


# mass conservation ------------------------------------------------------------------

def conservation(config: SimConfig, paths: int | None = None, seed: int | None = None,
                 threads: int = 1) -> dict:
    """Relative mass drift per recorded step for every path."""
    runs = run_ensemble(config, paths, seed, threads)
    drifts = []
    for r in runs:
        m = r.trajectory.diagnostics["mass"]
        drifts.append(np.abs(m / m[0] - 1.0))
    drifts = np.asarray(drifts)
    return {"times": runs[0].trajectory.times.tolist(),
            "drift": drifts.tolist(),
            "max_drift_per_path": drifts.max(axis=1).tolist(),
            "max_drift": float(drifts.max()),
            "blowups": sum(r.blew_up for r in runs)}


# Itô vs Stratonovich ----------------------------------------------------------------------

def _cv_estimate(y, controls, batches=dg.MC_BATCHES):
    """Control-variate mean of ``y`` using zero-mean controls; batch-means SE."""
    X = np.column_stack(controls)
    A = np.column_stack([np.ones_like(y), X])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    adj = y - X @ coef[1:]
    return float(adj.mean()), dg.batch_means_se(adj, batches)


def correction_bias(dts=(4e-3, 2e-3, 1e-3), paths: int = 256, seed: int = 0, T: float = 1.0,
                    amplitude: float = 1.0, n: int = 4) -> dict:
    """``E|u(T)|² - |u0|²`` for EM with and without the Itô correction.

    Single constant noise mode (weight 1, so ``p ≡ 1``), ``g̃ ≡ 1``, ``f = 0`` and a
    constant initial field. All step sizes use the same Brownian paths
    (summed onto coarser meshes). The statistic is reported per unit area
    (``|u|²`` at one node). The quadratic-variation sums
    ``X1 = Σ(ΔW² - p dt)`` and ``X2 = X1² - 2p²dt²N`` have mean zero and
    are used as control variates.
    """
    grid = TorusGrid(n)
    spec = CoefficientSpec(f_case="zero", g_case="constant", g_value=1.0)
    fine = min(dts)
    factors = [int(round(d / fine)) for d in dts]
    if any(abs(f * fine - d) > 1e-12 for f, d in zip(factors, dts)):
        raise ValueError("step sizes must be integer multiples of the finest")
    steps_fine = int(round(T / fine))
    base = sample_paths(1, fine, steps_fine, seed, paths)
    u0 = grid.constant(amplitude)
    p = 1.0
    out = {"dts": list(dts), "p": p, "paths": paths, "T": T, "with": [], "without": [],
           "with_se": [], "without_se": [], "exact_with": [], "exact_without": []}
    basis = build_basis(1, 4.0, grid)
    for dt, fac in zip(dts, factors):
        inc = np.stack([b.coarsen(fac).increments for b in base])
        N = inc.shape[1]
        x1 = np.sum(inc[:, :, 0] ** 2 - p * dt, axis=1)
        x2 = x1 ** 2 - 2 * p ** 2 * dt ** 2 * N
        for corr, key in ((True, "with"), (False, "without")):
            cfg = SimConfig(n=n, T=T, dt=dt, spec=spec, J=1, integrator="ito_em",
                            ito_correction=corr, record_every=N, strichartz=False, p=4, q=4,
                            initial={"kind": "constant", "amplitude": amplitude})
            res = run_batch(cfg, u0, inc, basis, list(range(paths)))
            y = np.array([r.final_state[0, 0] for r in res])
            y = np.abs(y) ** 2 - abs(amplitude) ** 2
            est, se = _cv_estimate(y, [x1, x2])
            out[key].append(est)
            out[key + "_se"].append(se)
        a2 = abs(amplitude) ** 2
        out["exact_with"].append(a2 * ((1 + 0.25 * p * p * dt * dt) ** N - 1))
        out["exact_without"].append(a2 * ((1 + p * dt) ** N - 1))
    out["order_with"] = fitted_order(dts, out["with"])
    out["gap"] = abs(amplitude) ** 2 * (math.exp(p * T) - 1)
    out["without_z"] = [w / s if s > 0 else math.inf for w, s in zip(out["without"], out["without_se"])]
    return out


def strong_error(config: SimConfig, dts, paths: int = 8, seed: int = 0) -> dict:
    """Mean ``|u_EM(T) - u_split(T)|_{L²}`` on common paths for each step size."""
    fine = min(dts)
    steps_fine = int(round(config.T / fine))
    base = sample_paths(config.J, fine, steps_fine, seed, paths)
    grid = config.grid
    basis = build_basis(config.J, config.rho, grid)
    u0 = initial_state(config, grid)
    errs = []
    for dt in dts:
        fac = int(round(dt / fine))
        inc = np.stack([b.coarsen(fac).increments for b in base])
        finals = {}
        for integ in ("ito_em", "lie"):
            cfg = SimConfig(**{**_cfg_kwargs(config), "dt": dt, "integrator": integ,
                               "record_every": int(round(config.T / dt))})
            res = run_batch(cfg, u0, inc, basis, list(range(paths)))
            finals[integ] = np.stack([r.final_state for r in res])
        errs.append(float(np.mean(lq_norm(finals["ito_em"] - finals["lie"], grid, 2))))
    return {"dts": list(dts), "errors": errs, "order": fitted_order(dts, errs)}


def _cfg_kwargs(config: SimConfig) -> dict:
    return {f: getattr(config, f) for f in config.__dataclass_fields__}


# energy pairing, m-formula ---------------------------------------------------------------------

def m_formula_check(spec: CoefficientSpec, count: int = 1000, radius: float = 5.0,
                    steps=(1e-5, 1e-6), seed: int = 0) -> dict:
    """FD derivative of ``ig`` along ``ig(z)`` against ``m(z)``, and
    ``Re(m(z) conj z) + |g(z)|²``."""
    rng = np.random.default_rng(seed)
    z = radius * np.sqrt(rng.random(count)) * np.exp(2j * np.pi * rng.random(count))
    ig = lambda w: 1j * spec.g(w)
    v = ig(z)
    m = spec.m(z)
    fd_err = {}
    for h in steps:
        fd = (ig(z + h * v) - ig(z - h * v)) / (2 * h)
        fd_err[h] = float(np.max(np.abs(fd - m)))
    ident = float(np.max(np.abs((m * np.conj(z)).real + np.abs(spec.g(z)) ** 2)))
    return {"fd_max_error": {str(h): e for h, e in fd_err.items()}, "identity_max": ident,
            "count": count, "radius": radius}


def pairing_check(grid: TorusGrid, spec: CoefficientSpec, count: int = 100, seed: int = 0,
                  amplitude: float = 1.0) -> dict:
    """Drift pairing residuals relative to ``1 + Ψ`` on band-limited random states."""
    rng = np.random.default_rng(seed)
    rel = []
    for _ in range(count):
        u = grid.random_bandlimited(rng)
        u = amplitude * u / np.max(np.abs(u))
        psi = float(dg.energy_psi(u, grid, spec).total)
        rel.append(abs(float(dg.pairing_drift(u, grid, spec))) / (1 + psi))
    return {"relative_residuals": rel, "max": float(max(rel)), "count": count}


# Nemytskii ------------------------------------------------------------------------------------

def nemytskii_suite(pairs: int = 200, n: int = 8, theta: float = 0.5, q: float = 4.0,
                    seed: int = 0, amplitude: float = 1.5) -> dict:
    """Audit the growth, Lipschitz and algebra inequalities for the cubic on
    random band-limited pairs with the analytic constants."""
    grid = TorusGrid(n)
    spec = CoefficientSpec(f_coeffs=(0.0, 1.0), g_case="constant")
    f = spec.f
    rng = np.random.default_rng(seed)
    records = []
    for i in range(pairs):
        amp = amplitude * rng.random(2)
        g = grid.random_bandlimited(rng)
        s = grid.random_bandlimited(rng)
        g = amp[0] * g / np.max(np.abs(g))
        s = amp[1] * s / np.max(np.abs(s))
        Rg = float(lq_norm(g, grid, np.inf))
        R = max(Rg, float(lq_norm(s, grid, np.inf)))
        recs = [audit_growth(f, g, grid, theta, q, K1=cubic_K(Rg, 1), seed=i)]
        recs += audit_lipschitz(f, g, s, grid, theta, q, K1=cubic_K(R, 1), K2=cubic_K(R, 2), seed=i)
        recs += audit_algebra(s, g, grid, theta, q, seed=i)
        records += [r.to_dict() | {"pair": i} for r in recs]
    violations = {}
    for r in records:
        violations.setdefault(r["inequality"], 0)
        if r["slack"] < 0:
            violations[r["inequality"]] += 1
    return {"records": records, "violations": violations, "pairs": pairs, "n": n,
            "theta": theta, "q": q}


# Strichartz --------------------------------------------------------------------------------------

def random_data(grid: TorusGrid, count: int, seed: int, cutoff: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([grid.random_bandlimited(rng, cutoff) for _ in range(count)])


def strichartz_hom_sweep(grid: TorusGrid, Ts=(1.0, 0.5, 0.25, 0.125), draws: int = 100,
                         dt: float = 2.0 ** -8, p=4, q=4, s=1.0, seed: int = 0) -> dict:
    v0s = random_data(grid, draws, seed)
    reports = [dg.strichartz_hom(v0s, grid, T, dt, p, q, s, seed=seed) for T in Ts]
    maxes = [r.max for r in reports]
    bands = [r.band for r in reports]
    # Moving to the next (smaller) T the max may not grow beyond one band.
    monotone = all(maxes[i + 1] <= maxes[i] + max(bands[i], bands[i + 1])
                   for i in range(len(Ts) - 1))
    return {"T": list(Ts), "max": maxes, "mean": [r.mean for r in reports], "band": bands,
            "finite": bool(np.all(np.isfinite(maxes))), "nonincreasing": monotone,
            "reports": [r.to_dict() for r in reports]}


def strichartz_inhom_check(grid: TorusGrid, draws: int = 100, T: float = 1.0,
                           dt: float = 2.0 ** -6, p=4, q=4, s=1.0, seed: int = 0) -> dict:
    """Half of the draws are white-in-time random forcings; the other half are
    coherent forcings ``f(t_r) = U_{t_r} v``, for which ``U∗f(T) = T U_T v``
    and the C-norm quotient equals 1 up to rounding."""
    M = int(round(T / dt))
    rng = np.random.default_rng(seed)
    times = dt * np.arange(M)
    forcings = []
    for i in range(draws):
        if i % 2:
            v = grid.random_bandlimited(rng)
            forcings.append(dg.free_orbit(v, grid, times))
        else:
            forcings.append(np.stack([grid.random_bandlimited(rng) for _ in range(M)]))
    forcings = np.stack(forcings)
    lp, c = dg.strichartz_inhom(forcings, grid, dt, p, q, s, seed=seed)
    return {"lp": lp.to_dict(), "c_norm": c.to_dict(), "c_max": c.max}


def strichartz_stoch_sweep(grid: TorusGrid, Js=(2, 4, 8), paths: int = 64, T: float = 0.5,
                           dt: float = 2.0 ** -7, rho: float = 4.0, p=4, q=4, s=1.0,
                           seed: int = 0, xi_seed: int = 1) -> dict:
    """Stochastic Strichartz ratio and Itô isometry across noise truncations.

    All truncations share the same Brownian paths (mode streams do not
    depend on ``J``).
    """
    M = int(round(T / dt))
    rng = np.random.default_rng(xi_seed)
    xi = grid.random_bandlimited(rng, max(1, grid.n // 8))
    xi = xi / np.max(np.abs(xi))
    base = sample_paths(max(Js), dt, M, seed, paths)
    out = {"J": list(Js), "ratio": [], "ratio_se": [], "max_ratio": [], "iso_mc": [], "iso_se": [],
           "iso_exact": [], "T": T, "paths": paths}
    for J in Js:
        basis = build_basis(J, rho, grid)
        est = dg.strichartz_stoch(xi, basis, base, p, q, s)
        iso = dg.ito_isometry(xi, basis, base)
        out["ratio"].append(est.ratio)
        out["ratio_se"].append(est.ratio_se)
        out["max_ratio"].append(est.max_ratio)
        out["iso_mc"].append(iso["mc"])
        out["iso_se"].append(iso["se"])
        out["iso_exact"].append(iso["exact"])
    r, se = np.asarray(out["ratio"]), np.asarray(out["ratio_se"])
    stable = all(abs(r[i] - r[j]) <= 2 * math.hypot(se[i], se[j])
                 for i in range(len(Js)) for j in range(i + 1, len(Js)))
    iso_ok = all(abs(m - e) <= 3 * s_ for m, e, s_ in zip(out["iso_mc"], out["iso_exact"], out["iso_se"]))
    out.update(stable=stable, isometry_ok=iso_ok, finite=bool(np.all(np.isfinite(r))))
    return out


# Picard -----------------------------------------------------------------------------------------

def picard_experiment(config: SimConfig, fine_dt: float = 1e-5, noisy_T: float = 0.02,
                      seed: int = 0) -> dict:
    """Deterministic Picard run against a fine splitting run, plus a noisy run."""
    det_spec = CoefficientSpec(f_case=config.spec.f_case, f_coeffs=config.spec.f_coeffs,
                               f_C=config.spec.f_C, sigma=config.spec.sigma,
                               g_case="constant", g_value=0.0)
    det = SimConfig(**{**_cfg_kwargs(config), "spec": det_spec})
    grid = det.grid
    u0 = initial_state(det, grid)
    pr = picard_solve(u0, det)
    stride = int(round(det.dt / fine_dt))
    fine = SimConfig(**{**_cfg_kwargs(det), "dt": fine_dt, "store_states": True,
                        "record_every": stride, "integrator": "lie"})
    ref = run_batch(fine, u0, None)[0].trajectory.states
    X = pr.trajectory.states
    match = float(np.max(lq_norm(X - ref, grid, 2)) / np.max(lq_norm(ref, grid, 2)))
    noisy_cfg = SimConfig(**{**_cfg_kwargs(config), "T": noisy_T})
    path = sample_path(config.J, config.dt, noisy_cfg.steps, seed)
    pn = picard_solve(u0, noisy_cfg, path)
    return {"deterministic": pr.report(), "match_sup_l2_rel": match,
            "noisy": pn.report(), "noisy_T": noisy_T,
            "deterministic_contracts": bool(pr.converged and all(r < 1 for r in pr.ratios)),
            "noisy_contracts": bool(pn.converged and all(r < 1 for r in pn.ratios))}


# global behaviour -----------------------------------------------------------------------------

def energy_envelope(config: SimConfig, paths: int | None = None, seed: int | None = None,
                    threads: int = 1, hit_factor: float = 100.0) -> dict:
    """Hits at ``hit_factor·|u0|_{H^{1,2}}``, blow-ups, Gronwall fit and the
    coercivity offset over an ensemble. Records past a resolution-loss flag
    are excluded."""
    cfg = SimConfig(**{**_cfg_kwargs(config), "threshold_factors": (hit_factor,)})
    runs = run_ensemble(cfg, paths, seed, threads)
    grid = cfg.grid
    u0 = initial_state(cfg, grid)
    times = runs[0].trajectory.times
    keep = []
    for r in runs:
        if r.blew_up or r.resolution_loss_time is not None:
            continue
        keep.append(r)
    hits = sum(1 for r in runs for h in r.hits if h.monitor == "h1" and h.hit)
    out = {"paths": len(runs), "accepted": len(keep), "hits": hits,
           "blowups": sum(r.blew_up for r in runs),
           "resolution_losses": sum(r.resolution_loss_time is not None for r in runs),
           "threshold": float(hit_factor * sobolev_norm(u0, grid, 1.0)), "times": times.tolist()}
    if keep:
        d = lambda k: np.stack([r.trajectory.diagnostics[k] for r in keep])
        psi, mass, h1 = d("energy"), d("mass"), d("h1")
        env = dg.gronwall_envelope(times, psi, mass, h1 ** 2, float(lq_norm(u0, grid, 2)), cfg.spec)
        out.update(gronwall=env, mean_psi=psi.mean(axis=0).tolist(),
                   min_shifted=float(np.min(psi + env["c"] * mass)))
    return out

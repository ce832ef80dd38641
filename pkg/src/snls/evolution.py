"""Time stepping: exact-phase splitting, Euler-Maruyama in Itô form, and the
cutoff-truncated Picard iteration, plus hitting-time monitors.

The equation is ``du = i[Δu - f(u)]dt - i g(u)∘dW`` with Itô form
``du = [iΔu - i f(u) + ½ p m(u)]dt - i g(u)dW``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict, replace
import math

import numpy as np

from .coefficients import CoefficientSpec, cutoff_theta
from .diagnostics import check_admissible, ito_drift_psi, kinetic_from_spectrum
from .noise import NoiseBasis, BrownianPath, build_basis, noise_increment, sample_path
from .norms import E_BESSEL, E_SLOBODETSKII, Trajectory, e_norm, y_norm_profile, sobolev_norm, lq_norm
from .torus import NonFiniteFieldError, TorusGrid

INTEGRATORS = ("lie", "strang", "ito_em")
RESOLUTION_LOSS_FRACTION = 0.01


class StepAborted(NonFiniteFieldError):
    """Raised when a step produces NaN/Inf; carries the pre-step state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class SimConfig:
    n: int = 32
    side: float = 2 * math.pi
    T: float = 1.0
    dt: float = 1e-3
    spec: CoefficientSpec = field(default_factory=CoefficientSpec)
    J: int = 8
    rho: float = 4.0
    seed: int = 0
    integrator: str = "lie"
    ito_correction: bool = True
    exponential: bool = True
    n_cut: float = 1e3
    smooth_cutoff: bool = False
    picard_max_iter: int = 50
    picard_tol: float = 1e-8
    thresholds: tuple = ()
    threshold_factors: tuple = ()     # thresholds as multiples of |u0|_{H^{1,2}}
    stop_at_first_hit: bool = False
    p: float = 4.0
    q: float = 4.0
    s: float = 1.0
    strichartz: bool = True
    e_kind: str = E_BESSEL
    record_every: int = 1
    store_states: bool = False
    record_qv: bool = False
    initial: dict = field(default_factory=lambda: {"kind": "gaussian", "amplitude": 1.0, "width": 1.0})
    paths: int = 1
    batch: int = 8

    def __post_init__(self):
        self.thresholds = tuple(float(k) for k in self.thresholds)
        self.threshold_factors = tuple(float(k) for k in self.threshold_factors)
        self.validate()

    @property
    def s_hat(self) -> float:
        return self.s - 1.0 / self.p

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n, self.side)

    def validate(self) -> None:
        if not self.T > 0 or not self.dt > 0:
            raise ValueError("T and dt must be positive")
        if abs(self.steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}; choose from {INTEGRATORS}")
        if not 2 < self.p < math.inf:
            raise ValueError("p must lie in (2, ∞)")
        if self.strichartz:
            check_admissible(self.p, self.q)
        if not (1 - 1 / self.p < self.s <= 1):
            raise ValueError(f"s must lie in (1 - 1/p, 1], got s={self.s}")
        if self.e_kind not in (E_BESSEL, E_SLOBODETSKII):
            raise ValueError(f"unknown E-norm kind {self.e_kind!r}")
        if self.J < 1 or self.paths < 1 or self.batch < 1 or self.record_every < 1:
            raise ValueError("J, paths, batch and record_every must be positive")
        if self.n_cut < 1:
            raise ValueError("cutoff level must be >= 1")
        if any(k < 0 for k in self.thresholds + self.threshold_factors):
            raise ValueError("thresholds must be nonnegative")
        self.spec.validate()
        TorusGrid(self.n, self.side)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"] = self.spec.to_dict()
        d["thresholds"] = list(self.thresholds)
        d["threshold_factors"] = list(self.threshold_factors)
        return d


def initial_state(config: SimConfig, grid: TorusGrid | None = None) -> np.ndarray:
    """Initial datum described by ``config.initial``.

    Kinds: ``constant`` (amplitude), ``plane_wave`` (k1, k2, amplitude),
    ``gaussian`` (amplitude, width; centred), ``random`` (amplitude, cutoff,
    seed; band-limited, scaled to sup modulus ``amplitude``), ``zero``.
    """
    grid = grid or config.grid
    ini = dict(config.initial)
    kind = ini.get("kind", "gaussian")
    amp = float(ini.get("amplitude", 1.0))
    if kind == "zero":
        return np.zeros((grid.n, grid.n), dtype=complex)
    if kind == "constant":
        return grid.constant(amp)
    if kind == "plane_wave":
        return grid.plane_wave(int(ini.get("k1", 1)), int(ini.get("k2", 0)), amp)
    if kind == "gaussian":
        w = float(ini.get("width", 1.0))
        x1, x2 = grid.coords
        c = grid.side / 2
        return (amp * np.exp(-((x1 - c) ** 2 + (x2 - c) ** 2) / (2 * w * w))).astype(complex)
    if kind == "random":
        rng = np.random.default_rng(int(ini.get("seed", 0)))
        cutoff = int(ini.get("cutoff", max(1, grid.n // 8)))
        u = grid.random_bandlimited(rng, cutoff)
        return amp * u / np.max(np.abs(u))
    raise ValueError(f"unknown initial datum kind {kind!r}")


# single steps -------------------------------------------------------------------

def _finite_or_abort(new, old, what):
    if not np.all(np.isfinite(new)):
        raise StepAborted(f"non-finite values after {what}", state=np.array(old, copy=True))
    return new


def _linear(u, grid, t):
    return grid.ifft(grid.propagator_symbol(t) * grid.fft(u))


def _phase_substeps(u, dt, dW, spec):
    # Nonlinear and noise phases both leave |u| pointwise fixed, so they commute.
    r = np.abs(u) ** 2
    phase = spec.f_tilde(r) * dt
    if dW is not None:
        phase = phase + spec.g_tilde_fn(r) * dW
    return u * np.exp(-1j * phase)


def step_splitting(u, dt: float, dW, spec: CoefficientSpec, grid: TorusGrid,
                   strang: bool = False) -> np.ndarray:
    """One Lie (or Strang) step of the three exact sub-flows.

    ``dW`` is the real noise increment field (or ``None`` for no noise).
    """
    if not np.all(np.isfinite(u)):
        raise StepAborted("non-finite input state", state=np.array(u, copy=True))
    if strang:
        v = _linear(u, grid, dt / 2)
        v = _phase_substeps(v, dt, dW, spec)
        v = _linear(v, grid, dt / 2)
    else:
        v = _linear(u, grid, dt)
        v = _phase_substeps(v, dt, dW, spec)
    return _finite_or_abort(v, u, "splitting step")


def step_ito_em(u, dt: float, dW, spec: CoefficientSpec, grid: TorusGrid, p_field=None,
                correction: bool = True, exponential: bool = True) -> np.ndarray:
    """One Euler-Maruyama step of the Itô form.

    With ``exponential`` the linear part is integrated exactly:
    ``U_dt[u + dt(-i f(u) + ½ p m(u)) - i g(u) dW]``; otherwise
    ``u + dt(iΔu - i f(u) + ½ p m(u)) - i g(u) dW``.
    """
    if not np.all(np.isfinite(u)):
        raise StepAborted("non-finite input state", state=np.array(u, copy=True))
    drift = -1j * spec.f(u)
    if correction:
        if p_field is None:
            raise ValueError("the Itô correction needs the trace field p")
        drift = drift + 0.5 * p_field * spec.m(u)
    incr = dt * drift
    if dW is not None:
        incr = incr - 1j * spec.g(u) * dW
    if exponential:
        v = _linear(u + incr, grid, dt)
    else:
        v = u + dt * 1j * grid.laplacian(u) + incr
    return _finite_or_abort(v, u, "Euler-Maruyama step")


# trajectories ------------------------------------------------------------------------

@dataclass
class HittingRecord:
    threshold: float
    hit: bool = False
    time: float | None = None
    monitor: str = "h1"

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    trajectory: Trajectory
    hits: list
    path_id: int = 0
    blowup_time: float | None = None
    resolution_loss_time: float | None = None
    stopped_time: float | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def blew_up(self) -> bool:
        return self.blowup_time is not None

    def summary(self) -> dict:
        d = self.trajectory.diagnostics
        return {
            "path_id": self.path_id,
            "blowup_time": self.blowup_time,
            "resolution_loss_time": self.resolution_loss_time,
            "stopped_time": self.stopped_time,
            "hits": [h.to_dict() for h in self.hits],
            "max_mass_drift": float(np.nanmax(np.abs(d["mass"] / d["mass"][0] - 1)))
            if d["mass"][0] > 0 else 0.0,
            **({"qv_flags": qv_flags(self.trajectory)} if "qv_drift" in d else {}),
        }


DIAG_KEYS = ("mass", "kinetic", "potential", "energy", "h1", "e_norm", "y_norm", "top_shell")
QV_KEYS = ("qv_grad", "qv_q", "qv_f", "qv_drift")
QV_FLAG_RTOL = 1e-10


def _diagnostics(u, grid, spec, s, s_hat, q, e_kind):
    u_hat = grid.fft(u)
    a2 = np.abs(u_hat) ** 2
    norm = grid.cell_area / grid.n ** 2
    m = norm * np.sum(a2, axis=(-2, -1))
    kin = kinetic_from_spectrum(u_hat, grid)
    pot = 0.5 * grid.cell_area * np.sum(spec.antiderivative_F(np.abs(u) ** 2), axis=(-2, -1))
    h1 = np.sqrt(norm * np.sum((1 + grid.k2) * a2, axis=(-2, -1)))
    hs = h1 if s == 1 else np.sqrt(norm * np.sum((1 + grid.k2) ** s * a2, axis=(-2, -1)))
    if e_kind == E_BESSEL:
        e = lq_norm(grid.ifft((1 + grid.k2) ** (s_hat / 2) * u_hat), grid, q)
    else:
        e = e_norm(u, grid, s_hat, q, e_kind)
    top = grid.top_shell_fraction(u)
    return {"mass": m, "kinetic": kin, "potential": pot, "energy": kin + pot, "h1": h1,
            "e_norm": e, "top_shell": top}, hs


def qv_flags(tr: Trajectory) -> int:
    """Recorded steps where the Itô drift of Ψ exceeds the sum of the three
    integrands. The truncated trace differs from the continuum one, so these
    are flags for inspection, not failures."""
    d = tr.diagnostics
    bound = d["qv_grad"] + d["qv_q"] + d["qv_f"]
    excess = d["qv_drift"] - bound
    with np.errstate(invalid="ignore"):
        return int(np.sum(excess > QV_FLAG_RTOL * np.maximum(1.0, np.abs(bound))))


def qv_integrands(u, basis: NoiseBasis, spec: CoefficientSpec):
    """The three integrands bounding the Itô correction of ``Ψ``:
    ``∫|g'(u)|²|∇u|²p``, ``∫|g(u)|²q`` and ``½∫f̃(|u|²)|g(u)|²p``."""
    grid = basis.grid
    g1, g2 = grid.gradient(u)
    jac = spec.g.jacobian(u)
    gp = np.linalg.norm(jac, ord=2, axis=(-2, -1)) ** 2
    gu2 = np.abs(spec.g(u)) ** 2
    p, qf = basis.p_field, basis.q_field
    a = grid.integrate(gp * (np.abs(g1) ** 2 + np.abs(g2) ** 2) * p)
    b = grid.integrate(gu2 * qf)
    c = 0.5 * grid.integrate(spec.f_tilde(np.abs(u) ** 2) * gu2 * p)
    return a, b, c


def run_batch(config: SimConfig, u0: np.ndarray, increments: np.ndarray | None,
              basis: NoiseBasis | None = None, path_ids=None) -> list[RunResult]:
    """Integrate a batch of independent paths in lock step.

    ``u0`` is ``(n, n)`` or ``(B, n, n)``; ``increments`` is ``(B, steps, J)``
    or ``None`` for a deterministic run. Diagnostics are recorded every
    ``record_every`` steps; hitting monitors run at every step.
    """
    grid = config.grid
    spec = config.spec
    M = config.steps
    if increments is not None:
        increments = np.asarray(increments)
        B = increments.shape[0]
        if increments.shape[1] < M:
            raise ValueError(f"path horizon {increments.shape[1]} steps is shorter than T ({M} steps)")
    else:
        B = 1 if np.ndim(u0) == 2 else np.shape(u0)[0]
    u = np.array(np.broadcast_to(np.asarray(u0, dtype=complex), (B, grid.n, grid.n)))
    path_ids = list(range(B)) if path_ids is None else list(path_ids)
    if increments is not None and basis is None:
        basis = build_basis(config.J, config.rho, grid)
    p_field = basis.p_field if basis is not None else None
    s, s_hat, q, P = config.s, config.s_hat, config.q, config.p

    rec_idx = list(range(0, M + 1, config.record_every))
    if rec_idx[-1] != M:
        rec_idx.append(M)
    rec_set = set(rec_idx)
    n_rec = len(rec_idx)
    keys = DIAG_KEYS + (QV_KEYS if config.record_qv and basis is not None else ())
    diag = {k: np.full((B, n_rec), np.nan) for k in keys}
    states = np.full((B, n_rec, grid.n, grid.n), np.nan, dtype=complex) if config.store_states else None
    alive = np.ones(B, dtype=bool)          # finite so far
    running = np.ones(B, dtype=bool)        # not stopped by a hit
    blowup = [None] * B
    res_loss = [None] * B
    stopped = [None] * B

    d0, hs0 = _diagnostics(u, grid, spec, s, s_hat, q, config.e_kind)
    h1_0 = d0["h1"]
    hit_levels = [(k, None) for k in config.thresholds] + [(None, f) for f in config.threshold_factors]
    hits = [[HittingRecord(k if k is not None else float(f * h1_0[b])) for k, f in hit_levels]
            for b in range(B)]
    y_hits = [[HittingRecord(float(2 * config.n_cut), monitor="y")] for _ in range(B)]
    sup_part = np.zeros(B)
    integral = np.zeros(B)

    def record(i, j, d, hs):
        nonlocal sup_part, integral
        t = i * config.dt
        with np.errstate(over="ignore", invalid="ignore"):
            sup_part = np.where(alive, np.maximum(sup_part, hs ** P), sup_part)
            y = (sup_part + integral) ** (1 / P)
        for b in range(B):
            if not (alive[b] and running[b]):
                continue
            for rec in hits[b]:
                if not rec.hit and d["h1"][b] >= rec.threshold:
                    rec.hit, rec.time = True, t
                    if config.stop_at_first_hit:
                        stopped[b] = t
            yr = y_hits[b][0]
            if not yr.hit and y[b] >= yr.threshold:
                yr.hit, yr.time = True, t
            if res_loss[b] is None and d["top_shell"][b] > RESOLUTION_LOSS_FRACTION:
                res_loss[b] = t
        if j is not None:
            live = alive & running
            for k in DIAG_KEYS:
                val = y if k == "y_norm" else d[k]
                diag[k][live, j] = val[live]
            if len(keys) > len(DIAG_KEYS):
                for b in np.flatnonzero(live):
                    vals = qv_integrands(u[b], basis, spec) + (ito_drift_psi(u[b], basis, spec),)
                    for k, v in zip(QV_KEYS, vals):
                        diag[k][b, j] = v
            if states is not None:
                states[live, j] = u[live]
        with np.errstate(over="ignore", invalid="ignore"):
            integral = integral + np.where(alive, config.dt * d["e_norm"] ** P, 0.0)
        for b in range(B):
            if stopped[b] is not None:
                running[b] = False

    record(0, 0, d0, hs0)
    j = 1
    for i in range(M):
        if not np.any(alive & running):
            break
        dW = noise_increment(increments[:, i], basis) if increments is not None else None
        with np.errstate(all="ignore"):
            if config.integrator == "ito_em":
                new = _ito_em_unchecked(u, config.dt, dW, spec, grid, p_field,
                                        config.ito_correction, config.exponential)
            else:
                new = _splitting_unchecked(u, config.dt, dW, spec, grid, config.integrator == "strang")
        finite = np.all(np.isfinite(new), axis=(-2, -1))
        for b in np.flatnonzero(alive & ~finite):
            blowup[b] = (i + 1) * config.dt
        alive &= finite
        u = np.where(alive[:, None, None], new, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            d, hs = _diagnostics(u, grid, spec, s, s_hat, q, config.e_kind)
        if i + 1 in rec_set:
            record(i + 1, j, d, hs)
            j += 1
        else:
            record(i + 1, None, d, hs)

    times = config.dt * np.asarray(rec_idx, dtype=float)
    out = []
    for b in range(B):
        dg = {k: v[b] for k, v in diag.items()}
        st = states[b] if states is not None else None
        tr = Trajectory(grid, times, st, dg)
        out.append(RunResult(tr, hits[b] + y_hits[b], path_ids[b], blowup[b], res_loss[b],
                             stopped[b], None if blowup[b] is not None else u[b].copy()))
    return out


def _splitting_unchecked(u, dt, dW, spec, grid, strang):
    if strang:
        v = _linear(u, grid, dt / 2)
        return _linear(_phase_substeps(v, dt, dW, spec), grid, dt / 2)
    return _phase_substeps(_linear(u, grid, dt), dt, dW, spec)


def _ito_em_unchecked(u, dt, dW, spec, grid, p_field, correction, exponential):
    drift = -1j * spec.f(u)
    if correction and p_field is not None:
        drift = drift + 0.5 * p_field * spec.m(u)
    incr = dt * drift
    if dW is not None:
        incr = incr - 1j * spec.g(u) * dW
    if exponential:
        return _linear(u + incr, grid, dt)
    return u + dt * 1j * grid.laplacian(u) + incr


def run_trajectory(config: SimConfig, path: BrownianPath | None, u0=None,
                   basis: NoiseBasis | None = None) -> RunResult:
    """Single-path run; ``path=None`` integrates the deterministic equation."""
    if u0 is None:
        u0 = initial_state(config)
    if path is not None and path.steps < config.steps:
        raise ValueError("path horizon shorter than T")
    inc = None if path is None else path.increments[None, :config.steps]
    pid = 0 if path is None else path.path_id
    return run_batch(config, u0, inc, basis, [pid])[0]


def ensemble_paths(config: SimConfig, count: int, seed: int, first_id: int = 0):
    return [sample_path(config.J, config.dt, config.steps, seed, first_id + i) for i in range(count)]


def run_ensemble(config: SimConfig, paths: int | None = None, seed: int | None = None,
                 threads: int = 1, u0=None, deterministic: bool = False) -> list[RunResult]:
    """Run ``paths`` trajectories in fixed-size batches.

    Batch composition depends only on ``config.batch``, never on ``threads``,
    so results are bit-identical for any thread count.
    """
    paths = config.paths if paths is None else paths
    seed = config.seed if seed is None else seed
    grid = config.grid
    basis = build_basis(config.J, config.rho, grid)
    if u0 is None:
        u0 = initial_state(config, grid)
    starts = list(range(0, paths, config.batch))

    def work(start):
        ids = list(range(start, min(start + config.batch, paths)))
        if deterministic:
            return run_batch(config, np.broadcast_to(u0, (len(ids),) + np.shape(u0)[-2:]),
                             None, None, ids)
        inc = np.stack([sample_path(config.J, config.dt, config.steps, seed, i).increments
                        for i in ids])
        return run_batch(config, u0, inc, basis, ids)

    if threads <= 1:
        batches = [work(s0) for s0 in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            batches = list(ex.map(work, starts))
    return [r for b in batches for r in b]


# Duhamel sums and Picard ---------------------------------------------------------------

def deterministic_convolution_all(forcing: np.ndarray, grid: TorusGrid, dt: float) -> np.ndarray:
    """``(U∗f)(t_i) = Σ_{r<i} dt U_{t_i - t_r} f(t_r)`` for every mesh index.

    ``forcing`` has shape ``(M, ..., n, n)``; result ``(M+1, ..., n, n)``.
    """
    forcing = np.asarray(forcing)
    M = forcing.shape[0]
    sym = grid.propagator_symbol(dt)
    out = np.zeros((M + 1,) + forcing.shape[1:], dtype=complex)
    acc = np.zeros(forcing.shape[1:], dtype=complex)
    for r in range(M):
        acc = grid.ifft(sym * grid.fft(acc + dt * forcing[r]))
        out[r + 1] = acc
    return out


def deterministic_convolution(forcing, t_index: int, grid: TorusGrid, dt: float) -> np.ndarray:
    """Single-time version of :func:`deterministic_convolution_all`."""
    forcing = np.asarray(forcing)
    if t_index > forcing.shape[0]:
        raise ValueError(f"mesh mismatch: t_index {t_index} beyond {forcing.shape[0]} forcing samples")
    if t_index == 0:
        return np.zeros(forcing.shape[1:], dtype=complex)
    return deterministic_convolution_all(forcing[:t_index], grid, dt)[-1]


@dataclass
class PicardResult:
    trajectory: Trajectory
    ratios: list
    differences: list
    converged: bool
    iterations: int
    flagged: bool = False
    cutoff_active: bool = False

    def report(self) -> dict:
        return {"ratios": self.ratios, "differences": self.differences,
                "converged": self.converged, "iterations": self.iterations,
                "flagged": self.flagged, "cutoff_active": self.cutoff_active}


def picard_solve(u0, config: SimConfig, path: BrownianPath | None = None,
                 basis: NoiseBasis | None = None, T: float | None = None,
                 n_cut: float | None = None) -> PicardResult:
    """Fixed-point iteration of the truncated mild equation

    ``X(t) = U_t u0 - i Σ dt U_{t-r} θ_n(|X|_{Y_r}) f(X(r))
    - i Σ U_{t-r} θ_n(|X|_{Y_r}) g(X(r)) ΔW_r``

    on the mesh of ``config.dt`` over a fixed path. Ratios are
    ``|X^{k+1} - X^k|_{Y_T} / |X^k - X^{k-1}|_{Y_T}``.
    """
    grid = config.grid
    spec = config.spec
    T = config.T if T is None else T
    n_cut = config.n_cut if n_cut is None else n_cut
    dt = config.dt
    M = int(round(T / dt))
    P, s, s_hat, q, kind = config.p, config.s, config.s_hat, config.q, config.e_kind
    times = dt * np.arange(M + 1)
    u0 = np.asarray(u0, dtype=complex)
    free = grid.ifft(np.exp(-1j * np.multiply.outer(times, grid.k2)) * grid.fft(u0))
    if path is not None:
        if basis is None:
            basis = build_basis(config.J, config.rho, grid)
        if path.steps < M:
            raise ValueError("path horizon shorter than T")
        dW = noise_increment(path.increments[:M], basis)
    else:
        dW = None

    def ynorm(x):
        return float(y_norm_profile(x, grid, dt, P, s, s_hat, q, kind)[-1])

    def picard_map(x):
        prof = y_norm_profile(x, grid, dt, P, s, s_hat, q, kind)
        th = cutoff_theta(prof[:-1], n_cut, config.smooth_cutoff)[:, None, None]
        xs = x[:-1]
        out = free + deterministic_convolution_all(-1j * th * spec.f(xs), grid, dt)
        if dW is not None:
            # Noise part: Σ_{r<i} U_{t_i - t_r}[-i θ g(X_r) ΔW_r], written as a Duhamel
            # sum with forcing (-i θ g ΔW)/dt.
            out = out + deterministic_convolution_all(-1j * th * spec.g(xs) * dW / dt, grid, dt)
        return out, bool(np.any(th < 1))

    X = free
    ratios, diffs = [], []
    best, best_diff = X, math.inf
    converged = flagged = False
    streak = 0
    cutoff_active = False
    it = 0
    for it in range(1, config.picard_max_iter + 1):
        X_new, active = picard_map(X)
        cutoff_active |= active
        d = ynorm(X_new - X)
        diffs.append(d)
        if len(diffs) > 1:
            ratios.append(d / diffs[-2] if diffs[-2] > 0 else 0.0)
            streak = streak + 1 if ratios[-1] >= 1 else 0
        X = X_new
        if d < best_diff:
            best, best_diff = X, d
        if d <= config.picard_tol * max(ynorm(X), 1e-300) or d == 0:
            converged = True
            best = X
            break
        if streak >= 3:
            flagged = True
            break
    tr = Trajectory(grid, times, best, {"y_norm": y_norm_profile(best, grid, dt, P, s, s_hat, q, kind),
                                        "l2": sobolev_norm(best, grid, 0)})
    return PicardResult(tr, ratios, diffs, converged, it, flagged, cutoff_active)

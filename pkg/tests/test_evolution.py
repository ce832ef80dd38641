import numpy as np
import pytest

from snls.coefficients import CoefficientSpec
from snls.evolution import (SimConfig, StepAborted, deterministic_convolution,
                            deterministic_convolution_all, initial_state, picard_solve,
                            run_batch, run_ensemble, run_trajectory, step_ito_em, step_splitting)
from snls.experiments import strong_error
from snls.noise import build_basis, noise_field, sample_path
from snls.norms import lq_norm, sobolev_norm
from snls.torus import TorusGrid

FREE = CoefficientSpec(f_case="zero", g_case="constant", g_value=0.0)
CUBIC_DET = CoefficientSpec(f_coeffs=(0.0, 1.0), g_case="constant", g_value=0.0)


def mass(u, grid):
    return float(lq_norm(u, grid, 2)) ** 2


# configuration ----------------------------------------------------------------------

def test_config_defaults_and_s_hat():
    cfg = SimConfig()
    assert (cfg.n, cfg.p, cfg.q, cfg.s) == (32, 4, 4, 1)
    assert cfg.s_hat == pytest.approx(0.75)
    assert cfg.steps == 1000


def test_config_constraints():
    with pytest.raises(ValueError, match="scaling condition 2/p\\+2/q=1 violated"):
        SimConfig(p=4, q=3)
    SimConfig(p=4, q=3, strichartz=False)
    with pytest.raises(ValueError, match="s must lie"):
        SimConfig(s=0.5)
    with pytest.raises(ValueError):
        SimConfig(T=1.0, dt=0.3)
    with pytest.raises(ValueError):
        SimConfig(integrator="rk4")
    with pytest.raises(ValueError):
        SimConfig(spec=CoefficientSpec(f_case="focusing_power", sigma=0.9), n=7)


def test_initial_states(grid):
    cfg = SimConfig(initial={"kind": "plane_wave", "k1": 2, "k2": 1, "amplitude": 0.5})
    np.testing.assert_allclose(initial_state(cfg), grid.plane_wave(2, 1, 0.5))
    cfg = SimConfig(initial={"kind": "random", "amplitude": 2.0, "seed": 3})
    assert np.max(np.abs(initial_state(cfg))) == pytest.approx(2.0)
    assert np.all(initial_state(SimConfig(initial={"kind": "zero"})) == 0)
    with pytest.raises(ValueError):
        initial_state(SimConfig(initial={"kind": "soliton"}))


# single steps ----------------------------------------------------------------------------

def test_splitting_free_is_propagator(grid, rng):
    u = grid.random_bandlimited(rng)
    np.testing.assert_allclose(step_splitting(u, 0.01, None, FREE, grid),
                               grid.free_propagator(u, 0.01), atol=1e-13)


def test_splitting_constant_modulus_gives_global_phase(grid):
    u = grid.plane_wave(1, 2, 0.7)
    out = step_splitting(u, 0.01, None, CUBIC_DET, grid)
    expected = grid.free_propagator(u, 0.01) * np.exp(-1j * 0.49 * 0.01)
    np.testing.assert_allclose(out, expected, atol=1e-13)


@pytest.mark.parametrize("strang", [False, True])
def test_splitting_conserves_mass(grid, rng, strang):
    spec = CoefficientSpec(f_coeffs=(0.3, -1.0, 2.0), g_case="log_saturating")
    basis = build_basis(8, 4.0, grid)
    for i in range(20):
        u = grid.random_bandlimited(rng, cutoff=16)
        dW = noise_field(sample_path(8, 0.01, 1, seed=i), 0, basis)
        out = step_splitting(u, 0.01, dW, spec, grid, strang)
        assert abs(mass(out, grid) / mass(u, grid) - 1) <= 1e-12


def test_splitting_aborts_on_non_finite(grid):
    u = grid.constant(1.0)
    u[0, 0] = np.inf
    with pytest.raises(StepAborted) as info:
        step_splitting(u, 0.01, None, CUBIC_DET, grid)
    assert info.value.state.shape == (32, 32)


def test_em_free_step(grid, rng):
    u = grid.random_bandlimited(rng)
    np.testing.assert_allclose(step_ito_em(u, 0.01, None, FREE, grid, correction=False),
                               grid.free_propagator(u, 0.01), atol=1e-13)
    np.testing.assert_allclose(
        step_ito_em(u, 0.01, None, FREE, grid, correction=False, exponential=False),
        u + 0.01j * grid.laplacian(u), atol=1e-13)


def test_em_constant_mode_scalar_closed_form(grid):
    # One step on du = -iu dW - ½ p u dt: |u1|² = |u0|²((1 - ½p dt)² + dW²),
    # whose mean (1 + ¼p²dt²)|u0|² is preserved to O(dt²).
    spec = CoefficientSpec(f_case="zero", g_case="constant", g_value=1.0)
    basis = build_basis(1, 4.0, grid)
    u = grid.constant(0.8 + 0.3j)
    dt = 0.01
    for dw in (-0.2, 0.0, 0.05):
        out = step_ito_em(u, dt, np.full((32, 32), dw), spec, grid, basis.p_field)
        expected = abs(u[0, 0]) ** 2 * ((1 - 0.5 * dt) ** 2 + dw ** 2)
        np.testing.assert_allclose(np.abs(out) ** 2, expected, rtol=1e-13)
    with pytest.raises(ValueError):
        step_ito_em(u, dt, np.zeros((32, 32)), spec, grid, None)


# trajectories ------------------------------------------------------------------------------

def test_free_trajectory_equals_free_evolution(grid):
    cfg = SimConfig(T=0.05, dt=0.01, spec=FREE, thresholds=(100.0,), store_states=True,
                    initial={"kind": "plane_wave", "k1": 1, "k2": 1})
    r = run_trajectory(cfg, None)
    u0 = grid.plane_wave(1, 1)
    for t, st in zip(r.trajectory.times, r.trajectory.states):
        np.testing.assert_allclose(st, grid.free_propagator(u0, t), atol=1e-12)
    assert not r.hits[0].hit


def test_zero_threshold_hits_at_time_zero():
    cfg = SimConfig(T=0.02, dt=0.01, thresholds=(0.0,))
    r = run_trajectory(cfg, sample_path(8, 0.01, 2, 0))
    assert r.hits[0].hit and r.hits[0].time == 0.0


def test_stop_at_first_hit():
    cfg = SimConfig(n=16, T=0.05, dt=0.01, thresholds=(0.0,), stop_at_first_hit=True)
    r = run_trajectory(cfg, sample_path(8, 0.01, 5, 0))
    assert r.stopped_time == 0.0
    assert np.all(np.isnan(r.trajectory.diagnostics["mass"][1:]))


def test_blowup_recorded_with_time():
    cfg = SimConfig(n=16, T=1.0, dt=0.1, integrator="ito_em", exponential=False,
                    spec=CoefficientSpec(f_coeffs=(0.0, 1e6)),
                    initial={"kind": "gaussian", "amplitude": 10.0, "width": 1.0})
    r = run_trajectory(cfg, sample_path(8, 0.1, 10, 0))
    assert r.blew_up and 0 < r.blowup_time <= 1.0
    assert r.final_state is None


def test_resolution_loss_flag():
    cfg = SimConfig(n=16, T=0.02, dt=0.01, spec=FREE,
                    initial={"kind": "plane_wave", "k1": 7, "k2": 0})
    assert run_trajectory(cfg, None).resolution_loss_time == 0.0
    cfg = SimConfig(n=16, T=0.02, dt=0.01, spec=FREE)
    assert run_trajectory(cfg, None).resolution_loss_time is None


def test_y_monitor():
    cfg = SimConfig(n=16, T=0.05, dt=0.01, n_cut=1.0,
                    initial={"kind": "gaussian", "amplitude": 5.0, "width": 1.0})
    r = run_trajectory(cfg, sample_path(8, 0.01, 5, 0))
    y_rec = [h for h in r.hits if h.monitor == "y"][0]
    assert y_rec.hit and y_rec.time == 0.0


def test_short_path_rejected():
    cfg = SimConfig(T=0.05, dt=0.01)
    with pytest.raises(ValueError):
        run_trajectory(cfg, sample_path(8, 0.01, 3, 0))


def test_mass_conserved_along_run():
    cfg = SimConfig(n=16, T=0.2, dt=1e-3, paths=4, batch=2)
    for r in run_ensemble(cfg):
        m = r.trajectory.diagnostics["mass"]
        assert np.max(np.abs(m / m[0] - 1)) <= 1e-10


def test_batch_matches_single_runs():
    cfg = SimConfig(n=16, T=0.05, dt=1e-3, paths=3, batch=3)
    batch = run_ensemble(cfg)
    for r in batch:
        single = run_trajectory(cfg, sample_path(8, 1e-3, 50, cfg.seed, r.path_id))
        np.testing.assert_allclose(single.final_state, r.final_state, rtol=0, atol=1e-13)


def test_ensemble_thread_count_invariant():
    cfg = SimConfig(n=16, T=0.05, dt=1e-3, paths=6, batch=2)
    a = run_ensemble(cfg, threads=1)
    b = run_ensemble(cfg, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.final_state, y.final_state)
        for k in x.trajectory.diagnostics:
            assert np.array_equal(x.trajectory.diagnostics[k], y.trajectory.diagnostics[k])


def test_qv_integrands_recorded():
    cfg = SimConfig(n=16, T=0.01, dt=1e-3, record_qv=True)
    r = run_trajectory(cfg, sample_path(8, 1e-3, 10, 0))
    for k in ("qv_grad", "qv_q", "qv_f"):
        assert np.all(np.isfinite(r.trajectory.diagnostics[k]))
        assert np.all(r.trajectory.diagnostics[k] >= 0)
    assert np.all(np.isfinite(r.trajectory.diagnostics["qv_drift"]))
    assert r.summary()["qv_flags"] == 0
    assert "qv_flags" not in run_trajectory(SimConfig(n=16, T=0.01, dt=1e-3), None).summary()


def test_strong_error_order_em_vs_splitting():
    cfg = SimConfig(n=16, J=4, T=0.24, dt=1e-3)
    res = strong_error(cfg, (8e-3, 4e-3, 2e-3, 1e-3), paths=8)
    assert res["order"] >= 0.4


# Duhamel sums ------------------------------------------------------------------------------------

def test_deterministic_convolution(grid, rng):
    dt, M = 0.01, 12
    assert np.all(deterministic_convolution_all(np.zeros((M, 32, 32)), grid, dt) == 0)
    v = grid.random_bandlimited(rng)
    f = np.stack([grid.free_propagator(v, r * dt) for r in range(M)])
    out = deterministic_convolution_all(f, grid, dt)
    for i in range(M + 1):
        np.testing.assert_allclose(out[i], i * dt * grid.free_propagator(v, i * dt), atol=1e-12)
    np.testing.assert_allclose(deterministic_convolution(f, 7, grid, dt), out[7], atol=1e-14)
    with pytest.raises(ValueError):
        deterministic_convolution(f, M + 1, grid, dt)


def test_deterministic_convolution_maximal_bound(grid, rng):
    dt, M = 0.02, 15
    f = np.stack([grid.random_bandlimited(rng) for _ in range(M)])
    out = deterministic_convolution_all(f, grid, dt)
    bound = dt * np.sum(lq_norm(f, grid, 2))
    assert np.max(lq_norm(out, grid, 2)) <= bound * (1 + 1e-12)


# Picard ------------------------------------------------------------------------------------------------

def test_picard_free_converges_immediately(grid):
    cfg = SimConfig(T=0.05, dt=0.01, spec=FREE)
    u0 = initial_state(cfg)
    pr = picard_solve(u0, cfg)
    assert pr.converged and pr.iterations == 1
    for t, st in zip(pr.trajectory.times, pr.trajectory.states):
        np.testing.assert_allclose(st, grid.free_propagator(u0, t), atol=1e-12)


def test_picard_matches_fine_splitting():
    cfg = SimConfig(n=16, T=0.05, dt=1e-3, spec=CUBIC_DET)
    u0 = initial_state(cfg)
    pr = picard_solve(u0, cfg)
    assert pr.converged and all(r < 1 for r in pr.ratios)
    fine = SimConfig(n=16, T=0.05, dt=1e-5, spec=CUBIC_DET, store_states=True, record_every=100)
    ref = run_batch(fine, u0, None)[0].trajectory.states
    g = cfg.grid
    err = np.max(lq_norm(pr.trajectory.states - ref, g, 2)) / np.max(lq_norm(ref, g, 2))
    assert err <= 5e-2


def test_picard_ratios_shrink_with_T():
    worst = []
    for T in (0.05, 0.0125):
        cfg = SimConfig(n=16, T=T, dt=1.25e-3, spec=CUBIC_DET)
        worst.append(max(picard_solve(initial_state(cfg), cfg).ratios))
    assert worst[1] < worst[0] < 1


def test_picard_cutoff_freezes_to_free_flow():
    cfg = SimConfig(n=16, T=0.02, dt=1e-3, n_cut=1.0, spec=CUBIC_DET,
                    initial={"kind": "gaussian", "amplitude": 5.0, "width": 1.0})
    u0 = initial_state(cfg)
    assert sobolev_norm(u0, cfg.grid, 1.0) >= 2
    pr = picard_solve(u0, cfg)
    assert pr.cutoff_active and pr.converged
    g = cfg.grid
    for t, st in zip(pr.trajectory.times, pr.trajectory.states):
        np.testing.assert_allclose(st, g.free_propagator(u0, t), atol=1e-12)


def test_picard_with_noise_and_literal_norm():
    cfg = SimConfig(n=8, T=0.02, dt=1e-3, e_kind="slobodetskii")
    pr = picard_solve(initial_state(cfg), cfg, sample_path(8, 1e-3, 20, 0))
    assert pr.converged and all(r < 1 for r in pr.ratios)


def test_picard_non_contraction_flagged():
    cfg = SimConfig(n=16, T=1.0, dt=1e-2, spec=CUBIC_DET, picard_max_iter=30,
                    initial={"kind": "gaussian", "amplitude": 3.0, "width": 1.0})
    pr = picard_solve(initial_state(cfg), cfg)
    assert pr.flagged and not pr.converged
    assert len(pr.ratios) >= 3 and all(r >= 1 for r in pr.ratios[-3:])

import numpy as np
import pytest

from snls.torus import GridFunction, NonFiniteFieldError, TorusGrid


def test_rejects_bad_sizes():
    with pytest.raises(ValueError):
        TorusGrid(7)
    with pytest.raises(ValueError):
        TorusGrid(2)
    with pytest.raises(ValueError):
        TorusGrid(8, side=0.0)


def test_geometry(grid):
    assert grid.h == pytest.approx(2 * np.pi / 32)
    assert grid.volume == pytest.approx(4 * np.pi ** 2)
    assert grid.int_wavenumbers[16] == 16
    assert grid.k2[1, 2] == pytest.approx(5.0)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_unitarity(grid, rng, t):
    for _ in range(100):
        u = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
        a = np.linalg.norm(grid.free_propagator(u, t))
        b = np.linalg.norm(u)
        assert abs(a - b) / b <= 1e-12


def test_group_law(grid, rng):
    u = grid.random_bandlimited(rng, cutoff=16)
    lhs = grid.free_propagator(grid.free_propagator(u, 0.3), 0.45)
    rhs = grid.free_propagator(u, 0.75)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(u)


def test_laplacian_self_adjoint(grid, rng):
    u = grid.random_bandlimited(rng, cutoff=16)
    val = grid.inner(u, 1j * grid.laplacian(u)).real
    scale = abs(grid.inner(u, grid.laplacian(u)))
    assert abs(val) <= 1e-12 * scale


def test_plane_wave_eigenfunction(grid):
    u = grid.plane_wave(2, -3)
    np.testing.assert_allclose(grid.laplacian(u), -13 * u, atol=1e-10)
    np.testing.assert_allclose(grid.free_propagator(u, 0.5), np.exp(-6.5j) * u, atol=1e-12)
    np.testing.assert_allclose(grid.bessel_multiplier(grid.plane_wave(1, 0), 1.0),
                               np.sqrt(2) * grid.plane_wave(1, 0), atol=1e-12)


def test_gradient_of_real_field_is_real(grid, rng):
    u = rng.standard_normal((32, 32)).astype(complex)
    g1, g2 = grid.gradient(u)
    assert np.max(np.abs(g1.imag)) < 1e-12
    assert np.max(np.abs(g2.imag)) < 1e-12


def test_gradient_of_sine(grid):
    x1, x2 = grid.coords
    g1, g2 = grid.gradient(np.sin(x1).astype(complex))
    np.testing.assert_allclose(g1.real, np.cos(x1), atol=1e-12)
    np.testing.assert_allclose(g2, 0, atol=1e-12)


def test_nyquist_derivative_zeroed(grid):
    x1, _ = grid.coords
    u = np.cos(16 * x1).astype(complex)
    g1, _ = grid.gradient(u)
    assert np.max(np.abs(g1)) < 1e-10


def test_non_finite_rejected(grid):
    u = grid.constant(1.0)
    u[3, 4] = np.nan
    with pytest.raises(NonFiniteFieldError):
        grid.laplacian(u)
    with pytest.raises(NonFiniteFieldError):
        grid.free_propagator(u, 0.0)


def test_bessel_order_range(grid):
    with pytest.raises(ValueError):
        grid.bessel_multiplier(grid.constant(1), 3)


def test_geodesic_distance(grid):
    L = 2 * np.pi
    assert grid.geodesic_distance((0, 0), (0, 0)) == 0
    assert grid.geodesic_distance((0, 0), (L - L / 32, 0)) == pytest.approx(L / 32)
    assert grid.geodesic_distance((0, 0), (L / 2, L / 2)) == pytest.approx(L / np.sqrt(2))


def test_shift_distances_match_geodesic(small_grid):
    g = small_grid
    for a in range(g.n):
        for b in range(g.n):
            assert g.shift_distances[a, b] == pytest.approx(
                g.geodesic_distance((0, 0), g.node(a, b)))


def test_random_bandlimited_band(grid, rng):
    u = grid.random_bandlimited(rng, cutoff=4)
    spec = np.abs(grid.fft(u))
    k = np.abs(grid.int_wavenumbers)
    outside = (k[:, None] > 4) | (k[None, :] > 4)
    assert np.max(spec[outside]) < 1e-9 * np.max(spec)
    assert np.max(np.abs(grid.random_bandlimited(rng, real=True).imag)) == 0


def test_top_shell_fraction(grid):
    assert grid.top_shell_fraction(grid.plane_wave(1, 1)) == pytest.approx(0.0)
    assert grid.top_shell_fraction(grid.plane_wave(12, 0)) == pytest.approx(1.0)


def test_grid_function_round_trip(grid, rng):
    u = grid.random_bandlimited(rng)
    gf = GridFunction(grid, u)
    assert gf.consistency_error() < 1e-14
    gf2 = GridFunction.from_spectrum(grid, gf.spectrum)
    np.testing.assert_allclose(gf2.values, u, atol=1e-12)
    with pytest.raises(ValueError):
        GridFunction(grid, np.zeros((4, 4)))

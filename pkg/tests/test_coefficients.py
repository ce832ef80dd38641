import numpy as np
import pytest

from snls.coefficients import (CoefficientSpec, SpecError, antiderivative_F, cutoff_slope_bound,
                               cutoff_theta, f_eval, g_eval, growth_audit, m_eval)

CUBIC = CoefficientSpec(f_coeffs=(0.0, 1.0))
FOCUSING = CoefficientSpec(f_case="focusing_power", f_C=1.0, sigma=0.5)
LOGSAT = CoefficientSpec(g_case="log_saturating", g_C=1.0)
UNIT_G = CoefficientSpec(g_case="constant", g_value=1.0)


def disc(rng, count, radius):
    return radius * np.sqrt(rng.random(count)) * np.exp(2j * np.pi * rng.random(count))


def test_f_examples():
    assert f_eval(0j, CUBIC) == 0
    assert f_eval(1 + 1j, CUBIC) == pytest.approx(2 * (1 + 1j))
    assert f_eval(2.0, FOCUSING) == pytest.approx(-4.0)


def test_g_examples():
    assert g_eval(0j, LOGSAT) == 0
    z = 0.3 - 1.2j
    assert g_eval(z, UNIT_G) == pytest.approx(z)
    assert g_eval(1.0, LOGSAT) == pytest.approx(np.log(2) / (1 + np.log(2)))


def test_m_examples(rng):
    z = disc(rng, 50, 3)
    np.testing.assert_allclose(m_eval(z, UNIT_G), -z)
    assert m_eval(0j, LOGSAT) == 0


@pytest.mark.parametrize("h", [1e-5, 1e-6])
def test_m_is_derivative_of_ig_along_ig(rng, h):
    z = disc(rng, 500, 5)
    ig = lambda w: 1j * LOGSAT.g(w)
    v = ig(z)
    fd = (ig(z + h * v) - ig(z - h * v)) / (2 * h)
    np.testing.assert_allclose(fd, m_eval(z, LOGSAT), atol=1e-6)


def test_m_identity(rng):
    z = disc(rng, 1000, 5)
    for spec in (LOGSAT, UNIT_G):
        lhs = (m_eval(z, spec) * np.conj(z)).real + np.abs(g_eval(z, spec)) ** 2
        assert np.max(np.abs(lhs)) <= 1e-12


def test_phase_equivariance(rng):
    z = disc(rng, 100, 4)
    phase = np.exp(0.7j)
    for spec in (CUBIC, FOCUSING, LOGSAT):
        np.testing.assert_allclose(f_eval(phase * z, spec), phase * f_eval(z, spec), atol=1e-12)
        np.testing.assert_allclose(g_eval(phase * z, spec), phase * g_eval(z, spec), atol=1e-12)


def test_antiderivative():
    r = np.linspace(0, 4, 9)
    np.testing.assert_allclose(antiderivative_F(r, CUBIC), r ** 2 / 2)
    np.testing.assert_allclose(antiderivative_F(r, FOCUSING), -(2 / 3) * r ** 1.5)
    for spec in (CUBIC, FOCUSING, CoefficientSpec(f_case="zero"),
                 CoefficientSpec(f_case="defocusing_power", sigma=1.5),
                 CoefficientSpec(f_coeffs=(1.0, -0.5, 2.0))):
        assert antiderivative_F(0.0, spec) == 0
    with pytest.raises(ValueError):
        antiderivative_F(-1.0, CUBIC)


def test_antiderivative_differentiates_to_f_tilde():
    spec = CoefficientSpec(f_coeffs=(0.5, -1.0, 2.0))
    r = np.linspace(0.1, 3, 20)
    h = 1e-6
    fd = (spec.antiderivative_F(r + h) - spec.antiderivative_F(r - h)) / (2 * h)
    np.testing.assert_allclose(fd, spec.f_tilde(r), rtol=1e-7)


def test_g_dtilde_matches_fd():
    r = np.linspace(0.01, 10, 30)
    h = 1e-6
    fd = (LOGSAT.g_tilde_fn(r + h) - LOGSAT.g_tilde_fn(r - h)) / (2 * h)
    np.testing.assert_allclose(fd, LOGSAT.g_dtilde_fn(r), rtol=1e-6)


def test_jacobian_matches_fd(rng):
    z = disc(rng, 40, 3) + 0.1
    h = 1e-6
    for spec in (CUBIC, FOCUSING, LOGSAT):
        for fn in (spec.f, spec.g, spec.m):
            jac = fn.jacobian(z)
            for col, dz in enumerate((h, 1j * h)):
                d = (fn(z + dz) - fn(z - dz)) / (2 * h)
                np.testing.assert_allclose(jac[:, 0, col], d.real, atol=1e-6)
                np.testing.assert_allclose(jac[:, 1, col], d.imag, atol=1e-6)


def test_validation_errors():
    with pytest.raises(SpecError, match="sigma < 1"):
        CoefficientSpec(f_case="focusing_power", sigma=1.5)
    with pytest.raises(SpecError):
        CoefficientSpec(f_coeffs=(1.0, -1.0))
    with pytest.raises(SpecError):
        CoefficientSpec(f_case="cubic")
    with pytest.raises(SpecError):
        CoefficientSpec(f_case="defocusing_power", sigma=0.25)
    with pytest.raises(SpecError):
        CoefficientSpec(g_case="custom")
    with pytest.raises(SpecError):
        CoefficientSpec(g_case="log_saturating", g_C=0.0)


def test_custom_g():
    spec = CoefficientSpec(g_case="custom", g_tilde=lambda r: 1 / (1 + r),
                           g_dtilde=lambda r: -1 / (1 + r) ** 2)
    assert spec.g(1.0) == pytest.approx(0.5)


def test_declared_exponents():
    assert CUBIC.beta_declared == 3
    assert FOCUSING.beta_declared == 2
    assert LOGSAT.a_declared == 1
    assert LOGSAT.gamma_declared == 2
    assert FOCUSING.phi_exponent == 4
    assert CUBIC.phi_exponent == 2


@pytest.mark.parametrize("n", [1.0, 10.0])
@pytest.mark.parametrize("smooth", [False, True])
def test_cutoff_shape(n, smooth):
    x = np.linspace(0, 3 * n, 3001)
    th = cutoff_theta(x, n, smooth)
    assert np.all(th[x <= n] == 1)
    assert np.all(th[x >= 2 * n] == 0)
    assert np.all(np.diff(th) <= 0)
    assert np.all((th >= 0) & (th <= 1))
    slope = np.diff(th) / np.diff(x)
    assert slope.min() >= -cutoff_slope_bound(smooth) / n - 1e-9


def test_cutoff_ramp_lipschitz(rng):
    x, y = 5 * rng.random((2, 1000))
    for n in (1.0, 2.0):
        assert np.all(np.abs(cutoff_theta(x, n) - cutoff_theta(y, n)) <= np.abs(x - y) / n + 1e-15)


def test_cutoff_smooth_is_c1():
    x = np.linspace(0.5, 2.5, 200001)
    d = np.gradient(cutoff_theta(x, 1.0, smooth=True), x)
    assert np.max(np.abs(np.diff(d))) < 1e-3


def test_cutoff_level_checked():
    with pytest.raises(ValueError):
        cutoff_theta(1.0, 0.5)


def test_growth_audit_declared_orders_pass():
    for which, spec in (("f", CUBIC), ("g", LOGSAT), ("m", LOGSAT), ("f", FOCUSING)):
        rep = growth_audit(which, spec, samples=5000)
        assert rep.violations == [], (which, rep)
        assert np.isfinite(rep.C_value)


def test_growth_audit_flags_understated_order():
    rep = growth_audit("f", CUBIC, samples=5000, exponent=1.0)
    assert "value" in rep.violations

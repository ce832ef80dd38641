"""Radial nonlinearities ``z -> φ̃(|z|²) z``, the Stratonovich correction and the cutoff.

``f`` is the Hamiltonian nonlinearity, ``g`` the noise amplitude and
``m(z) = -g̃(|z|²)² z`` the Itô correction coefficient. All three are
instances of :class:`RadialMap`, which knows its real 2x2 Jacobian in
closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

F_CASES = ("zero", "defocusing_poly", "defocusing_power", "focusing_power")
G_CASES = ("constant", "log_saturating", "custom")


class SpecError(ValueError):
    """A coefficient specification violates one of its structural constraints."""


class RadialMap:
    """The map ``z -> tilde(|z|²) z`` on ``C ≅ R²``.

    ``r_dtilde(r)`` must return ``r * tilde'(r)``; using this product keeps the
    Jacobian finite at ``z = 0`` for fractional powers.
    """

    def __init__(self, tilde: Callable, r_dtilde: Callable, name: str = ""):
        self.tilde = tilde
        self.r_dtilde = r_dtilde
        self.name = name

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.tilde(np.abs(z) ** 2) * z

    def jacobian(self, z) -> np.ndarray:
        """Real Jacobian, shape ``z.shape + (2, 2)``, acting on ``(Re h, Im h)``."""
        z = np.asarray(z, dtype=complex)
        r = np.abs(z) ** 2
        rho = np.sqrt(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(rho > 0, z / np.where(rho > 0, rho, 1.0), 0.0)
        ex, ey = e.real, e.imag
        a = self.tilde(r)
        b = 2.0 * self.r_dtilde(r)
        jac = np.empty(z.shape + (2, 2))
        jac[..., 0, 0] = a + b * ex * ex
        jac[..., 0, 1] = b * ex * ey
        jac[..., 1, 0] = b * ey * ex
        jac[..., 1, 1] = a + b * ey * ey
        return jac

    def derivative(self, z, h):
        """Directional ℝ-derivative ``Dφ(z)[h]`` as a complex number."""
        jac = self.jacobian(z)
        h = np.asarray(h, dtype=complex)
        hx, hy = h.real, h.imag
        out_x = jac[..., 0, 0] * hx + jac[..., 0, 1] * hy
        out_y = jac[..., 1, 0] * hx + jac[..., 1, 1] * hy
        return out_x + 1j * out_y


def _power(c: float, sigma: float):
    def tilde(r):
        return c * np.asarray(r, dtype=float) ** sigma

    def r_dtilde(r):
        return c * sigma * np.asarray(r, dtype=float) ** sigma

    return tilde, r_dtilde


@dataclass
class CoefficientSpec:
    """Case tags and parameters for ``f̃`` and ``g̃`` plus declared growth orders.

    f cases: ``zero``; ``defocusing_poly`` (``f_coeffs = [a_0, ..., a_N]``,
    ``a_N > 0``); ``defocusing_power`` (``f_C > 0``, ``sigma >= 1/2``);
    ``focusing_power`` (``f_C > 0``, ``1/2 <= sigma < 1``).

    g cases: ``constant`` (``g_value``, default 1); ``log_saturating``
    (``g_C > 0``, ``g̃(r) = ln(1+r) / (C + ln(1+r))``); ``custom``
    (``g_tilde`` and ``g_dtilde`` callables).
    """

    f_case: str = "defocusing_poly"
    f_coeffs: tuple = (0.0, 1.0)
    f_C: float = 1.0
    sigma: float = 1.0
    g_case: str = "log_saturating"
    g_C: float = 1.0
    g_value: float = 1.0
    g_tilde: Callable | None = field(default=None, repr=False, compare=False)
    g_dtilde: Callable | None = field(default=None, repr=False, compare=False)
    beta: float | None = None
    a: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.f_case not in F_CASES:
            raise SpecError(f"unknown f case {self.f_case!r}; expected one of {F_CASES}")
        if self.g_case not in G_CASES:
            raise SpecError(f"unknown g case {self.g_case!r}; expected one of {G_CASES}")
        if self.f_case == "defocusing_poly":
            self.f_coeffs = tuple(float(c) for c in self.f_coeffs)
            if not self.f_coeffs or self.f_coeffs[-1] <= 0:
                raise SpecError("defocusing polynomial needs a positive leading coefficient")
        if self.f_case in ("defocusing_power", "focusing_power") and self.f_C <= 0:
            raise SpecError("power nonlinearity needs C > 0")
        if self.f_case == "defocusing_power" and self.sigma < 0.5:
            raise SpecError("defocusing power case requires sigma >= 1/2")
        if self.f_case == "focusing_power" and not 0.5 <= self.sigma < 1:
            raise SpecError(
                f"focusing case requires 1/2 <= sigma < 1 (got sigma={self.sigma})")
        if self.g_case == "log_saturating" and self.g_C <= 0:
            raise SpecError("log-saturating amplitude needs C > 0")
        if self.g_case == "custom" and (self.g_tilde is None or self.g_dtilde is None):
            raise SpecError("custom g case needs g_tilde and g_dtilde callables")

    # f ---------------------------------------------------------------------
    def f_tilde(self, r):
        r = np.asarray(r, dtype=float)
        if self.f_case == "zero":
            return np.zeros_like(r)
        if self.f_case == "defocusing_poly":
            return np.polynomial.polynomial.polyval(r, self.f_coeffs)
        c = self.f_C if self.f_case == "defocusing_power" else -self.f_C
        return _power(c, self.sigma)[0](r)

    def f_r_dtilde(self, r):
        r = np.asarray(r, dtype=float)
        if self.f_case == "zero":
            return np.zeros_like(r)
        if self.f_case == "defocusing_poly":
            k = np.arange(len(self.f_coeffs))
            return np.polynomial.polynomial.polyval(r, k * np.asarray(self.f_coeffs))
        c = self.f_C if self.f_case == "defocusing_power" else -self.f_C
        return _power(c, self.sigma)[1](r)

    def antiderivative_F(self, r):
        """``F̃(r) = ∫_0^r f̃``."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("F̃ is defined on r >= 0")
        if self.f_case == "zero":
            return np.zeros_like(r)
        if self.f_case == "defocusing_poly":
            k = np.arange(len(self.f_coeffs))
            coeffs = np.concatenate([[0.0], np.asarray(self.f_coeffs) / (k + 1)])
            return np.polynomial.polynomial.polyval(r, coeffs)
        c = self.f_C if self.f_case == "defocusing_power" else -self.f_C
        return c / (self.sigma + 1) * r ** (self.sigma + 1)

    # g ---------------------------------------------------------------------
    def g_tilde_fn(self, r):
        r = np.asarray(r, dtype=float)
        if self.g_case == "constant":
            return np.full_like(r, self.g_value)
        if self.g_case == "log_saturating":
            lg = np.log1p(r)
            return lg / (self.g_C + lg)
        return np.asarray(self.g_tilde(r), dtype=float)

    def g_dtilde_fn(self, r):
        r = np.asarray(r, dtype=float)
        if self.g_case == "constant":
            return np.zeros_like(r)
        if self.g_case == "log_saturating":
            return self.g_C / ((1 + r) * (self.g_C + np.log1p(r)) ** 2)
        return np.asarray(self.g_dtilde(r), dtype=float)

    @property
    def g_bound(self) -> float:
        """``sup |g̃|`` (``inf`` when unknown)."""
        if self.g_case == "constant":
            return abs(self.g_value)
        if self.g_case == "log_saturating":
            return 1.0
        return np.inf

    # declared exponents ----------------------------------------------------
    @property
    def beta_declared(self) -> float:
        if self.beta is not None:
            return self.beta
        if self.f_case == "defocusing_poly":
            return 2 * (len(self.f_coeffs) - 1) + 1
        if self.f_case == "zero":
            return 2.0
        return 2 * self.sigma + 1

    @property
    def a_declared(self) -> float:
        return 1.0 if self.a is None else self.a

    @property
    def gamma_declared(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return max(2 * self.a_declared - 1, 2.0)

    @property
    def phi_exponent(self) -> float:
        """Exponent of ``φ(r) = r^e`` in the Gronwall envelope."""
        if self.f_case == "focusing_power":
            return max(2.0, 2.0 / (1.0 - self.sigma))
        return 2.0

    # maps ------------------------------------------------------------------
    @property
    def f(self) -> RadialMap:
        return RadialMap(self.f_tilde, self.f_r_dtilde, "f")

    @property
    def g(self) -> RadialMap:
        return RadialMap(self.g_tilde_fn, lambda r: np.asarray(r) * self.g_dtilde_fn(r), "g")

    @property
    def m(self) -> RadialMap:
        def tilde(r):
            return -self.g_tilde_fn(r) ** 2

        def r_dtilde(r):
            r = np.asarray(r, dtype=float)
            return -2.0 * r * self.g_tilde_fn(r) * self.g_dtilde_fn(r)

        return RadialMap(tilde, r_dtilde, "m")

    def to_dict(self) -> dict:
        d = {"f_case": self.f_case, "g_case": self.g_case}
        if self.f_case == "defocusing_poly":
            d["f_coeffs"] = list(self.f_coeffs)
        elif self.f_case != "zero":
            d["f_C"] = self.f_C
            d["sigma"] = self.sigma
        if self.g_case == "constant":
            d["g_value"] = self.g_value
        elif self.g_case == "log_saturating":
            d["g_C"] = self.g_C
        return d


def f_eval(z, spec: CoefficientSpec):
    return spec.f(z)


def g_eval(z, spec: CoefficientSpec):
    return spec.g(z)


def m_eval(z, spec: CoefficientSpec):
    return spec.m(z)


def antiderivative_F(r, spec: CoefficientSpec):
    return spec.antiderivative_F(r)


# cutoff -------------------------------------------------------------------

SMOOTH_CORNER = 0.04


def _theta_ramp(x):
    return np.clip(2.0 - x, 0.0, 1.0)


def _theta_smooth(x, w=SMOOTH_CORNER):
    # θ' is a trapezoid: 0 -> -s on [1, 1+w], -s on [1+w, 2-w], back to 0 on [2-w, 2].
    s = 1.0 / (1.0 - w)
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    a = (x > 1) & (x <= 1 + w)
    out[a] = 1 - s * (x[a] - 1) ** 2 / (2 * w)
    b = (x > 1 + w) & (x <= 2 - w)
    out[b] = 1 - s * w / 2 - s * (x[b] - 1 - w)
    c = (x > 2 - w) & (x < 2)
    out[c] = s * (2 - x[c]) ** 2 / (2 * w)
    out[x >= 2] = 0.0
    return out


def cutoff_theta(x, n: float = 1.0, smooth: bool = False):
    """``θ_n(x) = θ(x / n)``: 1 on ``[0, n]``, 0 on ``[2n, ∞)``, non-increasing.

    The default profile is the linear ramp, the only profile meeting
    ``θ(1) = 1``, ``θ(2) = 0`` and ``θ' >= -1`` together. ``smooth=True``
    gives a C¹ profile whose slope dips to ``-1/(1-0.04) ≈ -1.042``.
    """
    if n < 1:
        raise ValueError("cutoff level must be >= 1")
    x = np.asarray(x, dtype=float) / n
    return _theta_smooth(x) if smooth else _theta_ramp(x)


def cutoff_slope_bound(smooth: bool = False) -> float:
    """``sup |θ'|`` for the chosen profile (before rescaling by ``n``)."""
    return 1.0 / (1.0 - SMOOTH_CORNER) if smooth else 1.0


# growth audit --------------------------------------------------------------

@dataclass
class GrowthReport:
    fn: str
    exponent: float
    radius: float
    C_value: float
    C_derivative: float
    C_lipschitz: float
    violations: list

    def to_dict(self):
        return dict(self.__dict__)


def _disc_samples(rng, count, radius):
    rho = radius * np.sqrt(rng.random(count))
    ang = 2 * np.pi * rng.random(count)
    return rho * np.exp(1j * ang)


def _growth_constants(fn: RadialMap, e: float, zs: np.ndarray, ws: np.ndarray):
    opn = lambda j: np.linalg.norm(j, ord=2, axis=(-2, -1))
    r = np.abs(zs)
    c_val = np.max(np.abs(fn(zs)) / (1 + r ** e))
    c_der = np.max(opn(fn.jacobian(zs)) / (1 + r ** max(e - 1, 0)))
    diff = np.abs(zs - ws)
    ok = diff > 0
    lip_e = e - 2 if fn.name in ("f", "m") else max(e - 2, 0)
    num = opn(fn.jacobian(zs[ok]) - fn.jacobian(ws[ok]))
    den = (1 + np.abs(zs[ok]) ** lip_e + np.abs(ws[ok]) ** lip_e) * diff[ok]
    c_lip = np.max(num / den)
    return float(c_val), float(c_der), float(c_lip)


def growth_audit(which: str, spec: CoefficientSpec, samples: int = 20000,
                 radius: float = 5.0, exponent: float | None = None,
                 seed: int = 0) -> GrowthReport:
    """Empirical constants for the three growth/Lipschitz inequalities of ``f``, ``g`` or ``m``.

    A violation is flagged when a constant measured on the disc of radius
    ``10 * max(radius, 1)`` exceeds the one measured on radius ``max(radius, 1)``
    by more than ``sqrt(10)``, i.e. the map grows at least half an order faster
    than the declared exponent allows.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    fn = {"f": spec.f, "g": spec.g, "m": spec.m}[which]
    if exponent is None:
        exponent = {"f": spec.beta_declared, "g": spec.a_declared,
                    "m": spec.gamma_declared}[which]
    rng = np.random.default_rng(seed)
    unit_z = _disc_samples(rng, samples, 1.0)
    unit_w = _disc_samples(rng, samples, 1.0)
    consts = _growth_constants(fn, exponent, radius * unit_z, radius * unit_w)
    base = max(radius, 1.0)
    near = _growth_constants(fn, exponent, base * unit_z, base * unit_w)
    far = _growth_constants(fn, exponent, 10 * base * unit_z, 10 * base * unit_w)
    names = ("value", "derivative", "lipschitz")
    violations = [nm for nm, a, b in zip(names, near, far) if b > np.sqrt(10) * max(a, 1e-12)]
    return GrowthReport(which, float(exponent), float(radius), *consts, violations)

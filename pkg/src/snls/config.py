"""INI-style run configuration.

Every key is optional; missing keys take the :class:`SimConfig` defaults.

.. code-block:: ini

    [grid]
    n = 32                 ; even, >= 4
    side = 6.283185307179586

    [time]
    T = 1.0
    dt = 1e-3
    integrator = lie       ; lie | strang | ito_em
    ito_correction = true  ; ito_em only
    exponential = true     ; ito_em only: exact linear part

    [coefficients]
    f_case = defocusing_poly   ; zero | defocusing_poly | defocusing_power | focusing_power
    f_coeffs = 0, 1            ; a_0, ..., a_N
    f_C = 1
    sigma = 1
    g_case = log_saturating    ; constant | log_saturating
    g_C = 1
    g_value = 1

    [noise]
    J = 8
    rho = 4
    seed = 0

    [picard]
    n_cut = 1000
    max_iter = 50
    tol = 1e-8
    smooth_cutoff = false

    [norms]
    p = 4
    q = 4
    s = 1
    e_kind = bessel        ; bessel | slobodetskii
    strichartz = true      ; enforce 2/p + 2/q = 1

    [run]
    paths = 1
    batch = 8
    record_every = 1
    thresholds =           ; absolute H^{1,2} levels
    threshold_factors =    ; levels as multiples of |u0|_{H^{1,2}}
    stop_at_first_hit = false
    store_states = false
    record_qv = false

    [initial]
    kind = gaussian        ; zero | constant | plane_wave | gaussian | random
    amplitude = 1
    width = 1
"""
from __future__ import annotations

import configparser
import re

from .coefficients import CoefficientSpec, SpecError
from .evolution import SimConfig


class ConfigError(ValueError):
    """Malformed file or violated constraint; message carries file and line."""


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


_BOOL = configparser.ConfigParser.BOOLEAN_STATES

SCHEMA = {
    "grid": {"n": ("n", int), "side": ("side", float)},
    "time": {"t": ("T", float), "dt": ("dt", float), "integrator": ("integrator", str),
             "ito_correction": ("ito_correction", "bool"), "exponential": ("exponential", "bool")},
    "coefficients": {"f_case": ("f_case", str), "f_coeffs": ("f_coeffs", _floats),
                     "f_c": ("f_C", float), "sigma": ("sigma", float), "g_case": ("g_case", str),
                     "g_c": ("g_C", float), "g_value": ("g_value", float),
                     "beta": ("beta", float), "a": ("a", float), "gamma": ("gamma", float)},
    "noise": {"j": ("J", int), "rho": ("rho", float), "seed": ("seed", int)},
    "picard": {"n_cut": ("n_cut", float), "max_iter": ("picard_max_iter", int),
               "tol": ("picard_tol", float), "smooth_cutoff": ("smooth_cutoff", "bool")},
    "norms": {"p": ("p", float), "q": ("q", float), "s": ("s", float), "e_kind": ("e_kind", str),
              "strichartz": ("strichartz", "bool")},
    "run": {"paths": ("paths", int), "batch": ("batch", int), "record_every": ("record_every", int),
            "thresholds": ("thresholds", _floats), "threshold_factors": ("threshold_factors", _floats),
            "stop_at_first_hit": ("stop_at_first_hit", "bool"),
            "store_states": ("store_states", "bool"), "record_qv": ("record_qv", "bool")},
    "initial": None,   # free-form, interpreted by initial_state
}
SPEC_KEYS = {"f_case", "f_coeffs", "f_C", "sigma", "g_case", "g_C", "g_value", "beta", "a", "gamma"}


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", stripped, 1)[0].strip().lower()
            if k == key:
                return no
    return None


def _where(name, text, section, key=None):
    line = _line_of(text, section, key)
    return f"{name}:{line}" if line else name


def _convert(kind, raw):
    if kind == "bool":
        if raw.strip().lower() not in _BOOL:
            raise ValueError(f"not a boolean: {raw!r}")
        return _BOOL[raw.strip().lower()]
    return kind(raw.strip())


def parse_config_text(text: str, name: str = "<config>") -> SimConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        errors = getattr(exc, "errors", None)
        line = errors[0][0] if errors else getattr(exc, "lineno", None)
        where = f"{name}:{line}" if line else name
        raise ConfigError(f"{where}: malformed config (line {line}): {exc}") from exc
    cfg_kw, spec_kw, initial = {}, {}, {}
    for section in cp.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(name, text, sec)}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if sec == "initial":
                try:
                    initial[key] = float(raw) if re.fullmatch(r"[-+0-9.eE]+", raw.strip()) else raw.strip()
                except ValueError:
                    initial[key] = raw.strip()
                continue
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{_where(name, text, sec, key)}: unknown key '{key}' in [{section}]")
            field, kind = SCHEMA[sec][key]
            try:
                value = _convert(kind, raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(name, text, sec, key)}: bad value for '{key}': {exc}") from exc
            (spec_kw if field in SPEC_KEYS else cfg_kw)[field] = value
    if initial:
        cfg_kw["initial"] = initial
    try:
        spec = CoefficientSpec(**spec_kw)
        return SimConfig(spec=spec, **cfg_kw)
    except (SpecError, ValueError) as exc:
        raise ConfigError(f"{name}: invalid configuration: {exc}") from exc


def parse_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def config_to_ini(config: SimConfig) -> str:
    """Round-trippable INI text for ``config``."""
    inverse = {}
    for sec, keys in SCHEMA.items():
        for key, (field, _) in (keys or {}).items():
            inverse[field] = (sec, key)
    sections: dict[str, list[str]] = {}
    d = config.to_dict()
    spec = d.pop("spec")
    for field, value in list(d.items()) + list(spec.items()):
        if field not in inverse:
            continue
        sec, key = inverse[field]
        if isinstance(value, (list, tuple)):
            value = ", ".join(repr(float(v)) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        sections.setdefault(sec, []).append(f"{key} = {value}")
    sections["initial"] = [f"{k} = {v}" for k, v in config.initial.items()]
    return "\n".join(f"[{sec}]\n" + "\n".join(lines) + "\n" for sec, lines in sections.items())

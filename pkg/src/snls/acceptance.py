"""The ten acceptance criteria as runnable checks.

Each ``criterion_N`` returns a :class:`CriterionResult`; thresholds are the
stated ones and are never adapted to the measured values.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiments as ex
from .coefficients import CoefficientSpec
from .evolution import SimConfig
from .torus import TorusGrid


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.name} -- {self.summary}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "summary": self.summary, "details": self.details}


def criterion_1(threads: int = 1) -> CriterionResult:
    cfg = SimConfig(n=32, J=8, T=1.0, dt=1e-3, paths=8,
                    spec=CoefficientSpec(f_coeffs=(0.0, 1.0), g_case="log_saturating"))
    res = ex.conservation(cfg, threads=threads)
    worst = res["max_drift"]
    ok = worst <= 1e-10 and res["blowups"] == 0 and len(res["max_drift_per_path"]) == 8
    return CriterionResult(1, "mass conservation", ok, f"max relative drift {worst:.3e} (limit 1e-10)",
                           {"max_drift_per_path": res["max_drift_per_path"]})


def criterion_2(threads: int = 1) -> CriterionResult:
    res = ex.correction_bias((4e-3, 2e-3, 1e-3), paths=256, seed=0)
    order = res["order_with"]
    z = min(res["without_z"])
    ok = order >= 0.8 and z > 5
    return CriterionResult(
        2, "Stratonovich correction necessity", ok,
        f"order with correction {order:.3f} (>= 0.8); uncorrected bias {res['without'][-1]:.4f} "
        f"= {z:.0f} SE (> 5)", res)


def criterion_3(threads: int = 1) -> CriterionResult:
    details, ok = {}, True
    for name, spec in (("log_saturating", CoefficientSpec()),
                       ("constant", CoefficientSpec(g_case="constant"))):
        r = ex.m_formula_check(spec, 1000, 5.0, (1e-5, 1e-6))
        fd = max(r["fd_max_error"].values())
        ok &= fd <= 1e-6 and r["identity_max"] <= 1e-12
        details[name] = r
    worst_fd = max(max(d["fd_max_error"].values()) for d in details.values())
    worst_id = max(d["identity_max"] for d in details.values())
    return CriterionResult(3, "m-formula", ok,
                           f"FD error {worst_fd:.2e} (<= 1e-6), identity {worst_id:.2e} (<= 1e-12)", details)


def criterion_4(threads: int = 1) -> CriterionResult:
    r = ex.pairing_check(TorusGrid(32), CoefficientSpec(f_coeffs=(0.0, 1.0)), 100)
    ok = r["max"] <= 1e-8
    return CriterionResult(4, "energy pairing", ok,
                           f"max residual/(1+Psi) {r['max']:.2e} (<= 1e-8)", r)


def criterion_5(threads: int = 1) -> CriterionResult:
    r = ex.nemytskii_suite(200, 8, 0.5, 4.0)
    total = sum(r["violations"].values())
    return CriterionResult(5, "Nemytskii suite", total == 0, f"violations {r['violations']}",
                           {"violations": r["violations"]})


def criterion_6(threads: int = 1) -> CriterionResult:
    grid = TorusGrid(32)
    hom = ex.strichartz_hom_sweep(grid, (1.0, 0.5, 0.25, 0.125), 100)
    inh = ex.strichartz_inhom_check(grid, 100)
    ok = hom["finite"] and hom["nonincreasing"] and inh["c_max"] <= 1 + 1e-10
    maxes = ", ".join(f"{m:.4f}" for m in hom["max"])
    return CriterionResult(6, "homogeneous/inhomogeneous Strichartz", ok,
                           f"E=bessel proxy; max quotients [{maxes}] nonincreasing={hom['nonincreasing']}; "
                           f"C-norm quotient {inh['c_max']:.15f} (<= 1+1e-10)",
                           {"hom": {k: hom[k] for k in ("T", "max", "mean", "band")},
                            "c_max": inh["c_max"]})


def criterion_7(threads: int = 1) -> CriterionResult:
    r = ex.strichartz_stoch_sweep(TorusGrid(32), (2, 4, 8), paths=64)
    ok = r["finite"] and r["stable"] and r["isometry_ok"]
    ratios = ", ".join(f"{x:.3e}±{s:.1e}" for x, s in zip(r["ratio"], r["ratio_se"]))
    return CriterionResult(7, "stochastic Strichartz", ok,
                           f"E=bessel proxy; ratios [{ratios}] stable={r['stable']}; isometry within 3 SE={r['isometry_ok']}", r)


def criterion_8(threads: int = 1) -> CriterionResult:
    cfg = SimConfig(n=16, T=0.05, dt=1e-3, n_cut=1e3, picard_tol=1e-8,
                    spec=CoefficientSpec(f_coeffs=(0.0, 1.0)))
    r = ex.picard_experiment(cfg, fine_dt=1e-5, noisy_T=0.02, seed=0)
    # the same experiment at small n with the literal Slobodetskii E-norm
    lit_cfg = SimConfig(n=8, T=0.05, dt=1e-3, n_cut=1e3, picard_tol=1e-8, e_kind="slobodetskii",
                        spec=CoefficientSpec(f_coeffs=(0.0, 1.0)))
    lit = ex.picard_experiment(lit_cfg, fine_dt=1e-5, noisy_T=0.02, seed=0)
    ok = r["deterministic_contracts"] and r["match_sup_l2_rel"] <= 5e-2 and r["noisy_contracts"]
    ok_lit = lit["deterministic_contracts"] and lit["match_sup_l2_rel"] <= 5e-2 and lit["noisy_contracts"]
    return CriterionResult(
        8, "Picard construction", ok and ok_lit,
        f"E=bessel proxy, n=16: det ratios max {max(r['deterministic']['ratios']):.3f}, "
        f"converged={r['deterministic']['converged']}; match {r['match_sup_l2_rel']:.2e} (<= 5e-2); "
        f"noisy ratios max {max(r['noisy']['ratios']):.3f}; E=slobodetskii, n=8: det ratios max "
        f"{max(lit['deterministic']['ratios']):.3f}, match {lit['match_sup_l2_rel']:.2e}, "
        f"noisy ratios max {max(lit['noisy']['ratios']):.3f}",
        {"bessel": r, "slobodetskii": lit})


def criterion_9(threads: int = 1) -> CriterionResult:
    base = dict(n=32, J=8, T=5.0, dt=2e-3, paths=32)
    dfc = ex.energy_envelope(SimConfig(**base, spec=CoefficientSpec(f_coeffs=(0.0, 1.0))),
                             threads=threads, hit_factor=100.0)
    foc = ex.energy_envelope(SimConfig(**base, spec=CoefficientSpec(f_case="focusing_power", sigma=0.5)),
                             threads=threads, hit_factor=100.0)
    g = dfc["gronwall"]
    ok_def = (dfc["hits"] == 0 and dfc["blowups"] == 0 and math.isfinite(g["C"])
              and g["violations"] == 0 and dfc["accepted"] == dfc["paths"])
    ok_foc = foc["blowups"] == 0 and foc["accepted"] > 0 and foc["min_shifted"] >= 0
    return CriterionResult(
        9, "global-existence behaviour", ok_def and ok_foc,
        f"defocusing: hits {dfc['hits']}, fitted C {g['C']:.4f}, violations {g['violations']}; "
        f"focusing: blow-ups {foc['blowups']}, min(Psi + c mass) {foc['min_shifted']:.4f} "
        f"(c={foc['gronwall']['c']:.4f})",
        {"defocusing": {k: v for k, v in dfc.items() if k not in ("times", "mean_psi", "gronwall")}
         | {"C": g["C"], "c": g["c"], "violations": g["violations"]},
         "focusing": {k: v for k, v in foc.items() if k not in ("times", "mean_psi", "gronwall")}
         | {"c": foc["gronwall"]["c"]}})


REPRO_CONFIG = """\
[grid]
n = 16
[time]
T = 0.1
dt = 1e-3
[noise]
J = 8
[run]
paths = 16
batch = 4
threshold_factors = 2
"""


def _tree_equal(a: Path, b: Path) -> tuple[bool, list]:
    import json
    diffs = []
    names_a = sorted(p.name for p in a.iterdir())
    names_b = sorted(p.name for p in b.iterdir())
    if names_a != names_b:
        return False, ["file sets differ"]
    for name in names_a:
        if name == "manifest.json":
            ma = json.loads((a / name).read_text())
            mb = json.loads((b / name).read_text())
            ma.pop("wall_clock")
            mb.pop("wall_clock")
            if ma != mb:
                diffs.append(name)
        elif not filecmp.cmp(a / name, b / name, shallow=False):
            diffs.append(name)
    return not diffs, diffs


def criterion_10(threads: int = 1) -> CriterionResult:
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "repro.ini"
        cfg.write_text(REPRO_CONFIG)
        runs = {}
        for label, th in (("a1", 1), ("b1", 1), ("a4", 4)):
            for cmd in ("simulate", "conservation"):
                out = tmp / label / cmd
                code = main([cmd, "--config", str(cfg), "--seed", "7", "--out", str(out),
                             "--threads", str(th)])
                if code != 0:
                    return CriterionResult(10, "reproducibility", False, f"{cmd} exited {code}")
                runs[(label, cmd)] = out
        diffs = []
        for cmd in ("simulate", "conservation"):
            for other in ("b1", "a4"):
                same, d = _tree_equal(runs[("a1", cmd)], runs[(other, cmd)])
                diffs += [f"{cmd}/{other}/{x}" for x in d]
        nfiles = sum(len(list(p.iterdir())) for p in runs.values())
    ok = not diffs
    return CriterionResult(10, "reproducibility", ok,
                           f"{nfiles} artifacts compared across two runs and threads {{1, 4}}; "
                           f"differences: {diffs or 'none'}", {"differences": diffs})


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_criteria(numbers=None, threads: int = 1) -> list[CriterionResult]:
    numbers = sorted(numbers) if numbers else sorted(CRITERIA)
    for n in numbers:
        if n not in CRITERIA:
            raise ValueError(f"no criterion {n}")
    return [CRITERIA[n](threads=threads) for n in numbers]

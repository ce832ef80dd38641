"""Command line entry point ``snls``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .artifacts import RunManifest, output_dir, write_csv, write_json, write_jsonl, fmt
from .config import ConfigError, parse_config
from .evolution import SimConfig, run_ensemble
from .noise import sample_path
from .torus import TorusGrid

COMMANDS = ("simulate", "picard", "strichartz", "nemytskii-audit", "conservation",
            "energy-envelope", "ito-strat-compare", "acceptance", "rerun")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="base seed (overrides [noise] seed)")
    common.add_argument("--paths", type=int, help="number of Brownian paths")
    common.add_argument("--out", help="artifact directory (default $SNLS_OUT or ./snls_out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for ensembles")

    ap = argparse.ArgumentParser(prog="snls", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="run an ensemble of trajectories")
    sim.add_argument("--dump-paths", action="store_true", help="write binary path tables")
    sub.add_parser("picard", parents=[common], help="Picard iteration vs fine splitting")
    st = sub.add_parser("strichartz", parents=[common], help="Strichartz quotient estimates")
    st.add_argument("--mode", choices=("hom", "inhom", "stoch"), default="hom")
    st.add_argument("--T-sweep", type=_floats, default=[1.0, 0.5, 0.25, 0.125])
    st.add_argument("--draws", type=int, default=100)
    st.add_argument("--J-list", type=_ints, default=[2, 4, 8])
    na = sub.add_parser("nemytskii-audit", parents=[common], help="Nemytskii inequality audit")
    na.add_argument("--pairs", type=int, default=200)
    na.add_argument("--n", type=int, default=8)
    na.add_argument("--theta", type=float, default=0.5)
    na.add_argument("--q", type=float, default=4.0)
    sub.add_parser("conservation", parents=[common], help="mass drift along splitting runs")
    ee = sub.add_parser("energy-envelope", parents=[common], help="hits and Gronwall envelope")
    ee.add_argument("--hit-factor", type=float, default=100.0)
    isc = sub.add_parser("ito-strat-compare", parents=[common], help="Itô correction study")
    isc.add_argument("--dts", type=_floats, default=[4e-3, 2e-3, 1e-3])
    acc = sub.add_parser("acceptance", parents=[common], help="run acceptance criteria")
    acc.add_argument("--criterion", type=int, action="append",
                     help="criterion number (repeatable; default all)")
    rr = sub.add_parser("rerun", help="re-run a manifest into a new directory")
    rr.add_argument("manifest")
    rr.add_argument("--out", help="artifact directory")
    return ap


def load_config(args) -> SimConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else SimConfig()
    kw = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        kw["paths"] = args.paths
    return SimConfig(**kw)


# pipelines ----------------------------------------------------------------------

def _simulate(cfg, args, out):
    runs = run_ensemble(cfg, threads=args.threads)
    records = []
    for r in runs:
        d = r.trajectory.diagnostics
        for i, t in enumerate(r.trajectory.times):
            if not np.isfinite(d["mass"][i]):
                continue
            rec = {"path": r.path_id, "t": float(t)}
            rec.update({k: float(d[k][i]) for k in ("mass", "energy", "h1", "e_norm", "y_norm")})
            rec["hits"] = [bool(h.hit and h.time <= t) for h in r.hits]
            records.append(rec)
    files = [write_jsonl(out / "trajectories.jsonl", records)]
    files.append(write_json(out / "summary.json", {"runs": [r.summary() for r in runs]}))
    times = runs[0].trajectory.times
    mean = lambda k: np.nanmean(np.stack([r.trajectory.diagnostics[k] for r in runs]), axis=0)
    rows = zip(times, mean("mass"), mean("energy"), mean("h1"))
    files.append(write_csv(out / "ensemble_means.csv", ["t", "mass", "energy", "h1"], rows))
    if getattr(args, "dump_paths", False):
        for r in runs:
            p = out / f"path_{r.path_id}.bin"
            sample_path(cfg.J, cfg.dt, cfg.steps, cfg.seed, r.path_id).save(p)
            files.append(p)
    print(f"simulated {len(runs)} paths; blow-ups: {sum(r.blew_up for r in runs)}")
    return files


def _picard(cfg, args, out):
    res = ex.picard_experiment(cfg, seed=cfg.seed)
    print(f"deterministic ratios max {max(res['deterministic']['ratios'] or [0]):.3g}, "
          f"match {res['match_sup_l2_rel']:.3g}")
    return [write_json(out / "picard.json", res)]


def _strichartz(cfg, args, out):
    grid = cfg.grid
    if args.mode == "hom":
        res = ex.strichartz_hom_sweep(grid, tuple(args.T_sweep), args.draws, p=cfg.p, q=cfg.q,
                                      s=cfg.s, seed=cfg.seed)
        for T, m in zip(res["T"], res["max"]):
            print(f"T={T}: max quotient {fmt(m)}")
        rows = zip(res["T"], res["max"], res["mean"], res["band"])
        return [write_json(out / "strichartz_hom.json", res),
                write_csv(out / "strichartz_hom.csv", ["T", "max", "mean", "band"], rows)]
    if args.mode == "inhom":
        res = ex.strichartz_inhom_check(grid, args.draws, p=cfg.p, q=cfg.q, s=cfg.s, seed=cfg.seed)
        print(f"max C-norm quotient {fmt(res['c_max'])}")
        return [write_json(out / "strichartz_inhom.json", res)]
    paths = cfg.paths if args.paths is not None else 64
    res = ex.strichartz_stoch_sweep(grid, tuple(args.J_list), paths, rho=cfg.rho, p=cfg.p,
                                    q=cfg.q, s=cfg.s, seed=cfg.seed)
    for J, r, se in zip(res["J"], res["ratio"], res["ratio_se"]):
        print(f"J={J}: ratio {fmt(r)} ± {fmt(se)}")
    return [write_json(out / "strichartz_stoch.json", res)]


def _nemytskii(cfg, args, out):
    res = ex.nemytskii_suite(args.pairs, args.n, args.theta, args.q, seed=cfg.seed)
    print("violations:", res["violations"])
    return [write_json(out / "nemytskii_summary.json", {k: v for k, v in res.items() if k != "records"}),
            write_jsonl(out / "nemytskii_records.jsonl", res["records"])]


def _conservation(cfg, args, out):
    res = ex.conservation(cfg, threads=args.threads)
    drift = np.asarray(res["drift"])
    header = ["t"] + [f"path_{i}" for i in range(drift.shape[0])]
    rows = ([t] + list(col) for t, col in zip(res["times"], drift.T))
    print(f"max relative mass drift {fmt(res['max_drift'])}")
    return [write_csv(out / "mass_drift.csv", header, rows),
            write_json(out / "conservation.json", {k: v for k, v in res.items() if k != "drift"})]


def _energy(cfg, args, out):
    res = ex.energy_envelope(cfg, threads=args.threads, hit_factor=args.hit_factor)
    files = [write_json(out / "energy_envelope.json", res)]
    if "gronwall" in res:
        g = res["gronwall"]
        rows = zip(res["times"], res["mean_psi"], g["mean_shifted"], g["envelope"])
        files.append(write_csv(out / "energy_envelope.csv", ["t", "mean_psi", "mean_shifted", "envelope"], rows))
        print(f"hits {res['hits']}, blow-ups {res['blowups']}, fitted C {fmt(g['C'])}, "
              f"violations {g['violations']}")
    return files


def _ito_strat(cfg, args, out):
    paths = cfg.paths if args.paths is not None else 256
    res = ex.correction_bias(tuple(args.dts), paths, cfg.seed)
    print(f"order with correction {res['order_with']:.3f}; bias without {fmt(res['without'][-1])}")
    return [write_json(out / "ito_strat.json", res)]


def _acceptance(cfg, args, out):
    from .acceptance import run_criteria
    results = run_criteria(args.criterion, threads=args.threads)
    for r in results:
        print(r.line())
    write_json(out / "acceptance.json", [r.to_dict() for r in results])
    return [out / "acceptance.json"], all(r.passed for r in results)


PIPELINES = {"simulate": _simulate, "picard": _picard, "strichartz": _strichartz,
             "nemytskii-audit": _nemytskii, "conservation": _conservation,
             "energy-envelope": _energy, "ito-strat-compare": _ito_strat,
             "acceptance": _acceptance}


def dispatch(args) -> int:
    if args.command == "rerun":
        man = RunManifest.load(args.manifest)
        argv = [man.command] + man.arguments.get("argv", [])
        if args.out:
            argv += ["--out", args.out]
        return main(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = output_dir(getattr(args, "out", None))
    argv = getattr(args, "_argv", [])
    manifest = RunManifest(args.command, {"argv": argv}, cfg.to_dict(),
                           {"seed": cfg.seed, "paths": cfg.paths})
    manifest.start()
    result = PIPELINES[args.command](cfg, args, out)
    ok = True
    if isinstance(result, tuple):
        result, ok = result
    manifest.outputs = sorted(Path(p).name for p in result)
    manifest.finish()
    manifest.write(out)
    return 0 if ok else 1


def _strip_out(argv):
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    # The manifest keeps the arguments without the output directory and the
    # thread count, neither of which affects the numbers.
    kept = _strip_out(argv[1:])
    args._argv = [a for i, a in enumerate(kept)
                  if a != "--threads" and (i == 0 or kept[i - 1] != "--threads")]
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from snls.artifacts import RunManifest, dumps, fmt, output_dir
from snls.cli import main
from snls.config import ConfigError, config_to_ini, parse_config, parse_config_text
from snls.evolution import SimConfig
from snls.noise import BrownianPath

SMALL = """\
[grid]
n = 8
[time]
T = 0.02
dt = 1e-3
[noise]
J = 4
[run]
paths = 4
batch = 2
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config_text("[grid]\nn = 16\n")
    default = SimConfig()
    assert cfg.n == 16
    assert (cfg.T, cfg.dt, cfg.J, cfg.p, cfg.q) == (default.T, default.dt, default.J, 4.0, 4.0)
    assert cfg.spec == default.spec


def test_full_sections_parse():
    cfg = parse_config_text(
        "[time]\nintegrator = ito_em\nito_correction = no\n"
        "[coefficients]\nf_case = focusing_power\nsigma = 0.5\ng_case = constant\n"
        "[run]\nthresholds = 1, 2.5\nstop_at_first_hit = yes\n"
        "[initial]\nkind = plane_wave\nk1 = 2\n")
    assert cfg.integrator == "ito_em" and cfg.ito_correction is False
    assert cfg.spec.f_case == "focusing_power" and cfg.spec.sigma == 0.5
    assert cfg.thresholds == (1.0, 2.5) and cfg.stop_at_first_hit
    assert cfg.initial == {"kind": "plane_wave", "k1": 2.0}


def test_inadmissible_pair_rejected_with_constraint_named():
    with pytest.raises(ConfigError, match="2/p\\+2/q=1"):
        parse_config_text("[norms]\np = 4\nq = 3\n")


def test_focusing_sigma_out_of_range_rejected():
    with pytest.raises(ConfigError, match="sigma"):
        parse_config_text("[coefficients]\nf_case = focusing_power\nsigma = 1.5\n")


def test_malformed_file_reports_position(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nn = 8\nthis line is broken\n")
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(bad)


def test_unknown_key_and_bad_value_report_line(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[grid]\nn = 8\n\n[time]\nT = 1\nwidth = 2\n")
    with pytest.raises(ConfigError, match=r"c\.ini:6: unknown key 'width'"):
        parse_config(f)
    f.write_text("[grid]\nn = eight\n")
    with pytest.raises(ConfigError, match=r"c\.ini:2: bad value"):
        parse_config(f)
    f.write_text("[mesh]\nn = 8\n")
    with pytest.raises(ConfigError, match=r"c\.ini:1: unknown section"):
        parse_config(f)


def test_config_round_trip():
    cfg = parse_config_text(
        SMALL + "[coefficients]\nf_coeffs = 0.5, 0, 2\ng_case = constant\n"
        "[norms]\ne_kind = slobodetskii\n[picard]\nsmooth_cutoff = true\n")
    again = parse_config_text(config_to_ini(cfg))
    assert again.to_dict() == cfg.to_dict()


# artifacts -----------------------------------------------------------------------------

def test_floats_written_with_17_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(float("nan")) == "NaN" and fmt(float("-inf")) == "-Infinity"
    text = dumps({"b": 1 / 3, "a": [np.float64(2.0), True, None]})
    assert text.index('"a"') < text.index('"b"')
    assert "0.33333333333333331" in text
    assert json.loads(text)["b"] == 1 / 3


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("SNLS_OUT", str(tmp_path / "env"))
    assert output_dir(str(tmp_path / "cli")) == tmp_path / "cli"
    assert output_dir(None) == tmp_path / "env"
    monkeypatch.delenv("SNLS_OUT")
    monkeypatch.chdir(tmp_path)
    assert output_dir(None).resolve() == (tmp_path / "snls_out").resolve()


# command line ---------------------------------------------------------------------------

@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def test_simulate_writes_artifacts_and_manifest(small_cfg, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(small_cfg), "--out", str(out), "--dump-paths"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"trajectories.jsonl", "summary.json", "ensemble_means.csv", "manifest.json"} <= names
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["config"]["n"] == 8
    assert "--out" not in man["arguments"]["argv"]
    lines = (out / "trajectories.jsonl").read_text().splitlines()
    assert len(lines) == 4 * 21
    path = BrownianPath.load(out / "path_0.bin")
    assert path.increments.shape == (20, 4)


def test_simulate_is_reproducible(small_cfg, tmp_path):
    outs = []
    for label in ("a", "b"):
        out = tmp_path / label
        assert main(["simulate", "--config", str(small_cfg), "--paths", "32", "--seed", "7",
                     "--out", str(out)]) == 0
        outs.append(out)
    for name in ("trajectories.jsonl", "summary.json", "ensemble_means.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    a = RunManifest.load(outs[0] / "manifest.json").reproducible_part()
    b = RunManifest.load(outs[1] / "manifest.json").reproducible_part()
    assert a == b


def test_rerun_reproduces(small_cfg, tmp_path):
    out = tmp_path / "first"
    main(["conservation", "--config", str(small_cfg), "--seed", "3", "--out", str(out)])
    again = tmp_path / "again"
    assert main(["rerun", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (out / "mass_drift.csv").read_bytes() == (again / "mass_drift.csv").read_bytes()


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[norms]\np = 4\nq = 3\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "2/p+2/q=1" in capsys.readouterr().err


@pytest.mark.parametrize("argv, produced", [
    (["conservation"], "mass_drift.csv"),
    (["nemytskii-audit", "--pairs", "5", "--n", "4"], "nemytskii_summary.json"),
    (["strichartz", "--mode", "hom", "--draws", "3", "--T-sweep", "0.25,0.125"], "strichartz_hom.csv"),
    (["strichartz", "--mode", "inhom", "--draws", "2"], "strichartz_inhom.json"),
    (["energy-envelope"], "energy_envelope.json"),
    (["ito-strat-compare", "--paths", "16", "--dts", "0.02,0.01"], "ito_strat.json"),
    (["picard"], "picard.json"),
])
def test_commands_write_artifacts(small_cfg, tmp_path, argv, produced):
    out = tmp_path / "o"
    assert main(argv[:1] + ["--config", str(small_cfg), "--out", str(out)] + argv[1:]) == 0
    assert (out / produced).exists() and (out / "manifest.json").exists()


def test_acceptance_subcommand_single_criterion(tmp_path, capsys):
    assert main(["acceptance", "--criterion", "4", "--out", str(tmp_path)]) == 0
    assert "[PASS] criterion 4" in capsys.readouterr().out

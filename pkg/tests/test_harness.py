import json
import subprocess
import sys

import numpy as np
import pytest

from hglab import cli, gridio, harness
from hglab.blocks import Grid
from hglab.evolution import RunConfig
from hglab.harness import ConfigError, parse_config, parse_config_text
from hglab.initdata import GaussianProfile, build_cauchy_data, generate_small_data

FLAT = "command = evolve\n[run]\nn = 17\nhalf_width = 6.0\nt_final = 1.0\noutput_every = 0.5\nepsilon = 0\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_fills_defaults():
    spec = parse_config_text("command = evolve\n")
    assert spec.run == RunConfig()
    assert spec.seed == 0 and spec.data["profile"] == "gaussian"
    assert spec.resolved()["run"]["cfl"] == 0.25


@pytest.mark.parametrize("text,match", [
    ("command = evolve\nspeed = 3\n", "<string>:2: unknown key 'speed'"),
    ("command = evolve\n[run]\ncfl = 0.9\n", "<string>:3: CFL factor ≤ 0.25"),
    ("command = evolve\n[run]\nn = many\n", "<string>:3: cannot parse n"),
    ("command = evolve\n[grid]\n", "<string>:2: unknown section"),
    ("command = evolve\n[run\n", "<string>:2: malformed section"),
    ("command = evolve\nseed\n", "<string>:2: expected 'key = value'"),
    ("command = evolve\nseed = 1\nseed = 2\n", "<string>:3: duplicate key"),
    ("seed = 1\n", "missing 'command'"),
    ("command = fly\n", "<string>:1: unknown command"),
    ("command = classify\n", "needs 'system = PATH'"),
    ("command = evolve\n[run]\ncenter = 1 2\n", "<string>:3: center needs three"),
    ("command = evolve\n[run]\nmode = maxwell\n", r"\[run\] mode"),
    ("command = check\n[check]\nsuites = ks nope\n", "<string>:3: unknown suite"),
    ("command = evolve\n[data]\nprofile = box\n", "<string>:3: profile must be"),
    ("command = oracle-compare\n[oracle]\nlevels = 1\n", "<string>:3: at least 2 levels"),
])
def test_config_errors_carry_locations(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_missing_system_file_and_unreadable_config(tmp_path):
    p = write(tmp_path, "a.cfg", "command = classify\nsystem = nowhere.sys\n")
    with pytest.raises(ConfigError, match="a.cfg:2: system file"):
        parse_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.cfg")


def test_config_hash_tracks_results_not_location(tmp_path):
    a = parse_config_text(FLAT)
    b = parse_config_text(FLAT + "[experiment]\nout = elsewhere\nlabel = x\n", base=tmp_path)
    c = parse_config_text(FLAT.replace("n = 17", "n = 19"))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_fmt_uses_seventeen_digits():
    assert harness.fmt(0.1) == "0.10000000000000001"
    assert harness.fmt(True) == "1" and harness.fmt("x") == "x"


def test_flat_evolve_exits_zero_with_zero_series(tmp_path):
    cfg = write(tmp_path, "flat.cfg", FLAT)
    out = tmp_path / "out"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == 0
    h, rows = harness.read_csv(out / "series.csv")
    assert len(rows) == 3
    for r in rows:
        for k, v in r.items():
            if k != "t":
                assert float(v) == 0.0, k
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config_hash"] == h
    assert summary["status"] == "ok" and summary["seed"] == 0 and summary["threads"] == 1
    assert summary["config"]["run"]["n"] == 17


def test_outputs_are_bit_identical(tmp_path):
    text = FLAT.replace("epsilon = 0", "epsilon = 1e-3") + "[data]\nsnapshot_times = 0.5\n"
    cfg = write(tmp_path, "run.cfg", text)
    for d in ("a", "b"):
        assert cli.main(["--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("series.csv", "summary.json", "snapshot_000.npz"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    h = harness.read_csv(tmp_path / "a" / "series.csv")[0]
    assert gridio.read_meta(tmp_path / "a" / "snapshot_000.npz")["config_hash"] == h


def test_config_error_exits_two(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "command = evolve\n[run]\ncfl = 0.9\n")
    assert cli.main(["--config", str(cfg)]) == 2
    assert "bad.cfg:3" in capsys.readouterr().err
    assert cli.main(["--config", str(write(tmp_path, "ok.cfg", FLAT)), "--threads", "0"]) == 2


def test_numerical_failure_exits_one_with_record(tmp_path):
    text = "command = initdata\n[run]\nn = 9\nhalf_width = 4.0\nepsilon = 0.2\n"
    cfg = write(tmp_path, "big.cfg", text)
    out = tmp_path / "out"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == 1
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "failed"
    assert s["failure"]["type"] == "DataGenerationError"


def test_initdata_command_writes_grid_file(tmp_path):
    cfg = write(tmp_path, "id.cfg", "command = initdata\n[run]\nn = 17\nhalf_width = 8.0\nepsilon = 1e-3\n")
    out = tmp_path / "out"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["result"]["M"] > 0 and s["result"]["momentum_sup"] == 0.0
    assert gridio.read_meta(out / "initdata.npz")["config_hash"] == s["config_hash"]


def test_classify_dt_squared_reports_blowup(tmp_path):
    harness.write_recipe("weak-null-zoo", tmp_path)
    out = tmp_path / "out"
    assert cli.main(["--config", str(tmp_path / "classify_dt_squared.cfg"), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["result"]["verdict"] == "blow-up"
    assert len(s["result"]["table"]) == 5
    h, rows = harness.read_csv(out / "classify.csv")
    assert h == s["config_hash"] and list(rows[0]) == ["epsilon", "blowup", "ell_star", "ell_star_err", "ell_end"]


def test_asymptotic_command(tmp_path):
    harness.write_recipe("acceptance-suite", tmp_path)
    out = tmp_path / "out"
    assert cli.main(["--config", str(tmp_path / "c06_model_pair.cfg"), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    tg = s["result"]["targets"]
    assert tg["phi2"]["class"] == "log-growth" and tg["phi2"]["r2"] >= 0.999
    assert abs(tg["phi1"]["slope"]) < 1e-15 and tg["phi1"]["class"] == "bounded"
    _, rows = harness.read_csv(out / "asymptotic.csv")
    assert float(rows[0]["phi_sup_phi2"]) == 0.0 and float(rows[-1]["phi_sup_phi2"]) > 0.0
    bad = write(tmp_path, "bad.cfg", (tmp_path / "c06_model_pair.cfg").read_text().replace("zero = phi2", "zero = phi9"))
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "bad")]) == 1


def test_oracle_compare_writes_convergence_table(tmp_path):
    text = ("command = oracle-compare\n[run]\nmode = linear\nn = 13\nhalf_width = 5.0\nt_final = 0.5\n"
            "sigma = 0.9\n[oracle]\nlevels = 2\nsample_radius = 2.0\n")
    out = tmp_path / "out"
    assert cli.main(["--config", str(write(tmp_path, "o.cfg", text)), "--out", str(out)]) == 0
    h, rows = harness.read_csv(out / "convergence.csv")
    assert [list(r) for r in rows][0] == ["dx", "linf", "l2"] and len(rows) == 2
    assert float(rows[1]["linf"]) < float(rows[0]["linf"])


def test_check_command(tmp_path):
    text = "command = check\n[check]\nsuites = commutators\n"
    out = tmp_path / "out"
    assert cli.main(["--config", str(write(tmp_path, "c.cfg", text)), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert 3.5 <= s["result"]["suites"]["commutators"]["min_ratio"]
    assert s["result"]["suites"]["commutators"]["max_ratio"] <= 4.5


def test_recipes(tmp_path):
    zoo = harness.recipe("weak-null-zoo")
    assert [n for n, _ in zoo if n.endswith(".cfg")] == [
        "classify_q0.cfg", "classify_simple.cfg", "classify_dt_squared.cfg"]
    eps = [parse_config_text(t).run.epsilon for _, t in harness.recipe("decay-study")]
    assert eps == [5e-4, 1e-3, 2e-3]
    cfgs = harness.write_recipe("acceptance-suite", tmp_path)
    for c in cfgs:
        parse_config(c)
    assert len(cfgs) == 13
    with pytest.raises(ValueError, match="unknown recipe"):
        harness.recipe("everything")


def test_out_directory_override_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUT_ENV, str(tmp_path / "env"))
    spec = parse_config_text(FLAT)
    assert harness.output_dir(spec) == tmp_path / "env"
    assert harness.output_dir(spec, tmp_path / "flag") == tmp_path / "flag"


def test_gridio_round_trip(tmp_path):
    grid = Grid.cube(13, 6.0)
    sl = build_cauchy_data(generate_small_data(GaussianProfile(1.5), 1e-3, grid))
    p = gridio.write_slice(tmp_path / "s.npz", sl, "abc", t=0.0)
    back = gridio.read_slice(p)
    assert back.grid == grid and back.M == sl.M
    for a in ("g", "dtg", "psi", "dtpsi"):
        assert np.array_equal(getattr(back, a), getattr(sl, a))
    assert gridio.read_meta(p) == {"format": gridio.FORMAT, "t": 0.0, "M": sl.M, "config_hash": "abc",
                                   "shape": (13, 13, 13)}


def test_gridio_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.npz"
    np.savez(p, format=np.array("other/1"), fields=np.array(gridio.FIELD_NAMES))
    with pytest.raises(gridio.GridFormatError, match="unknown format"):
        gridio.read_slice(p)
    with pytest.raises(gridio.GridFormatError):
        gridio.write_state(tmp_path / "y.npz", Grid.cube(9, 1.0), np.zeros((1, 9, 9, 9)),
                           np.zeros((1, 9, 9, 9)), 0.0)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hglab", "--recipe", "weak-null-zoo", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "classify_q0.cfg" in res.stdout
    bad = subprocess.run([sys.executable, "-m", "hglab"], capture_output=True, text=True)
    assert bad.returncode == 2

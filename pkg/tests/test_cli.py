import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from zenopm import cli
from zenopm.config import parse_config
from zenopm.errors import ConfigError
from zenopm.polarization import make_state
from zenopm.zeno import ZenoConfig, run_protective_measurement

FAST_CONFIG = """
[experiment]
tau_g = 1.6
n_pulses = {n}
loss_db_per_loop = 0
background_rate_per_gate = {bg}
seed = 17

[settings]
theta_over_quarter_pi = 0, 2
loops = {loops}

[analysis]
window_offset_ns = 4.0
"""


def write_config(tmp_path, n=40_000, bg=0.0, loops="1, 5, 9"):
    p = tmp_path / "run.ini"
    p.write_text(FAST_CONFIG.format(n=n, bg=bg, loops=loops))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigError) as e:
        parse_config("[experiment]\ntau_gg = 1.0\n")
    assert e.value.key == "experiment.tau_gg"
    with pytest.raises(ConfigError):
        parse_config("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nn_pulses = lots\n")
    with pytest.raises(ConfigError, match="n_pulses"):
        parse_config("[experiment]\nn_pulses = 0\n")
    with pytest.raises(ConfigError):
        parse_config("[analysis]\ntau_max_source = guess\n")


def test_parse_config_defaults_and_lists():
    rc = parse_config("[settings]\nloops = 2 4\ntheta_over_quarter_pi = 0.5, 1\n")
    assert rc.loops == (2, 4) and rc.thetas == (0.5, 1.0)
    assert rc.experiment_config(4).zeno.tau_tilde == pytest.approx(0.5 / 1.6)


def test_substreams_are_named_and_stable():
    assert cli.substream_seed(5, "th0_l1") == cli.substream_seed(5, "th0_l1")
    assert cli.substream_seed(5, "th0_l1") != cli.substream_seed(5, "th2_l1")
    assert cli.substream_seed(5, "th0_l1") != cli.substream_seed(6, "th0_l1")


def test_table1_default_run(tmp_path):
    code = cli.main(["table1", "--out", str(tmp_path)])
    rows = read_csv(tmp_path / "table1.csv")
    assert len(rows) == 9
    assert (tmp_path / "table1_diff.txt").exists()
    # exit status follows the golden comparison
    diff = cli.compare_table1(cli.reproduce_table1(), cli._load_golden(None))
    assert code == (0 if all(d["ok"] for d in diff) else 3)


def test_table1_matches_own_golden_and_detects_tampering(tmp_path):
    own = tmp_path / "own.csv"
    own.write_text((lambda r: r)(cli.table1_csv(cli.reproduce_table1())))
    assert cli.main(["table1", "--out", str(tmp_path), "--golden", str(own)]) == 0
    lines = own.read_text().splitlines()
    parts = lines[1].split(",")
    parts[3] = f"{float(parts[3]) - 0.01:.6f}"
    lines[1] = ",".join(parts)
    own.write_text("\n".join(lines) + "\n")
    assert cli.main(["table1", "--out", str(tmp_path), "--golden", str(own)]) == 3


def test_table1_grid_extension(tmp_path):
    own = tmp_path / "own.csv"
    own.write_text(cli.table1_csv(cli.reproduce_table1()))
    code = cli.main(["table1", "--out", str(tmp_path), "--golden", str(own),
                     "--tau-tilde-grid", "0.25,0.05"])
    assert code == 0
    assert len(read_csv(tmp_path / "table1.csv")) == 9 + 6


def test_simulate_file_count_and_determinism(tmp_path):
    cfg = write_config(tmp_path, n=2_000, bg=0.01, loops="1, 2, 3, 4, 5, 6, 7, 8, 9")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(b)]) == 0
    sig = sorted(p.name for p in a.glob("signal_*.csv"))
    bg = sorted(p.name for p in a.glob("background_*.csv"))
    assert len(sig) == 18 and len(bg) == 18
    for name in sig + bg:
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert (a / name).with_suffix(".json").exists()
    c = tmp_path / "c"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(c), "--seed", "99"]) == 0
    assert (c / sig[-1]).read_bytes() != (a / sig[-1]).read_bytes()


def test_simulate_validation_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nn_pulses = 0\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "n_pulses" in capsys.readouterr().err
    typo = tmp_path / "typo.ini"
    typo.write_text("[experiment]\nloss_db_per_lop = 3\n")
    assert cli.main(["simulate", "--config", str(typo), "--out", str(tmp_path / "o")]) == 2
    assert "loss_db_per_lop" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 2


def test_analyze_calibration_closure(tmp_path):
    cfg = write_config(tmp_path, n=60_000, bg=0.0)
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
    cal = json.loads((out / "calibration.json").read_text())
    assert abs(cal["slope_ns_per_loop"] - 0.5) < 4 * cal["slope_uncertainty"]
    assert [p[0] for p in cal["points"]] == [1, 5, 9]
    reports = json.loads((out / "reports.json").read_text())
    assert len(reports) == 6
    assert (out / "dist_th0_l9.csv").exists()


def test_analyze_pairing_and_empty_errors(tmp_path, capsys):
    cfg = write_config(tmp_path, n=2_000, loops="1")
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    (out / "background_th2_l1.csv").unlink()
    assert cli.main(["analyze", "--config", str(cfg), "--out", str(out)]) == 4
    assert "background" in capsys.readouterr().err

    empty = tmp_path / "empty"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(empty)]) == 0
    sig = empty / "signal_th2_l1.csv"
    sig.write_text("arrival_ns\n")
    assert cli.main(["analyze", "--config", str(cfg), "--out", str(empty)]) == 4
    assert "th2_l1" in capsys.readouterr().err


def test_table2_scenario(tmp_path):
    assert cli.main(["table2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "table2.csv")
    assert [r["distribution"] for r in rows] == list("abcde")
    taus = [float(r["tau_ns"]) for r in rows]
    assert np.all(np.diff(taus) > 0)
    for r in rows:
        assert int(r["n_detected"]) >= 100_000
        assert 0.40 <= float(r["sigma_pm"]) <= 0.50


def test_sweep_fixed_product(tmp_path):
    cfg = tmp_path / "sweep.ini"
    cfg.write_text("[sweep]\ntheta_over_quarter_pi = 0, 0.5, 1, 1.5, 2\n"
                   "loops = 2, 5, 10, 20, 50\nfixed_product = 1.0\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 25
    for f in ("0", "0.5", "1", "1.5", "2"):
        surv = [float(r["survival"]) for r in rows if float(r["theta_over_quarter_pi"]) == float(f)]
        assert np.all(np.diff(surv) >= -1e-12)
        if f in ("0", "2"):
            assert surv == pytest.approx([1.0] * 5, abs=1e-12)


def test_sweep_single_point_matches_library(tmp_path):
    cfg = tmp_path / "one.ini"
    cfg.write_text("[sweep]\ntheta_over_quarter_pi = 0.8\ntau_tilde = 0.2\nloops = 5\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    (row,) = read_csv(tmp_path / "sweep.csv")
    res = run_protective_measurement(make_state(0.8 * np.pi / 4), ZenoConfig(0.2, 5))
    assert float(row["survival"]) == pytest.approx(res.survival, abs=1e-12)
    assert float(row["rescaled_shift"]) == pytest.approx(res.rescaled_shift, abs=1e-12)


def test_exact_outputs(tmp_path):
    cfg = write_config(tmp_path, loops="8")
    assert cli.main(["exact", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "exact.csv")
    assert len(rows) == 2
    slow = next(r for r in rows if r["theta_over_quarter_pi"] == "0")
    assert float(slow["mean_shift_ns"]) == pytest.approx(2.0)
    assert (tmp_path / "exact_density_th2_l8.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, n=5_000, bg=0.02, loops="1, 5")
    outs = []
    for name in ("x", "y"):
        d = tmp_path / name
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(d)]) == 0
        assert cli.main(["analyze", "--config", str(cfg), "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "zenopm", "sweep", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "sweep.csv").exists()

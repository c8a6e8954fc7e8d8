import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mumab.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def small_config(**over):
    cfg = {
        "system": {"k": 2, "m": 3},
        "rewards": {"matrix": [[0.9, 0.5, 0.2], [0.6, 0.8, 0.3]], "distribution": "uniform", "width": 0.1},
        "horizon": {"epochs": 3},
    }
    cfg.update(over)
    return cfg


def test_oracle_examples(capsys):
    assert main(["oracle", str(CONFIGS / "k2m3_matrix.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["j1"] == pytest.approx(1.7) and out["j2"] == pytest.approx(1.2)
    assert out["delta"] == pytest.approx(1 / 12)
    assert out["optimal_set"] == [[1, 2]]
    assert main(["oracle", str(CONFIGS / "k2m3_multi_matrix.json")]) == 0
    assert json.loads(capsys.readouterr().out)["optimal_set"] == [[1, 3], [2, 3]]


def test_oracle_errors(tmp_path):
    flat = write(tmp_path / "eq.json", {"k": 2, "m": 2, "values": [0.5] * 4})
    assert main(["oracle", flat]) == 3
    bad = write(tmp_path / "bad.json", {"k": 2, "m": 2, "values": [0.5] * 3})
    assert main(["oracle", bad]) == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["oracle", str(tmp_path / "junk.json")]) == 2
    assert main(["oracle", str(tmp_path / "missing.json")]) == 4


def test_validate_config(tmp_path, capsys):
    assert main(["validate-config", "--config", str(CONFIGS / "k10m10.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["effective_params"]["t_fix"] == 53
    assert len(out["config"]["rewards"]["matrix"]) == 10
    extra = small_config(colour="red")
    assert main(["validate-config", "--config", write(tmp_path / "c.json", extra)]) == 2
    bern = small_config()
    bern["rewards"]["distribution"] = "bernoulli"
    path = write(tmp_path / "b.json", bern)
    assert main(["validate-config", "--config", path]) == 2
    with pytest.warns(UserWarning):
        assert main(["validate-config", "--config", path, "--allow-zero-atom"]) == 0


def test_run_outputs_and_byte_determinism(tmp_path):
    cfg = write(tmp_path / "c.json", small_config())
    for d in ("a", "b"):
        assert main(["run", "--config", cfg, "--seed", "7", "--out-dir", str(tmp_path / d)]) == 0
    for name in ("trace.csv", "summary.json"):
        assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)
    with open(tmp_path / "a" / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "epoch", "phase", "instant_regret", "cum_regret", "collisions"]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["regret"]["total"] == pytest.approx(float(rows[-1][4]))
    assert set(summary["regret"]) == {"R1", "R2", "R3", "total"}
    assert summary["steps"] == len(rows) - 1


def test_point_mass_summary_all_optimal(tmp_path):
    assert main(["run", "--config", str(CONFIGS / "k2m3.json"), "--seed", "1",
                 "--out-dir", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert not s["protocol_fault"]
    after = [e for e in s["epochs"] if e["epoch"] >= s["ell_f"]]
    assert after and all(e["matching_optimal"] for e in after)


def test_summary_round_trip(tmp_path):
    cfg = write(tmp_path / "c.json", small_config())
    main(["run", "--config", cfg, "--seed", "3", "--out-dir", str(tmp_path / "a")])
    echoed = json.loads((tmp_path / "a" / "summary.json").read_text())["config"]
    again = write(tmp_path / "echo.json", echoed)
    main(["run", "--config", again, "--seed", "3", "--out-dir", str(tmp_path / "b")])
    assert digest(tmp_path / "a" / "trace.csv") == digest(tmp_path / "b" / "trace.csv")


def test_sweep_one_seed_matches_run(tmp_path):
    cfg = write(tmp_path / "c.json", small_config())
    main(["run", "--config", cfg, "--seed", "4", "--out-dir", str(tmp_path / "r")])
    assert main(["sweep", "--config", cfg, "--seed-list", "4", "--out-dir", str(tmp_path / "s")]) == 0
    with open(tmp_path / "r" / "trace.csv") as fh:
        run = [float(r["cum_regret"]) for r in csv.DictReader(fh)]
    with open(tmp_path / "s" / "curve.csv") as fh:
        curve = [float(r["mean_cum_regret"]) for r in csv.DictReader(fh)]
    assert run == curve
    s = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert all("bound_at_min_steps" in row for row in s["epoch_boundaries"])


def test_sweep_workers_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.json", small_config())
    main(["sweep", "--config", cfg, "--seeds", "3", "--out-dir", str(tmp_path / "a")])
    main(["sweep", "--config", cfg, "--seeds", "3", "--workers", "2", "--out-dir", str(tmp_path / "b")])
    for name in ("curve.csv", "summary.json"):
        assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)


def test_plot(tmp_path):
    cfg = write(tmp_path / "c.json", small_config())
    main(["sweep", "--config", cfg, "--seeds", "2", "--out-dir", str(tmp_path)])
    out = tmp_path / "p.svg"
    assert main(["plot", str(tmp_path / "curve.csv"), "--out", str(out), "--overlay-bound"]) == 0
    svg = out.read_text()
    assert svg.startswith("<svg") and "cumulative regret" in svg and "upper bound" in svg
    (tmp_path / "empty.csv").write_text("t,mean_cum_regret,stderr\n")
    assert main(["plot", str(tmp_path / "empty.csv")]) == 2
    assert main(["plot", str(tmp_path / "nope.csv")]) == 4


def test_unwritable_out_dir(tmp_path):
    cfg = write(tmp_path / "c.json", small_config())
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", cfg, "--out-dir", str(blocker / "sub")]) == 4


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mumab.cli", "oracle", str(CONFIGS / "k2m3_matrix.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and '"j1"' in proc.stdout

import json
import subprocess
import sys

import pytest

from subdiffinv.cli import main
from subdiffinv.experiments import read_study_csv
from subdiffinv.observation import read_observation_csv

SMALL = ["--N", "16", "--n-cells", "8"]


def test_forward(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["forward", "--out", str(out), *SMALL]) == 0
    m, exact = read_observation_csv(out)
    assert exact is None and m.grid.N == 16


def test_generate_then_invert(tmp_path):
    data = tmp_path / "data.csv"
    assert main(["generate-data", "--out", str(data), "--eps", "0.01", "--seed", "3", *SMALL]) == 0
    noisy, exact = read_observation_csv(data)
    assert exact is not None and noisy.delta <= 0.01

    rec = tmp_path / "rec.csv"
    assert main(["invert", "--data", str(data), "--out", str(rec), "--n-cells", "8"]) == 0
    assert rec.read_text().splitlines()[0] == "n,t,q_true,q_star"
    summary = json.loads(rec.with_suffix(".summary.json").read_text())
    assert summary["N"] == 16 and summary["iterations"] >= 1
    assert summary["final_error"] < 0.5


def test_invert_generates_data_when_missing(tmp_path):
    rec = tmp_path / "rec.csv"
    assert main(["invert", "--out", str(rec), "--set", "max_iterations=3", *SMALL]) == 0
    assert json.loads(rec.with_suffix(".summary.json").read_text())["iterations"] == 3


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("potential = q3\nN = 8\nn_cells = 4\n# note\n")
    out = tmp_path / "rec.csv"
    assert main(["invert", "--config", str(cfg), "--N", "16", "--out", str(out)]) == 0
    summary = json.loads(out.with_suffix(".summary.json").read_text())
    assert summary["potential"] == "q3" and summary["N"] == 16


@pytest.mark.parametrize("args", [
    ["invert", "--set", "bogus=1"],
    ["invert", "--set", "alpha=2"],
    ["invert", "--set", "novalue"],
    ["invert", "--config", "/nonexistent/run.cfg"],
    ["study-h", "--sweep", ""],
])
def test_invalid_configuration_exit_code(args, tmp_path):
    assert main([*args, "--out", str(tmp_path / "x.csv")]) == 2


def test_inadmissible_exit_code(tmp_path):
    args = ["invert", "--m-star", "3", "--out", str(tmp_path / "r.csv"), *SMALL]
    assert main(args) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_solver_failure_exit_code(tmp_path):
    args = ["invert", "--set", "cutoff=1e300", "--N", "64", "--n-cells", "8",
            "--out", str(tmp_path / "r.csv")]
    assert main(args) == 4


def test_study_outputs(tmp_path):
    out = tmp_path / "tau.csv"
    assert main(["study-tau", "--sweep", "8,16", "--set", "fixed_cells=8", "--out", str(out)]) == 0
    rows = read_study_csv(out)
    assert [r.param for r in rows] == [8, 16]
    assert all(r.kind == "tau" for r in rows)
    assert out.read_text().splitlines()[1].endswith(",")

    out = tmp_path / "tau_t.csv"
    assert main(["study-tau", "--sweep", "8", "--set", "fixed_cells=8",
                 "--timings", "--out", str(out)]) == 0
    assert read_study_csv(out)[0].seconds > 0


def test_iteration_study_uses_tuned_step_count(tmp_path):
    out = tmp_path / "iter.csv"
    assert main(["study-iter", "--alpha", "0.7", "--n-cells", "8",
                 "--set", "max_iterations=4", "--out", str(out)]) == 0
    rows = read_study_csv(out)
    assert rows[0].tau == pytest.approx(0.5 / 16)


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "subdiffinv.cli", "forward", "--out", str(out), *SMALL],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()

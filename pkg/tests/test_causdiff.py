#!/usr/bin/env python3
"""
End-to-end tests of the causdiff command line driver
"""
import csv
import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest
from scipy import special

from causdiff import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from gridio import read_grid
from inversion import relative_error
from phantoms import make_phantom

SMALL = {
    "_comment": "32x32 blob, one step of two pixels",
    "c": 1.0,
    "tau": 2.0 / 31,
    "T": 2.0 / 31,
    "rows": 32,
    "cols": 32,
    "dx": 1.0 / 31,
    "image": "gaussian_blob",
    "M": 16,
    "forward_path": "spectral",
}


def write_config(tmp_path, name="small.json", **changes):
    config = dict(SMALL, output_dir=str(tmp_path / "out"))
    config.update(changes)
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


# ============================================================================
# Special functions and Green functions
# ============================================================================

def test_upsilon_table(tmp_path):
    output = tmp_path / "upsilon3.csv"
    assert main(["upsilon", "--N", "3", "--t-max", "10", "--points", "11", "--output", str(output)]) == EXIT_OK
    rows = read_rows(output)
    assert rows[0] == ["t", "upsilon", "derivative"]
    assert len(rows) == 12
    assert rows[1][:2] == ["0.0", "1.0"]
    assert float(rows[1][2]) == 0.0


def test_upsilon_rejects_bad_input(tmp_path):
    output = str(tmp_path / "bad.csv")
    assert main(["upsilon", "--N", "0", "--output", output]) == EXIT_USAGE
    assert main(["upsilon", "--t-min", "5", "--t-max", "1", "--output", output]) == EXIT_USAGE
    assert not os.path.exists(output)


def test_compare_green_table(tmp_path, capsys):
    output = tmp_path / "green.csv"
    argv = ["compare-green", "--c", "1", "--tau", "1", "--times", "0.5", "2.5",
            "--points", "21", "--output", str(output)]
    assert main(argv) == EXIT_OK
    rows = read_rows(output)
    assert rows[0] == ["k", "causal_t0.5", "standard_t0.5", "perturbed_t0.5",
                       "causal_t2.5", "standard_t2.5", "perturbed_t2.5"]
    assert len(rows) == 22
    assert all(float(v) == 1.0 for v in rows[1][1:])
    k, causal, standard, perturbed = (float(v) for v in rows[6][:4])
    assert standard == pytest.approx(math.exp(-0.25 * k * k * 0.5), rel=1e-14)
    assert perturbed == pytest.approx(math.exp(-0.25 / math.log(2) * k * k * 0.5), rel=1e-14)
    assert causal == pytest.approx(special.j0(k * 0.5), rel=1e-12)
    assert "envelope" in capsys.readouterr().out


def test_zeros_listing(tmp_path, capsys):
    output = tmp_path / "zeros.csv"
    assert main(["zeros", "--N", "3", "--a", "0", "--b", "7", "--output", str(output)]) == EXIT_OK
    assert "✓ 2 zeros of Υ_3" in capsys.readouterr().out
    values = [float(row[0]) for row in read_rows(output)[1:]]
    assert values == pytest.approx([3.141592653589793, 6.283185307179586], abs=1e-10)

    assert main(["zeros", "--N", "3", "--t", "1.5", "--k-max", "7"]) == EXIT_OK
    assert "✓ 2 zeros of Ĝ_causal" in capsys.readouterr().out


# ============================================================================
# Configuration errors
# ============================================================================

def test_unknown_config_key_is_a_usage_error(tmp_path):
    config = write_config(tmp_path, colour="blue")
    assert main(["invert", "--config", config]) == EXIT_USAGE


def test_missing_config_is_a_usage_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE


# ============================================================================
# Forward and simulate
# ============================================================================

def test_forward_writes_grids_and_table(tmp_path):
    config = write_config(tmp_path)
    argv = ["forward", "--config", config, "--method", "compare", "--t-over-tau", "0.5", "1"]
    assert main(argv) == EXIT_OK
    out = tmp_path / "out"
    for stem in ("forward_00", "forward_01", "standard_00", "standard_01"):
        assert (out / f"{stem}.cdg").exists()
        assert (out / f"{stem}.pgm").exists()
    rows = read_rows(out / "forward.csv")
    assert rows[0] == ["t", "mass", "l2_norm"]
    assert len(rows) == 3
    assert read_grid(out / "forward_00.cdg").shape == (32, 32)
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["command"] == "forward"
    assert meta["exit_code"] == 0
    assert "✓ Done" in meta["log"]


def test_simulate_writes_truth_and_data(tmp_path):
    config = write_config(tmp_path)
    assert main(["simulate", "--config", config, "--seed", "3"]) == EXIT_OK
    out = tmp_path / "out"
    truth = read_grid(out / "truth.cdg")
    data = read_grid(out / "data.cdg")
    assert truth.shape == data.shape == (32, 32)
    assert data.total_mass == pytest.approx(truth.total_mass, rel=0.05)


# ============================================================================
# Inversion
# ============================================================================

@pytest.mark.parametrize("method", ["moore_penrose", "time_reversal", "landweber"])
def test_invert_writes_outputs(tmp_path, method):
    config = write_config(tmp_path, method=method, max_iters=5)
    assert main(["invert", "--config", config]) == EXIT_OK
    out = tmp_path / "out"
    for stem in ("data", "reconstruction"):
        assert (out / f"{stem}.cdg").exists()
        assert (out / f"{stem}.pgm").exists()
    assert (out / "iterations.csv").exists() == (method == "landweber")
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["command"] == "invert"
    assert meta["exit_code"] == 0
    assert "Relative L2 error" in meta["log"]


def test_invert_is_deterministic(tmp_path):
    outputs = []
    for run in ("a", "b"):
        config = write_config(tmp_path, name=f"{run}.json", output_dir=str(tmp_path / run), max_iters=5)
        assert main(["invert", "--config", config]) == EXIT_OK
        outputs.append((tmp_path / run / "reconstruction.cdg").read_bytes())
        outputs.append((tmp_path / run / "iterations.csv").read_bytes())
    assert outputs[0] == outputs[2]
    assert outputs[1] == outputs[3]


def test_forward_then_invert_round_trip(tmp_path):
    dx = 1.0 / 127
    config = write_config(
        tmp_path, rows=128, cols=128, dx=dx, tau=2 * dx, T=2 * dx,
        forward_path="spatial", data_noise_level=0.0, max_iters=20,
    )
    assert main(["forward", "--config", config, "--output-dir", str(tmp_path / "fwd")]) == EXIT_OK
    data = str(tmp_path / "fwd" / "forward_00.cdg")
    assert main(["invert", "--config", config, "--data", data]) == EXIT_OK
    reconstruction = read_grid(tmp_path / "out" / "reconstruction.cdg")
    truth = make_phantom("gaussian_blob", 128, 128, dx)
    assert relative_error(reconstruction, truth) < 0.05


def test_realised_delta_feeds_the_discrepancy(tmp_path):
    config = write_config(tmp_path, max_iters=5, delta_source="realised")
    assert main(["invert", "--config", config]) == EXIT_OK
    log = json.loads((tmp_path / "out" / "run_meta.json").read_text())["log"]
    line = next(l for l in log.splitlines() if "Realised relative data error" in l)
    realised = line.split("error ")[1].split(",")[0]
    assert line.endswith(f"delta={realised}")


def test_time_reversal_band_failure_is_numeric(tmp_path):
    config = write_config(tmp_path, method="time_reversal", band_split_tol=0.5)
    assert main(["invert", "--config", config]) == EXIT_NUMERIC


def test_time_reversal_beyond_one_step_is_a_usage_error(tmp_path):
    config = write_config(tmp_path, method="time_reversal")
    assert main(["invert", "--config", config, "--T", str(3.0 / 31)]) == EXIT_USAGE


def test_invert_from_data_file(tmp_path):
    config = write_config(tmp_path)
    assert main(["simulate", "--config", config]) == EXIT_OK
    data = str(tmp_path / "out" / "data.cdg")
    config = write_config(tmp_path, name="mp.json", method="moore_penrose", output_dir=str(tmp_path / "mp"))
    assert main(["invert", "--config", config, "--data", data]) == EXIT_OK
    assert read_grid(tmp_path / "mp" / "data.cdg").values.tobytes() == read_grid(data).values.tobytes()


def test_meta_path_can_be_given(tmp_path):
    meta = tmp_path / "meta.json"
    argv = ["--meta", str(meta), "upsilon", "--points", "3", "--output", str(tmp_path / "u.csv")]
    assert main(argv) == EXIT_OK
    content = json.loads(meta.read_text())
    assert content["command"] == "upsilon"
    assert content["arguments"]["points"] == 3

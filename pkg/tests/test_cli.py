import json
import re
import subprocess
import sys

import numpy as np
import pytest

from pxpctl import __version__
from pxpctl.cli import EXIT_OK, EXIT_USAGE, main, render_heatmap, z_color
from pxpctl.config import ExperimentConfig
from pxpctl.harness import AggregatedSeries
from pxpctl.records import read_aggregate_csv, write_aggregate_csv

RUN_CONFIG = """\
[experiment]
mode = quantum
L = 8
p = 0.3
q = 0.5
theta_rad = pi/3
t_max_steps = 10
n_samples = 6
master_seed = 17
observables = h_zz,entropy,z_profile

[sweep]
p = 0.3,0.7
"""


@pytest.fixture
def run_dir(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(RUN_CONFIG)
    out = tmp_path / "first"
    assert main(["run", str(cfg), "--out", str(out), "--workers", "1"]) == EXIT_OK
    manifest = json.loads(capsys.readouterr().out)
    return out, manifest


def test_run_writes_outputs(run_dir):
    out, manifest = run_dir
    assert manifest["n_points"] == 2 and manifest["master_seed"] == 17
    assert manifest["version"] == __version__
    for name in manifest["outputs"]:
        assert (out / name).exists()
    series = read_aggregate_csv(out / "aggregate.csv")
    assert {(k.p, k.observable) for k in series} == {(p, o) for p in (0.3, 0.7) for o in ("h_zz", "entropy")}
    assert all(s.n == 6 and len(s.times) == 11 for s in series.values())


def test_rerun_from_manifest_is_identical(run_dir, tmp_path):
    out, _ = run_dir
    again = tmp_path / "again"
    assert main(["run", str(out / "manifest.json"), "--out", str(again), "--workers", "3"]) == EXIT_OK
    for name in ("aggregate.csv", *[p.name for p in out.glob("records_*.jsonl")]):
        assert (out / name).read_bytes() == (again / name).read_bytes(), name


def test_heatmap(run_dir, tmp_path):
    out, _ = run_dir
    (records,) = [p for p in out.glob("records_*p0.3*.jsonl")]
    svg_path = tmp_path / "z.svg"
    assert main(["heatmap", str(records), "--sample", "2", "--cell", "3", "--out", str(svg_path)]) == EXIT_OK
    svg = svg_path.read_text()
    assert svg.count("<rect ") == 8 * 11
    assert 'width="24" height="33"' in svg
    fills = set(re.findall(r'fill="(#[0-9a-f]{6})"', svg))
    assert fills <= {z_color(v) for v in np.linspace(-1, 1, 2001)}
    assert main(["heatmap", str(records), "--sample", "99", "--out", str(svg_path)]) == EXIT_USAGE


def test_heatmap_colours():
    assert z_color(-1.0) == "#ffffff"
    assert z_color(1.0) == "#08306b"
    svg = render_heatmap(np.array([[-1.0, 1.0]]), cell=2)
    assert svg.count("<rect ") == 2 and "#ffffff" in svg and "#08306b" in svg


def test_invalid_config_exits_with_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\nL = 7\np = 2\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "L:" in err and "p:" in err


def test_missing_file_exits_with_usage_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_verify_magmeter(tmp_path, capsys):
    gates = tmp_path / "gates.txt"
    assert main(["verify-magmeter", "--L", "5", "--trials", "5", "--all-sizes", "--export-gates", str(gates)]) == EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("PASS")]
    assert len(lines) == 5
    text = gates.read_text().splitlines()
    assert len(text) == 5 * 3 + 1 and text[-1] == "IQFT"


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 4


def test_collapse_command(tmp_path, capsys):
    # stationary synthetic curves obeying the static scaling form
    pc, nu, beta = 0.5, 1.5, 0.3
    rows = []
    rng = np.random.default_rng(0)
    for L in (16, 32, 64):
        for p in np.round(np.arange(0.40, 0.601, 0.02), 4):
            v = L ** (-beta / nu) * (0.5 + 0.3 * np.tanh(0.8 * L ** (1 / nu) * (p - pc)))
            v *= 1 + 0.005 * rng.standard_normal()
            times = np.arange(0, L + 1)
            cfg = ExperimentConfig(mode="classical", L=L, p=float(p), theta=np.pi / 2, t_max=L)
            rows.append((cfg, "h_zz", AggregatedSeries(times, np.full(L + 1, v), np.full(L + 1, 0.005 * v), 100)))
    csv = tmp_path / "agg.csv"
    write_aggregate_csv(csv, rows)
    prefix = tmp_path / "fit"
    argv = ["collapse", str(csv), "--t-rule", "L/2", "--guess", "p_c=0.48", "--guess", "nu=1.8",
            "--guess", "beta=0.2", "--out", str(prefix)]
    assert main(argv) == EXIT_OK
    text = (tmp_path / "fit.txt").read_text()
    got = float(re.search(r"^p_c = ([0-9.e-]+)", text, re.M).group(1))
    assert got == pytest.approx(pc, abs=0.01)
    assert (tmp_path / "fit_collapsed.csv").read_text().count("\n") == 1 + 3 * 11
    capsys.readouterr()
    assert main(["collapse", str(csv), "--guess", "p_c=0.5"]) == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pxpctl", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from recovery.cli import HEADER, ConfigError, build_config, main, parse_config_file


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _summary(path):
    return json.loads(open(f"{path}.summary.json").read())


def test_recover_output_shape(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["recover", "--fn", "torus_kink", "--d", "2", "--n", "200,1000", "--seeds", "0-1",
                 "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[0] == HEADER
    body = rows[1:]
    assert {r[6] for r in body} == {"approximation_error", "sampling_error"}
    assert all(r[10] == "" for r in body)
    assert sum(r[6] == "sampling_error" for r in body) == 4
    for r in body:
        assert float(r[7]) > 0 and float(r[8]) >= 0
    summary = _summary(out)
    assert summary["failures"] == 0
    assert [g["n"] for g in summary["groups"]] == [200, 1000]
    assert all("median_ratio" in g for g in summary["groups"])


def test_byte_reproducible_and_parallel(tmp_path):
    args = ["integrate", "--fn", "cube_bspline2", "--d", "2", "--n", "300,600", "--seeds", "0-3"]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert main(args + ["--out", str(c), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_record_time_fills_wall_clock(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["recover", "--n", "300", "--out", str(out), "--record-time"]) == 0
    timed = [r for r in _read(out)[1:] if r[6] == "sampling_error"]
    assert all(float(r[10]) >= 0 for r in timed)


def test_config_file_with_override(tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text("# sweep\nfn = torus_f075\nd = 2\nn = 1e3, 1e4\nseeds = 0-4\nm-rule = f1\ndelta = 0.05\n")
    assert parse_config_file(cfg_path)["m_rule"] == "f1"
    cfg = build_config(["recover", "--config", str(cfg_path), "--d", "3"])
    assert cfg.fn == "torus_f075" and cfg.d == 3
    assert cfg.n_grid == (1000, 10000)
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.delta == 0.05


@pytest.mark.parametrize("argv", [
    ["recover", "--n", "1000,100"],
    ["recover", "--fn", "nope"],
    ["recover", "--seeds", ""],
    ["recover", "--delta", "2"],
    ["recover", "--m-rule", "explicit", "--n", "100,200", "--m", "5"],
    ["recover", "--bogus"],
    ["wavelet", "--wavelet", "sym4"],
])
def test_config_errors_exit_two(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "x.csv")] if "--bogus" not in argv else argv) == 2


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        build_config(["recover", "--config", str(bad)])
    assert main(["recover", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_io_errors_exit_three(tmp_path):
    assert main(["recover", "--n", "100", "--out", str(tmp_path / "no" / "such" / "dir.csv")]) == 3
    assert main(["recover", "--n", "100", "--nodes-file", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "x.csv")]) == 3


def test_malformed_nodes_exit_two(tmp_path):
    nodes = tmp_path / "nodes.csv"
    nodes.write_text("a,b\n0.1,0.2\n")
    assert main(["recover", "--n", "40", "--nodes-file", str(nodes), "--out", str(tmp_path / "x.csv")]) == 2


def test_numerical_failure_is_flagged(tmp_path):
    nodes = tmp_path / "nodes.csv"
    nodes.write_text("x1,x2\n" + "0.25,0.5\n" * 40)
    out = tmp_path / "f.csv"
    assert main(["recover", "--n", "40", "--nodes-file", str(nodes), "--out", str(out)]) == 0
    flagged = [r for r in _read(out)[1:] if r[6].startswith("failure:")]
    assert flagged and flagged[0][6] == "failure:RankDeficiencyError"
    assert _summary(out)["failures"] == 1


def test_external_nodes(tmp_path):
    pts = np.random.default_rng(0).random((400, 2))
    nodes = tmp_path / "lattice.csv"
    nodes.write_text("x1,x2\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in pts))
    out = tmp_path / "e.csv"
    assert main(["recover", "--n", "400", "--nodes-file", str(nodes), "--out", str(out)]) == 0
    rows = [r for r in _read(out)[1:] if r[6] == "sampling_error"]
    assert len(rows) == 1 and rows[0][3] == "400"


def test_spectra_dominated(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["spectra", "--d", "16", "--s", "5", "--weight", "pound", "--m-max", "3000",
                 "--out", str(out)]) == 0
    summary = _summary(out)
    assert summary["dominated"] and summary["checked"] == 3000
    out2 = tmp_path / "s2.csv"
    assert main(["spectra", "--d", "4", "--s", "2", "--weight", "star", "--m-max", "200",
                 "--out", str(out2)]) == 0
    assert _summary(out2)["dominated"] and _summary(out2)["checked"] == 80


def test_recover_weighted_legendre(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["recover-weighted", "--fn", "legendre_span", "--d", "1", "--s", "2", "--n", "2000",
                 "--seeds", "0-1", "--out", str(out)]) == 0
    rows = [r for r in _read(out)[1:] if r[6] == "l2_error"]
    sigma = [float(r[7]) for r in _read(out)[1:] if r[6] == "sigma_m"]
    assert len(rows) == 2 and all(float(r[7]) <= 3 * sigma[0] for r in rows)


def test_concentration_side_files(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["concentration", "--d", "2", "--n", "2000", "--m-rule", "f1", "--trials", "20",
                 "--out", str(out)]) == 0
    side = list(tmp_path.glob("c.concentration_n2000_m*.csv"))
    assert len(side) == 1
    assert side[0].with_suffix(".json").exists()
    metrics = {r[6] for r in _read(out)[1:]}
    assert "failure_rate[t=0.50]" in metrics and "oliveira_bound[t=0.50]" in metrics


def test_wavelet_run(tmp_path):
    out = tmp_path / "wl.csv"
    assert main(["wavelet", "--fn", "torus_kink", "--d", "1", "--levels", "3,4", "--wavelet", "db2",
                 "--oversampling", "10", "--out", str(out)]) == 0
    summary = _summary(out)
    assert "monotone" in summary and "rate_per_level" in summary
    assert sum(r[6] == "l2_error" for r in _read(out)[1:]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "recovery.cli", "recover", "--n", "1000,10"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert "strictly increasing" in proc.stderr

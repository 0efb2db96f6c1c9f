import csv
import json
import math

import pytest

from hcl import bounds as bd
from hcl.cli import OUT_DIR_ENV, RunConfig, build_config, build_parser, main, read_config_file


@pytest.fixture(autouse=True)
def _no_env(monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_bounds_csv(tmp_path):
    assert main(["bounds", "--gamma", "0.5", "--dh-max", "3", "--samples", "7", "--out-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bounds.csv")
    assert len(rows) == 7 and tuple(rows[0]) == bd.BOUND_COLUMNS
    last = rows[-1]
    assert float(last["dH"]) == 3.0
    assert float(last["thm2_upper"]) == pytest.approx(3.1827951775820556, rel=1e-15)
    assert float(last["thm3_lower"]) == pytest.approx(2.7114014706672083, rel=1e-15)


@pytest.mark.parametrize("flags", [["--n", "1"], ["--gamma", "0"]])
def test_bounds_collapse_to_distance(tmp_path, flags):
    assert main(["bounds", *flags, "--samples", "5", "--out-dir", str(tmp_path)]) == 0
    for r in _rows(tmp_path / "bounds.csv"):
        d = float(r["dH"])
        for col in ("thm2_upper", "thm2_relaxed", "thm3_lower", "thm3_relaxed"):
            assert float(r[col]) == d


def test_blaschke_mode_sets_gamma(tmp_path):
    assert main(["bounds", "--n", "4", "--samples", "2", "--out-dir", str(tmp_path)]) == 0
    assert float(_rows(tmp_path / "bounds.csv")[0]["mu"]) == 2.0


@pytest.mark.parametrize(
    "argv",
    [
        ["bounds", "--gamma", "0.5", "--n", "3"],
        ["bounds", "--gamma", "-1"],
        ["bounds", "--n", "0"],
        ["bounds", "--samples", "1"],
        ["frobnicate"],
        ["trajectory", "--mode", "max-fixed", "--T", "1", "--x0", "0", "--y0", "2"],
        ["trajectory", "--mode", "max-fixed", "--T", "1"],
    ],
)
def test_usage_errors(argv, tmp_path, capsys):
    assert main([*argv, "--out-dir", str(tmp_path)] if argv[0] != "frobnicate" else argv) == 2


def test_unwritable_output_is_usage_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["bounds", "--out-dir", str(blocker / "sub")]) == 2


def test_verify_small_grid(tmp_path, capsys):
    argv = ["verify", "--gamma", "0.5", "--grid", "16", "--n-t", "6", "--controls", "5", "--seam-points", "200", "--brute-grid", "64", "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    out = _json(capsys)
    assert out["passed"] is True


def test_verify_detects_inconsistent_mu(tmp_path, capsys):
    argv = ["verify", "--gamma", "0.5", "--grid", "16", "--n-t", "6", "--controls", "5", "--seam-points", "200", "--brute-grid", "64", "--corrupt-mu", "1.01", "--out-dir", str(tmp_path)]
    assert main(argv) == 1
    assert _json(capsys)["passed"] is False


@pytest.mark.parametrize(
    "mode,arcs",
    [
        ("max-fixed", 3),
        ("min-fixed", 2),
        ("max-free", 3),
        ("min-free", 2),
    ],
)
def test_trajectory_modes(tmp_path, capsys, mode, arcs):
    argv = ["trajectory", "--mode", mode, "--T", "2", "--out-dir", str(tmp_path), "--step", "1e-3"]
    if mode.endswith("fixed"):
        argv += ["--x0", "0", "--y0", "1.1"]
    assert main(argv) == 0
    info = _json(capsys)
    assert info["arc_count"] == arcs
    assert abs(info["difference"]) < 1e-8
    rows = _rows(info["csv"])
    assert tuple(rows[0]) == ("t", "x", "y", "u", "alpha", "h", "C", "region")
    assert float(rows[0]["t"]) == -2.0


def test_trajectory_extension(tmp_path, capsys):
    argv = ["trajectory", "--mode", "max-free", "--T", "2", "--extend", "5", "--step", "1e-3", "--out-dir", str(tmp_path)]
    assert main(argv) == 0
    info = _json(capsys)
    assert info["start_corner_distance"] < 1e-4 and info["end_corner_distance"] < 1e-4


def test_trajectory_outputs_are_deterministic(tmp_path, capsys):
    for name in ("a.csv", "b.csv"):
        assert main(["trajectory", "--mode", "max-fixed", "--T", "1", "--x0", "0", "--y0", "1.1", "--step", "1e-3", "--out-dir", str(tmp_path), "--out", name]) == 0
    capsys.readouterr()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_sharpness(tmp_path, capsys):
    assert main(["sharpness", "--T", "2", "--epsilon", "1e-2", "1e-3", "--out-dir", str(tmp_path)]) == 0
    rep = _json(capsys)
    assert rep["conclusive"]
    for problem in ("max", "min", "free"):
        rows = [r for r in rep["rows"] if r["problem"] == problem]
        assert len(rows) == 2 and all(r["gap"] > 0 for r in rows)
        assert rows[1]["gap"] < rows[0]["gap"]


def test_sharpness_hyperbolic_case(tmp_path, capsys):
    assert main(["sharpness", "--gamma", "0", "--T", "1", "--epsilon", "1e-2", "--problem", "max", "--out-dir", str(tmp_path)]) == 0


def test_config_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# settings\ngamma = 1.5\nfd-step = 1e-5\nout_dir = from_file\nseed = 3\n")
    assert read_config_file(cfg_file) == {"gamma": 1.5, "fd_step": 1e-5, "out_dir": "from_file", "seed": 3}
    parser = build_parser()
    cfg = build_config(parser.parse_args(["bounds", "--config", str(cfg_file)]))
    assert (cfg.gamma, cfg.fd_step, cfg.out_dir, cfg.seed) == (1.5, 1e-5, "from_file", 3)
    monkeypatch.setenv(OUT_DIR_ENV, "from_env")
    cfg = build_config(parser.parse_args(["bounds", "--config", str(cfg_file), "--seed", "9"]))
    assert (cfg.out_dir, cfg.seed) == ("from_env", 9)
    cfg = build_config(parser.parse_args(["bounds", "--config", str(cfg_file), "--out-dir", "flag", "--n", "3"]))
    assert cfg.out_dir == "flag" and cfg.n == 3 and cfg.bound.mu == pytest.approx(math.sqrt(3))


def test_bad_config_files(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["bounds", "--config", str(bad)]) == 2
    bad.write_text("gamma 0.5\n")
    assert main(["bounds", "--config", str(bad)]) == 2
    bad.write_text("gamma = 0.5\nn = 3\n")
    assert main(["bounds", "--config", str(bad)]) == 2
    assert main(["bounds", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path))
    assert main(["bounds", "--samples", "3"]) == 0
    assert (tmp_path / "bounds.csv").exists()


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(tol=0.0)
    with pytest.raises(ValueError):
        RunConfig(grid=0)

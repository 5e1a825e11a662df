import csv
import io

import pytest

from walshpen import cli
from walshpen.stats import make_report


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_formula_K_value_one(capsys):
    code, out, _ = run(["formulas", "--name", "K", "--beta", "0", "--gamma", "0", "--x", "1", "--t", "1",
                        "--output", "-"], capsys)
    assert code == 0
    assert out.startswith("# walshpen ")
    (r,) = rows(out)
    assert float(r["value"]) == 1.0


def test_bad_mu_exit_2(capsys):
    code, out, err = run(["simulate", "--mu", "0.5,0.4", "--alpha", "0,0", "--t", "1"], capsys)
    assert code == 2
    assert "mu" in err
    assert out == ""


def test_negative_list_syntax(capsys):
    code, out, _ = run(["formulas", "--name", "R", "--mu", "0.3,0.7", "--alpha=-1,-2", "--gamma=-1",
                        "--x", "0.5", "--k", "1", "--t", "2", "-o", "-"], capsys)
    assert code == 0
    (r,) = rows(out)
    assert r["kind"] and float(r["value"]) > 0


def test_config_file_and_flag_override(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# example\nmu = 0.3,0.7\nalpha = 0,0\nt = 1\nsteps = 4\nn_paths = 3\nseed = 5\n")
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert cli.run(["simulate", "--config", str(cfgfile), "-o", str(out1)]) == 0
    assert cli.run(["simulate", "--config", str(cfgfile), "--n-paths", "2", "-o", str(out2)]) == 0
    capsys.readouterr()
    r1, r2 = rows(out1.read_text()), rows(out2.read_text())
    assert len(r1) == 3 * 5 and len(r2) == 2 * 5
    assert list(r1[0]) == list(cli.PATH_COLUMNS)
    # different configurations hash differently; output path does not enter the hash
    assert out1.read_text().splitlines()[0] != out2.read_text().splitlines()[0]
    out3 = tmp_path / "c.csv"
    cli.run(["simulate", "--config", str(cfgfile), "-o", str(out3)])
    assert out3.read_text() == out1.read_text()


def test_output_dir_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    code, out, _ = run(["formulas", "--name", "J", "--beta", "1", "--x", "0.5", "--t", "1"], capsys)
    assert code == 0
    assert (tmp_path / "out" / "formulas.csv").exists()
    assert "formulas.csv" in out


def test_penalize_columns(capsys):
    code, out, _ = run(["penalize", "--mu", "0.3,0.7", "--alpha", "0,-0.5", "--gamma", "1", "--s", "1",
                        "--t-grid", "2,4", "--steps", "2", "--n-paths", "2000", "--functional", "on_ray:0",
                        "-o", "-"], capsys)
    assert code == 0
    rs = rows(out)
    assert list(rs[0]) == list(cli.PENALIZE_COLUMNS)
    assert [float(r["t"]) for r in rs] == [2.0, 4.0, float("inf")]


def test_limit_sample_weight_column(capsys):
    for alpha, gamma in [("1,-1", "0.25"), ("0,0", "0")]:
        code, out, _ = run(["limit-sample", "--mu", "0.3,0.7", f"--alpha={alpha}", f"--gamma={gamma}",
                            "--t", "1", "--steps", "2", "--n-paths", "4", "-o", "-"], capsys)
        assert code == 0
        rs = rows(out)
        assert "weight" in rs[0] and len(rs) == 4 * 3
        assert all(float(r["weight"]) > 0 for r in rs)


def test_verify_is_byte_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["verify", "--suite", "pde", "--seed", "3"]
    assert cli.run(args + ["-o", str(a)]) == 0
    assert cli.run(args + ["-o", str(b), "--workers", "2"]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_verify_failure_exit_1(monkeypatch, capsys):
    def failing(name, seed, workers=1, scale=1.0):
        return [make_report("forced", 10.0, 3.0, "x<=", 1)]

    monkeypatch.setattr(cli, "run_suite", failing)
    code, _, err = run(["verify", "--suite", "pde", "-o", "-"], capsys)
    assert code == 1
    assert "forced" in err


def test_unknown_suite_and_functional(capsys):
    assert run(["verify", "--suite", "nope"], capsys)[0] == 2
    code, _, err = run(["penalize", "--functional", "bogus:1", "--n-paths", "10"], capsys)
    assert code == 2 and "functional" in err

import csv
import io
import json
import subprocess
import sys

import pytest

from fbsde_fourier import __version__, bench
from fbsde_fourier.cli import OUT_ENV, main
from fbsde_fourier.solution import NumericalError


@pytest.fixture(autouse=True)
def no_env_out(monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_solve_json(capsys):
    code, out, _ = run(capsys, "solve", "--n", "20", "--paths", "50")
    assert code == 0
    data = json.loads(out)
    assert data["metadata"]["version"] == __version__
    assert data["metadata"]["seed"] == 0 and len(data["metadata"]["config_hash"]) == 64
    assert data["y0"] == pytest.approx(1.0135, abs=1e-3)
    assert len(data["stability"]) == 20
    assert data["clamped"] == 0


def test_solve_is_byte_identical(capsys):
    first = run(capsys, "solve", "--n", "10", "--paths", "40", "--seed", "4")[1]
    second = run(capsys, "solve", "--n", "10", "--paths", "40", "--seed", "4")[1]
    third = run(capsys, "solve", "--n", "10", "--paths", "40", "--seed", "5")[1]
    assert first == second and first != third


@pytest.mark.parametrize("argv, field", [
    (["--n", "0"], "n"),
    (["--N", "3"], "N"),
    (["--N0", "-1"], "N0"),
    (["--l", "-0.2"], "l"),
    (["--l", "wide"], "l"),
    (["--sigma", "0"], "sigma"),
    (["--kappa", "-1"], "kappa"),
    (["--paths", "-1"], "paths"),
    (["--n-list", "10,5"], "n_list"),
    (["--scheme", "custom"], "tableau"),
    (["--scheme", "rk2", "--tableau", "x.ini"], "tableau"),
])
def test_validation_errors_exit_2(capsys, argv, field):
    code, out, err = run(capsys, "solve", *argv)
    assert code == 2 and out == ""
    assert err.startswith(f"error: {field}:")


def test_argparse_choice_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--scheme", "rk9"])
    assert info.value.code == 2


def test_numerical_abort_exit_3(capsys, monkeypatch):
    def boom(self, problem, grid):
        raise NumericalError("non-finite u at time index 7", 7)

    monkeypatch.setattr(bench.Scheme, "solve", boom)
    code, _, err = run(capsys, "solve", "--n", "10")
    assert code == 3 and "time index 7" in err


def test_implicit_tableau_exit_2(capsys, tmp_path):
    path = tmp_path / "cn.ini"
    path.write_text("[tableau]\ngamma = 0, 1\nalpha = 0\nbottom_alpha = 1/2, 1/2\nbeta = 0\nbottom_beta = 1\n")
    code, _, err = run(capsys, "solve", "--tableau", str(path), "--n", "5")
    assert code == 2 and "implicit" in err


def test_custom_tableau_matches_builtin(capsys, tmp_path):
    path = tmp_path / "rk2.ini"
    path.write_text("[tableau]\ngamma = 0, 2/3, 1\nalpha = 0; 2/3\nbottom_alpha = 1/4, 3/4, 0\n"
                    "beta = 0; 2/3\nbottom_beta = 1, 0\n")
    custom = json.loads(run(capsys, "solve", "--tableau", str(path), "--provider", "milstein", "--n", "10",
                            "--paths", "0")[1])
    builtin = json.loads(run(capsys, "solve", "--scheme", "rk2", "--n", "10", "--paths", "0")[1])
    assert custom["y0"] == builtin["y0"] and custom["z0"] == builtin["z0"]


def test_converge_csv(capsys):
    code, out, _ = run(capsys, "converge", "--n-list", "5,10,20", "--paths", "30")
    table = rows(out)
    assert code == 0
    assert table[0] == ["n", "e_true", "e_sim", "e_sim_std", "slope_true_cum", "slope_sim_cum"]
    assert [r[0] for r in table[1:]] == ["5", "10", "20"]
    assert table[1][4] == "" and table[1][5] == ""
    assert float(table[3][4]) > 0.8
    # 17 significant digits round-trip
    assert all(float(f"{float(v):.17g}") == float(v) for v in table[2][1:])


def test_converge_single_row_and_json(capsys):
    table = rows(run(capsys, "converge", "--n-list", "5", "--paths", "10")[1])
    assert len(table) == 2 and table[1][4:] == ["", ""]
    data = json.loads(run(capsys, "converge", "--n-list", "5", "--paths", "10", "--format", "json")[1])
    assert data["slope_true"] is None and len(data["rows"]) == 1


def test_converge_rejects_fixed_span(capsys):
    code, _, err = run(capsys, "converge", "--l", "0.1")
    assert code == 2 and err.startswith("error: l:")


def test_paths_csv(capsys):
    code, out, _ = run(capsys, "paths", "--paths", "2", "--n", "5")
    table = rows(out)
    assert code == 0
    assert table[0] == ["path_id", "t", "x", "y_num", "y_exact", "z_num", "z_exact"]
    body = table[1:]
    assert len(body) == 2 * 6
    starts = [r for r in body if float(r[1]) == 0.0]
    assert len(starts) == 2 and starts[0][2:] == starts[1][2:]


def test_out_dir_and_env(capsys, tmp_path, monkeypatch):
    code, out, _ = run(capsys, "converge", "--n-list", "5,10", "--paths", "5", "--out", str(tmp_path / "a"))
    assert code == 0 and out == ""
    assert (tmp_path / "a" / "converge.csv").exists() and (tmp_path / "a" / "converge.json").exists()
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "b"))
    assert run(capsys, "solve", "--n", "5", "--paths", "5")[0] == 0
    assert json.loads((tmp_path / "b" / "solve.json").read_text())["metadata"]["config"]["n"] == 5
    assert rows((tmp_path / "b" / "layers.csv").read_text())[0][0] == "i"


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[model]\nsigma = 0.08\n\n[scheme]\nscheme = rk1\n\n[grid]\nN = 2\n\n[run]\nn = 10\npaths = 20\nseed = 3\n")
    from_file = json.loads(run(capsys, "solve", "--config", str(cfg))[1])
    from_flags = json.loads(run(capsys, "solve", "--sigma", "0.08", "--scheme", "rk1", "--n", "10",
                                "--paths", "20", "--seed", "3")[1])
    assert from_file == from_flags
    overridden = json.loads(run(capsys, "solve", "--config", str(cfg), "--n", "5")[1])
    assert overridden["metadata"]["config"]["n"] == 5
    assert overridden["metadata"]["config"]["model"]["sigma"] == 0.08


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nsteps = 10\n")
    code, _, err = run(capsys, "solve", "--config", str(cfg))
    assert code == 2 and "unknown key" in err


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "fbsde_fourier.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__

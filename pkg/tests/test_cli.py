import csv
import subprocess
import sys

import numpy as np
import pytest

from ddgsolve import io as dio
from ddgsolve.cli import main
from ddgsolve.harness import RESULT_COLUMNS, STUDY_COLUMNS


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_generate_and_solve_imported(tmp_path, capsys):
    assert main(["generate", "--problem", "nonsmooth-poisson", "--size", "20", "--out-dir", str(tmp_path)]) == 0
    for name in ("A.mtx", "rhs.mtx", "coords.csv", "materials.csv"):
        assert (tmp_path / name).exists()
    out = tmp_path / "rows.csv"
    args = ["solve", "--coarsening-factor", "5", "--output", str(out)]
    assert main(args + ["--problem", "nonsmooth-poisson", "--size", "20"]) == 0
    assert main(args + ["--matrix", str(tmp_path / "A.mtx"), "--rhs", str(tmp_path / "rhs.mtx"),
                        "--coords", str(tmp_path / "coords.csv"),
                        "--material-file", str(tmp_path / "materials.csv")]) == 0
    table = rows(out)
    assert table[0] == RESULT_COLUMNS and len(table) == 3
    it = RESULT_COLUMNS.index("iterations")
    assert table[1][it] == table[2][it]
    assert "classical CG estimate" in capsys.readouterr().out


def test_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("problem = poisson2d\nsize = 20\ncoarsening_factor = 5\np = 0\n")
    assert main(["solve", "--config", str(cfg), "--p", "2"]) == 0
    out = capsys.readouterr().out
    assert any(line.split() == ["p", "2"] for line in out.splitlines())


def test_sweep_and_empty_sweep(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--problem", "poisson2d", "--size", "20", "--coarsening-factor", "5",
                 "--axis", "p", "--values", "0,1,2", "--out", str(out)]) == 0
    assert len(rows(out)) == 4
    assert main(["sweep", "--problem", "poisson2d", "--axis", "size", "--out", str(out)]) == 0
    assert rows(out) == [RESULT_COLUMNS]


def test_coarse_study(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["coarse-study", "--problem", "poisson2d", "--coarsening-factor", "4", "--p", "1",
                 "--H", "1/4,1/8,1/16", "--out", str(out)]) == 0
    assert rows(out)[0] == STUDY_COLUMNS and len(rows(out)) == 4
    assert "fitted energy-norm order" in capsys.readouterr().out


def test_export(tmp_path):
    assert main(["export", "--problem", "elasticity", "--size", "10", "--coarsening-factor", "4",
                 "--out-dir", str(tmp_path)]) == 0
    R0 = dio.read_matrix(tmp_path / "R0.mtx")
    A = dio.read_matrix(tmp_path / "A.mtx")
    A0 = dio.read_matrix(tmp_path / "A0.mtx")
    assert R0.shape == (A0.shape[0], A.shape[0])
    assert np.abs((R0 @ A @ R0.T - A0).toarray()).max() <= 1e-10 * abs(A0).max()
    part = dio.read_partition(tmp_path / "partition.txt")
    F = dio.read_generators(tmp_path / "F.mtx")
    assert len(part) == A.shape[0] and F.shape[0] == A.shape[0]


@pytest.mark.parametrize("argv,label", [
    (["solve", "--tol", "2"], "[config]"),
    (["solve", "--problem", "poisson2d", "--size", "20", "--coarsening-factor", "10", "--levels", "3"], "[coarse]"),
    (["solve", "--matrix", "/nonexistent/A.mtx", "--coords", "/nonexistent/xy.csv"], "[generate]"),
    (["solve", "--problem", "poisson2d", "--size", "8", "--partitioner", "file", "--partition", "/nonexistent"],
     "[partition]"),
])
def test_failures_exit_nonzero_with_stage(argv, label, capsys):
    assert main(argv) == 1
    assert label in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ddgsolve.cli", "solve", "--tol", "0"],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "[config]" in proc.stderr

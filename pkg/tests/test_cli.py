import csv
import subprocess
import sys

import numpy as np
import pytest

from igrid.cli import main
from igrid.heat3d import read_field


def igrid(*args, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "igrid", *args], capture_output=True, text=True, timeout=120, **kwargs
    )


@pytest.mark.parametrize(
    "args, expected",
    [(["-n", "8"], "2x2x2"), (["-n", "1"], "1x1x1"), (["-n", "12", "--fix", "z=1"], "4x3x1")],
)
def test_dims(args, expected, capsys):
    assert main(["dims", *args]) == 0
    assert capsys.readouterr().out.strip() == expected


def test_dims_infeasible(capsys):
    assert main(["dims", "-n", "7", "--fix", "x=2"]) == 1
    assert "igrid.topology" in capsys.readouterr().err


@pytest.mark.parametrize(
    "args",
    [
        ["run", "--ranks", "3", "--topology", "2x2x1"],
        ["run", "--topology", "2x2"],
        ["run", "--transport", "mpi"],
        ["run", "--hide-comm", "1,2"],
        ["run", "--periodic", "w"],
        ["bench", "--ranks", "0"],
        ["dims"],
    ],
)
def test_usage_errors_exit_2(args):
    with pytest.raises(SystemExit) as err:
        main(args)
    assert err.value.code == 2


def test_runtime_error_exit_1(capsys):
    assert main(["run", "--nx", "2", "--nt", "1"]) == 1
    err = capsys.readouterr().err
    assert "igrid.grid" in err and "rank 0" in err


def test_run_constant(tmp_path):
    out, timing = tmp_path / "T.bin", tmp_path / "t.csv"
    code = main(
        ["run", "--nx", "32", "--ny", "32", "--nz", "32", "--nt", "10", "--ranks", "1",
         "--init", "constant", "--out", str(out), "--csv", str(timing)]
    )
    assert code == 0
    T = read_field(out)
    assert T.shape == (32, 32, 32) and np.all(T == 1.7)
    rows = list(csv.reader(timing.open()))
    assert rows[0] == ["it", "step_secs", "halo_secs", "total_secs"]
    assert len(rows) == 11


def test_run_decomposition_byte_identical(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    common = ["--nt", "5", "--init", "gaussian"]
    assert main(["run", "--nx", "18", "--ny", "18", "--nz", "18", "--ranks", "8",
                 "--topology", "2x2x2", "--out", str(a), *common]) == 0
    assert main(["run", "--nx", "34", "--ny", "34", "--nz", "34", "--ranks", "1",
                 "--out", str(b), *common]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_deterministic(tmp_path):
    paths = [tmp_path / "1.bin", tmp_path / "2.bin"]
    for p in paths:
        assert main(["run", "--nx", "10", "--ny", "9", "--nz", "8", "--nt", "6", "--ranks", "4",
                     "--init", "gaussian", "--hide-comm", "2,2,2", "--seed", "3", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_run_tcp_matches_inproc(tmp_path):
    tcp, inp = tmp_path / "tcp.bin", tmp_path / "inp.bin"
    args = ["run", "--nx", "12", "--ny", "12", "--nz", "12", "--nt", "5", "--ranks", "2", "--init", "gaussian"]
    res = igrid(*args, "--transport", "tcp", "--out", str(tcp))
    assert res.returncode == 0, res.stderr
    assert main([*args, "--out", str(inp)]) == 0
    assert tcp.read_bytes() == inp.read_bytes()


def test_run_tcp_failure_exit_code(tmp_path):
    res = igrid("run", "--nx", "2", "--ranks", "2", "--transport", "tcp")
    assert res.returncode == 1
    assert "rank" in res.stderr


def test_bench_small(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--nx", "8", "--ny", "8", "--nz", "8", "--nt", "2", "--ranks", "1,2",
                 "--samples", "5", "--csv", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["ranks"]) for r in rows] == [1, 2]
    assert float(rows[0]["efficiency"]) == 1.0
    for r in rows:
        assert float(r["ci_low"]) <= float(r["median_secs"]) <= float(r["ci_high"])


def test_bench_tcp(tmp_path):
    out = tmp_path / "bench.csv"
    res = igrid("bench", "--nx", "8", "--ny", "8", "--nz", "8", "--nt", "2", "--ranks", "1,2",
                "--samples", "3", "--transport", "tcp", "--csv", str(out))
    assert res.returncode == 0, res.stderr
    rows = list(csv.DictReader(out.open()))
    assert [int(r["ranks"]) for r in rows] == [1, 2]


def test_bench_default_samples():
    from igrid.cli import build_parser

    args = build_parser().parse_args(["bench"])
    assert args.samples == 20 and args.ranks == [1, 2, 4, 8] and args.nx == 64

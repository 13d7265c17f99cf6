import io
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringscale.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_plan_list_includes_the_three_measured_configurations():
    code, text = run("plan", "--cluster", "sng", "--list")
    assert code == 0
    rows = text.split("\n\n")[0].splitlines()
    assert rows[0].startswith("ranks_per_node,threads_per_rank,hyperthreading")
    keys = {tuple(r.split(",")[:3]) for r in rows[1:]}
    assert {("1", "48", "0"), ("2", "48", "1"), ("4", "12", "0")} <= keys


def test_plan_errors(capsys):
    assert run("plan", "--cluster", "missing.txt")[0] == 1
    code, _ = run("plan", "--cluster", "sng", "--ranks", "4", "--threads", "13")
    assert code == 1
    assert "52 > 48" in capsys.readouterr().err
    assert run("plan", "--ranks", "4")[0] == 1


def test_plan_single_valid_configuration():
    code, text = run("plan", "--ranks", "2", "--threads", "48", "--ht")
    assert code == 0
    assert text.splitlines()[1] == "2,48,1,2,96,96"


def test_usage_errors_exit_1(capsys):
    assert run("frobnicate")[0] == 1
    assert "usage:" in capsys.readouterr().err
    assert run("plan", "--bogus")[0] == 1
    assert "usage:" in capsys.readouterr().err
    assert run()[0] == 1
    assert run("bench", "--workers", "1,x")[0] == 1


def test_peak():
    code, text = run("peak", "--cluster", "sng")
    assert code == 0
    lines = text.splitlines()
    assert lines[1] == "node,1,fp64,nominal,4147200000000.0"
    assert float(lines[2].split(",")[-1]) == pytest.approx(2.68738560e16, rel=1e-12)
    code, text = run("peak", "--nodes", "4", "--precision", "fp32")
    assert float(text.splitlines()[2].split(",")[-1]) == 4 * 2 * 4.1472e12
    assert run("peak", "--nodes", "0")[0] == 1


def test_verify_command_default_listing():
    code, text = run("verify-paper")
    assert code == 0
    rows = text.split("\n\n")[0].splitlines()
    assert rows == ["table,units,column,printed,recomputed",
                    "2,128,linear_s,79.93,71.9375",
                    "4,768,linear_s,3.54,4.72531",
                    "4,768,efficiency_pct,89.9,119.932",
                    "7,128,pct_peak,67.6,60.0518"]


def test_verify_command_table1_is_clean_and_errors_still_exit_zero():
    code, text = run("verify-paper", "--table", "1")
    assert code == 0 and text.splitlines()[1:] == ["", "0 discrepancies in table 1"]
    assert run("verify-paper", "--table", "9")[0] == 1


def _flags(text):
    return set(text.split("\n\n")[0].splitlines()[1:])


def test_verify_command_tight_tolerance_flags_more():
    base = _flags(run("verify-paper")[1])
    tight = _flags(run("verify-paper", "--tolerance-pp", "0.001")[1])
    assert base < tight


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_verify_command_monotone_in_tolerance(a, b):
    lo, hi = sorted((a, b))
    assert _flags(run("verify-paper", "--tolerance-pp", repr(hi))[1]) <= \
        _flags(run("verify-paper", "--tolerance-pp", repr(lo))[1])


def test_bench_single_worker_table(tmp_path):
    csv_path = tmp_path / "records.csv"
    code, text = run("bench", "--workers", "1", "--repeats", "1", "--side", "5", "--samples-per-worker", "4",
                     "--out", str(csv_path))
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "workers,epoch_time_s"
    assert lines[-1].startswith("1 | ") and lines[-1].endswith(" | -")
    assert csv_path.read_text().splitlines()[0] == "workers,epoch_time_s"
    code, table = run("report", "--input", str(csv_path))
    assert code == 0 and table.splitlines()[0].startswith("Workers | Training Time(s) per Epoch")


def test_bench_averages_repeats_per_worker_count():
    code, text = run("bench", "--workers", "1,2,4", "--repeats", "4", "--side", "5", "--samples-per-worker", "4",
                     "--verbose")
    assert code == 0
    losses, records, table = text.split("\n\n")
    rows = losses.splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["1"] * 4 + ["2"] * 4 + ["4"] * 4
    assert len(records.splitlines()) == 4
    assert len(table.splitlines()) == 5


def test_bench_no_timing_output_is_deterministic():
    argv = ("bench", "--workers", "1,2", "--repeats", "2", "--side", "5", "--samples-per-worker", "4",
            "--verbose", "--no-timing", "--seed", "3")
    a, b = run(*argv), run(*argv)
    assert a[0] == 0 and a == b
    assert "epoch_time" not in a[1]


def test_bench_tcp_processes():
    code, text = run("bench", "--workers", "2", "--repeats", "1", "--side", "5", "--samples-per-worker", "4",
                     "--transport", "tcp", "--processes", "--verbose", "--no-timing")
    inproc = run("bench", "--workers", "2", "--repeats", "1", "--side", "5", "--samples-per-worker", "4",
                 "--verbose", "--no-timing")
    assert code == 0 and text == inproc[1]


def test_allreduce_self_test():
    code, text = run("allreduce-test", "--world-size", "5", "--length", "37", "--trials", "3")
    assert code == 0
    assert text.splitlines()[1].startswith("5,inproc,3,37,")
    assert text.splitlines()[1].endswith(",1,1")
    code, text = run("allreduce-test", "--world-size", "3", "--transport", "tcp", "--processes")
    assert code == 0


def test_allreduce_self_test_runtime_failure_exit_2(capsys):
    code, _ = run("allreduce-test", "--world-size", "3", "--rtol", "-1")
    assert code == 2
    assert "runtime failure" in capsys.readouterr().err
    assert run("allreduce-test", "--world-size", "2", "--processes")[0] == 1


def test_report_published_table_formats(capsys):
    code, text = run("report", "--paper-table", "1")
    assert code == 0 and text.splitlines()[2] == "4 | 3806 | 3806 | -"
    code, text = run("report", "--paper-table", "5", "--format", "csv")
    assert text.splitlines()[2].startswith("2,3797.0,3726.5,0.9814")
    code, _ = run("report", "--paper-table", "4")
    assert "superlinear" in capsys.readouterr().err
    assert run("report")[0] == 1
    assert run("report", "--paper-table", "7")[0] == 1
    assert run("report", "--input", "/nonexistent.csv")[0] == 1


def test_recipe_job_matches_golden(capsys):
    code, text = run("recipe", "--nodes", "4", "--ranks", "4", "--threads", "12")
    assert code == 0 and text == (GOLDEN / "job_4x12.sh").read_text()
    code, _ = run("recipe", "--nodes", "768", "--ranks", "4", "--threads", "12")
    assert code == 0 and "MixedMpiWarning" in capsys.readouterr().err
    code, text = run("recipe", "--nodes", "768", "--ranks", "4", "--threads", "12",
                     "--host-mpi-dir", "/opt/intel/impi/2019.4.243/intel64")
    assert text == (GOLDEN / "job_4x12_host_mpi.sh").read_text()
    assert capsys.readouterr().err == ""
    assert run("recipe", "--ranks", "4", "--threads", "13")[0] == 1
    assert run("recipe")[0] == 1


def test_recipe_container_and_files(tmp_path):
    code, text = run("recipe", "--kind", "container")
    assert code == 0 and text == (GOLDEN / "container_default.sh").read_text()
    cfg = tmp_path / "job.cfg"
    cfg.write_text("nodes=1\nranks_per_node=1\nthreads_per_rank=1\n")
    out = tmp_path / "job.sh"
    assert run("recipe", "--config", str(cfg), "--out", str(out))[0] == 0
    assert out.read_bytes() == (GOLDEN / "job_minimal.sh").read_bytes()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ringscale", "peak", "--nodes", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "4.1472 TFLOPS" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "ringscale", "nope"], capture_output=True, text=True, check=False)
    assert proc.returncode == 1 and "usage:" in proc.stderr

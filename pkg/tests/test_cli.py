"""Command-line driver behavior and exit codes."""

import contextlib
import io
import pathlib

import pytest

from helpers import corpus_text

from loopforge.cli import main

GOLDEN = pathlib.Path(__file__).parent / "golden"


@pytest.fixture()
def corpus_file(tmp_path):
    p = tmp_path / "volume.f90"
    p.write_text(corpus_text())
    return str(p)


def run_cli(args):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = main(args)
    return rc, out.getvalue(), err.getvalue()


def test_build_embedded_script(corpus_file, tmp_path):
    emitted = tmp_path / "out.cl"
    rc, out, err = run_cli([
        "build", corpus_file, "--emit", str(emitted),
        "--dump-kernel", "--dump-schedule", "--params", "Ne=6912"])
    assert rc == 0, err
    text = emitted.read_text()
    assert "KERNEL void fused_r_s" in text
    assert "kernel fused_r_s" in out  # kernel dump
    assert "enter k" in out  # schedule dump
    assert "flops=" in out  # cost block


def test_build_with_external_script(corpus_file, tmp_path):
    script = tmp_path / "level1.xf"
    from loopforge.bench import transform_recipe
    script.write_text(transform_recipe(1, nq=2))
    rc, out, _err = run_cli(["build", corpus_file, "--script", str(script)])
    assert rc == 0
    assert "GROUP_ID(0)" in out


def test_build_reports_errors(tmp_path):
    bad = tmp_path / "bad.f90"
    bad.write_text("subroutine f(n)\n  integer :: n\n  do i = 2, n\n")
    rc, _out, err = run_cli(["build", str(bad)])
    assert rc == 1
    assert "error" in err


def test_bench_text_and_csv():
    rc, out, _ = run_cli(["bench", "--nq", "2", "--ne", "2", "--level", "4",
                          "--seed", "1", "--report", "csv"])
    assert rc == 0
    header, row = out.strip().splitlines()
    assert header.startswith("level,nq,ne,")
    assert row.startswith("4,2,2,")


def test_check_passes_and_fails_properly(corpus_file):
    rc, out, _ = run_cli(["check", corpus_file, "--levels", "2",
                          "--nq", "2", "--ne", "1", "--seeds", "1"])
    assert rc == 0
    assert "PASS" in out


class TestGoldenDumps:
    def test_level1_kernel_dump(self, staged_nq2):
        from loopforge import kernel as kn
        (k1,) = staged_nq2[1]
        want = (GOLDEN / "kernel_level1_nq2.txt").read_text()
        assert kn.dump_kernel(k1) == want

    def test_level3_schedule_dump(self, staged_nq2):
        from loopforge import schedule as sch
        (k3,) = staged_nq2[3]
        want = (GOLDEN / "schedule_level3_nq2.txt").read_text()
        assert sch.linearize(k3).dump() == want

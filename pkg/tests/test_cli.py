from dataclasses import replace

import pytest

from mfstackelberg import cli
from mfstackelberg.model import dump_spec, scenario_c0, scenario_example


@pytest.fixture
def cfg(tmp_path):
    def write(spec, name="spec.cfg"):
        path = tmp_path / name
        path.write_text(dump_spec(spec))
        return str(path)
    return write


def test_solve_writes_four_tables(cfg, tmp_path):
    out = tmp_path / "out" / "nested"
    assert cli.main(["solve", "--config", cfg(scenario_example()), "--out", str(out), "--grid", "100"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["kappa.csv", "leader.csv", "stage1.csv", "stage2.csv"]
    lines = (out / "stage2.csv").read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "t,phi11,phi21,phi12,phi22"
    assert len(lines) == 2 + 101


def test_pinned_mode_is_watermarked(cfg, tmp_path):
    assert cli.main(["solve", "--config", cfg(scenario_example()), "--out", str(tmp_path), "--grid", "100",
                     "--stage1-mode", "pinned"]) == 0
    assert (tmp_path / "stage1.csv").read_text().splitlines()[2].endswith("pinned(diagnostic)")
    assert not (tmp_path / "leader.csv").exists()


def test_validation_failure_exit_code(cfg, tmp_path, capsys):
    spec = scenario_example()
    bad = replace(spec, stage1=replace(spec.stage1, q1=3.0))
    assert cli.main(["solve", "--config", cfg(bad), "--out", str(tmp_path)]) == cli.EXIT_INVALID
    assert "(C)" in capsys.readouterr().err


def test_restriction_violation_exit_code(cfg, tmp_path):
    spec = scenario_example()
    bad = replace(spec, stage1=replace(spec.stage1, a_bar=0.3))
    assert cli.main(["solve", "--config", cfg(bad), "--out", str(tmp_path)]) == cli.EXIT_INVALID


def test_unknown_flag_rejected(cfg, tmp_path):
    assert cli.main(["solve", "--config", cfg(scenario_c0()), "--bogus", "1"]) == cli.EXIT_INVALID


def test_missing_config(tmp_path):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == cli.EXIT_INVALID


def test_blowup_exit_code(cfg, tmp_path, capsys):
    spec = scenario_example()
    stiff = replace(spec, stage2=replace(spec.stage2, a=200.0), T=10.0)
    assert cli.main(["solve", "--config", cfg(stiff), "--out", str(tmp_path), "--grid", "20"]) == cli.EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "stage-2 phi system" in err and "t=" in err


def test_oracle_report(cfg, tmp_path):
    assert cli.main(["oracle", "--config", cfg(scenario_c0()), "--out", str(tmp_path), "--grid", "200",
                     "--steps", "3"]) == 0
    rows = (tmp_path / "oracle_report.csv").read_text().splitlines()
    assert rows[2].startswith("3,")


def test_verify_c0_exit_zero(cfg, tmp_path):
    code = cli.main(["verify", "--config", cfg(scenario_c0()), "--out", str(tmp_path), "--grid", "400",
                     "--paths", "20000"])
    assert code == 0
    assert (tmp_path / "verify_report.csv").read_text().splitlines()[1] == \
        "check_id,category,status,measured,threshold,detail"


def test_verify_invalid_spec_exit_one(cfg, tmp_path):
    spec = scenario_example()
    bad = replace(spec, stage2=replace(spec.stage2, q2=9.0))
    assert cli.main(["verify", "--config", cfg(bad), "--out", str(tmp_path)]) == cli.EXIT_INVALID

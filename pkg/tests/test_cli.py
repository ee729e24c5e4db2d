import json
import logging

import pytest

import src
from app.services.runner import run as real_run

BELL = {"target": {"generator": "bell"}}


@pytest.fixture(autouse=True)
def _detach_log_handlers():
    yield
    logging.getLogger().handlers.clear()


def last_error(stderr: str) -> dict:
    return json.loads(stderr.strip().splitlines()[-1])


def test_construct_machine_output(write_config, capsys):
    path = write_config(BELL)
    assert src.main(["construct", "--config", str(path), "--format", "machine"]) == src.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] is True
    assert payload["mode"] == "construct"
    assert "timing" not in payload


def test_timing_flag(write_config, capsys):
    path = write_config(BELL)
    src.main(["construct", "--config", str(path), "--format", "machine", "--timing"])
    assert "timing" in json.loads(capsys.readouterr().out)


def test_human_output(write_config, capsys):
    path = write_config({**BELL, "noise": {"name": "white", "p": 0.2}})
    assert src.main(["verify", "--config", str(path)]) == src.EXIT_OK
    out = capsys.readouterr().out
    assert "passed: yes" in out
    assert "exact_bound" in out


def test_subcommand_overrides_config_mode(write_config, capsys):
    path = write_config({**BELL, "mode": "construct", "seed": 5})
    assert src.main(["certify", "--config", str(path), "--format", "machine"]) == src.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["mode"] == "certify"
    assert payload["estimate"]["samplesPerTest"] == 1199


def test_out_writes_file(write_config, tmp_path, capsys):
    path = write_config(BELL)
    out = tmp_path / "report.json"
    assert src.main(["construct", "--config", str(path), "--format", "machine", "--out", str(out)]) == src.EXIT_OK
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["passed"] is True


def test_malformed_config_exits_with_json_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"target": ', encoding="utf-8")
    assert src.main(["construct", "--config", str(path)]) == src.EXIT_ERROR
    captured = capsys.readouterr()
    assert captured.out == ""
    error = last_error(captured.err)["error"]
    assert error["code"] == "parse_error"
    assert error["line"] == 1


def test_invalid_config_reports_field(write_config, capsys):
    path = write_config({"target": {"generator": "bell"}, "epsilon": 2})
    assert src.main(["construct", "--config", str(path)]) == src.EXIT_ERROR
    error = last_error(capsys.readouterr().err)["error"]
    assert error["code"] == "validation_error"
    assert error["field"] == "epsilon"


def test_certify_without_seed_is_rejected(write_config, capsys):
    path = write_config(BELL)
    assert src.main(["certify", "--config", str(path)]) == src.EXIT_ERROR
    assert last_error(capsys.readouterr().err)["error"]["code"] == "validation_error"


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        src.main(["construct"])
    assert info.value.code == src.EXIT_ERROR
    assert last_error(capsys.readouterr().err)["error"]["code"] == "usage_error"


def test_failed_checks_exit_code(write_config, monkeypatch, capsys):
    def failing_run(config, base_dir=None):
        report = real_run(config, base_dir)
        return report.model_copy(update={"passed": False, "checks": {**report.checks, "commutator": False}})

    monkeypatch.setattr(src, "run", failing_run)
    path = write_config(BELL)
    assert src.main(["construct", "--config", str(path)]) == src.EXIT_CHECKS_FAILED
    assert "FAIL" in capsys.readouterr().out

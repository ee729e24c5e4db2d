import json

import pytest

from app.schemas.reports import Report
from app.services.config_io import parse_config
from app.services.errors import ConfigValidationError, DimensionCapError
from app.services.runner import emit_report, parse_report, run


def make_config(**document):
    return parse_config(json.dumps(document))


def test_construct_bell():
    report = run(make_config(mode="construct", target={"generator": "bell"}))
    assert report.passed
    assert report.residual["PQ_minus_psi"] <= 1e-12
    assert report.projector_ranks == {"P": 2, "Q": 2}
    assert report.schmidt_coefficients == pytest.approx([0.5, 0.5])
    assert report.timing and set(report.timing) == {"construct", "verify"}


def test_construct_ghz_family():
    report = run(make_config(mode="construct", target={"generator": "ghz", "parties": 3}))
    assert report.passed
    assert set(report.projector_ranks) == {"00", "01", "10", "11"}
    assert report.residual["leaf_count"] == 4.0


def test_verify_noisy_bell():
    report = run(make_config(mode="verify", target={"generator": "bell"}, noise={"name": "white", "p": 0.2}))
    assert report.passed
    assert report.bounds["exact_bound"] == pytest.approx(0.8)
    assert report.bounds["fidelity_sq"] == pytest.approx(0.85)
    assert report.bounds["pass_P"] == pytest.approx(0.9)
    assert report.checks["bound_below_fidelity"]


def test_verify_with_local_channel_on_first_factor():
    report = run(
        make_config(
            mode="verify",
            target={"generator": "bell"},
            noise={"name": "depolarizing", "p": 0.2, "factor": 0},
        )
    )
    assert report.bounds["exact_bound"] == pytest.approx(0.8)


def test_certify_bell_with_depolarizing():
    report = run(
        make_config(mode="certify", target={"generator": "bell"}, noise={"name": "depolarizing", "p": 0.2}, seed=42)
    )
    assert report.passed
    assert report.estimate is not None
    assert report.estimate.samples_per_test == 1199
    assert 0.6 < report.bounds["confidence_adjusted_bound"] < 0.85


def test_certify_is_deterministic():
    config = make_config(mode="certify", target={"generator": "ghz", "parties": 3}, noise={"name": "white", "p": 0.1}, seed=8)
    assert emit_report(run(config), "machine") == emit_report(run(config), "machine")


def test_channel_bound_identity():
    report = run(make_config(mode="channel-bound", target={"generator": "bell"}, noise={"name": "identity"}, seed=1))
    assert report.passed
    assert report.bounds["bound"] == pytest.approx(1.0)
    assert report.bounds["adjusted_bound"] == pytest.approx(0.9)
    assert report.checks["bound_below_ent_fidelity"]


def test_channel_bound_from_kraus_file(tmp_path):
    kraus = {"kraus": [[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]]}
    (tmp_path / "flip.json").write_text(json.dumps(kraus), encoding="utf-8")
    config = make_config(mode="channel-bound", target={"generator": "bell"}, noise={"krausFile": "flip.json"}, seed=1)
    report = run(config, base_dir=tmp_path)
    assert report.channel is not None
    assert report.channel.ent_fidelity_sq == pytest.approx(0.0)
    assert report.bounds["bound"] == pytest.approx(0.0)


def test_white_noise_is_not_a_channel():
    with pytest.raises(ConfigValidationError):
        make_config(mode="channel-bound", target={"generator": "bell"}, noise={"name": "white", "p": 0.1}, seed=1)


def test_dimension_cap(monkeypatch):
    monkeypatch.setenv("SEPSTAB_DIM_CAP", "8")
    with pytest.raises(DimensionCapError):
        run(make_config(mode="construct", target={"generator": "ghz", "parties": 4}))


def test_machine_report_round_trip():
    report = run(make_config(mode="verify", target={"generator": "bell"}, noise={"name": "white", "p": 0.2}))
    text = emit_report(report, "machine")
    payload = json.loads(text)
    assert payload["schemaVersion"] == 1
    assert "PQ_minus_psi" in payload["residual"]
    assert "timing" not in payload
    assert emit_report(parse_report(text), "machine") == text


def test_machine_report_timing_on_request():
    report = run(make_config(mode="construct", target={"generator": "bell"}))
    assert "timing" in json.loads(emit_report(report, "machine", include_timing=True))


def test_human_report_lists_checks():
    report = run(make_config(mode="construct", target={"generator": "bell"}))
    text = emit_report(report, "human")
    assert "passed: yes" in text
    assert "PQ_minus_psi" in text
    assert "projector  rank" in text
    assert "schmidt coefficients: 0.500000000000, 0.500000000000" in text


def test_human_report_with_empty_residual_table():
    report = Report(mode="construct", config=make_config(target={"generator": "bell"}), passed=True)
    lines = emit_report(report, "human").splitlines()
    assert lines[-1] == "check  value  status"

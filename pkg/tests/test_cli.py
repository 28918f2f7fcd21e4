"""Command-line interface: config parsing, exit codes, pipeline, manifest."""

import hashlib
import json

import numpy as np
import pytest

from bernlab.cli import (
    ConfigError,
    build_config,
    main,
    parse_config_text,
    read_frequency_csv,
)


def run_cli(*argv):
    return main(list(argv))


def test_parse_config_text():
    entries = parse_config_text(
        "# comment\nn = 32\nobstacle = 0.0 0.0 0.1\n\nupsilon = 0.8\n"
    )
    assert entries == {"n": "32", "obstacle": "0.0 0.0 0.1", "upsilon": "0.8"}
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("n = 32\nn = 64\n")
    with pytest.raises(ConfigError):
        parse_config_text("just some words\n")


def test_build_config_defaults_and_types():
    cfg = build_config({}, {"n": "64", "upsilon": "0.8"})
    assert cfg.n == 64
    assert cfg.upsilon == 0.8
    assert cfg.d == 2
    assert cfg.freq_radii == (0.25, 0.35, 0.45, 0.55, 0.65, 0.75)


def test_unknown_key_rejected(capsys):
    with pytest.raises(ConfigError, match="datumm"):
        build_config({"datumm": "halfplane"}, {})


def test_validator_bounds():
    with pytest.raises(ConfigError, match="upsilon"):
        build_config({}, {"upsilon": "0.3"})
    with pytest.raises(ConfigError, match="upsilon"):
        build_config({}, {"upsilon": "1.0"})
    with pytest.raises(ConfigError):
        build_config({}, {"n": "4"})


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("bogus_key = 1\n")
    assert run_cli("solve", "--config", str(cfg)) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path, capsys):
    assert run_cli("solve", "--config", str(tmp_path / "absent.cfg")) == 2


def test_solve_halfplane(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli("solve", "--n", "32", "--output_dir", str(out))
    assert code == 0
    assert (out / "u.csv").exists()
    report = json.loads(capsys.readouterr().out)
    assert report["energy"] > 0
    assert report["contact_columns"] > 0
    assert report["residual"] <= 1e-6


def test_numerical_failure_exit_code(tmp_path, capsys):
    """A boundary scale below the invertibility threshold makes the graph
    transform fail, which is a numerical (exit 3) condition."""
    out = tmp_path / "out"
    code = run_cli(
        "hodograph", "--n", "32", "--datum_scale", "0.4",
        "--output_dir", str(out),
    )
    assert code == 3


def test_frequency_csv_round_trip(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli(
        "frequency", "--n", "32", "--datum", "oracle",
        "--datum_kind", "sin-half", "--datum_degree", "1.5",
        "--freq_radii", "0.3,0.5,0.7", "--output_dir", str(out),
    )
    assert code == 0
    scan = read_frequency_csv(out / "frequency.csv")
    assert list(scan["radii"]) == [0.3, 0.5, 0.7]
    assert np.allclose(scan["N"], 1.5, atol=0.02)
    with pytest.raises(ConfigError):
        read_frequency_csv(__file__)


def test_determinism(tmp_path):
    """Identical config and seed produce byte-identical artifacts."""
    digests = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = run_cli(
            "solve", "--n", "32", "--seed", "7", "--output_dir", str(out)
        )
        assert code == 0
        digests.append(hashlib.sha256((out / "u.csv").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_pipeline_flat(tmp_path, capsys):
    """The flat configuration runs end to end; the frequency and blow-up
    stages report the degenerate (zero linearization) outcome."""
    out = tmp_path / "out"
    code = run_cli("pipeline", "--n", "64", "--j_max", "3",
                   "--output_dir", str(out))
    assert code == 0
    report = json.loads((out / "pipeline.json").read_text())
    status = {s["name"]: s["status"] for s in report["stages"]}
    assert status["solve"] == "ok"
    assert status["hodograph"] == "ok"
    assert status["signorini"] == "ok"
    assert status["frequency"] == "degenerate"
    assert status["blowup"] == "degenerate"
    assert status["whitney"] == "ok"
    files = {e["file"] for e in report["manifest"]}
    assert "u.csv" in files and "w_thin.csv" in files

    # the report subcommand audits the manifest in place
    assert run_cli("report", "--output_dir", str(out)) == 0
    # tampering with an artifact must fail the audit with a config error
    (out / "u.csv").write_text("tampered\n")
    assert run_cli("report", "--output_dir", str(out)) == 2


def test_report_without_pipeline(tmp_path):
    assert run_cli("report", "--output_dir", str(tmp_path / "none")) == 2

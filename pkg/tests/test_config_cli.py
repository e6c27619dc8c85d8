import json
import shutil
from pathlib import Path

import pytest

from bhlab.cli import EXIT_CONFIG, EXIT_PASS, main
from bhlab.config import load_config, parse_config
from bhlab.errors import ConfigError
from bhlab.runner import emit_plots, execute, serialize

ACCEPT = Path(__file__).resolve().parents[1] / "configs" / "acceptance"

QUOTIENT = """
experiment-kind = "quotient"
[domain]
graph = "sawtooth"
lipschitz = 0.05
[grid]
h = ["1/32"]
[parameters]
{params}
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_missing_gamma_is_a_config_error(tmp_path, capsys):
    p = _write(tmp_path, QUOTIENT.format(params="m = 0.05"))
    with pytest.raises(ConfigError, match="gamma"):
        load_config(p)
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "gamma" in capsys.readouterr().err


def test_snake_case_keys_rejected():
    with pytest.raises(ConfigError, match="kebab"):
        parse_config({"experiment-kind": "kappa", "parameters": {"eta_list": [0.0]}})


def test_fraction_strings_and_numbers():
    cfg = parse_config({"experiment-kind": "growth", "domain": {"graph": "flat"}, "grid": {"h": ["1/32", 0.125]}})
    assert cfg.grid.h == (1 / 32, 0.125)
    with pytest.raises(ConfigError):
        parse_config({"experiment-kind": "growth", "domain": {"graph": "flat"}, "grid": {"h": "one"}})


@pytest.mark.parametrize("raw", [
    {},
    {"experiment-kind": "nonsense"},
    {"experiment-kind": "kappa", "seed": -1, "parameters": {"eta-list": [0.0]}},
    {"experiment-kind": "growth"},
    {"experiment-kind": "growth", "domain": {"graph": "spiral"}},
    {"experiment-kind": "growth", "domain": {"graph": "tilted", "n": 2}},
    {"experiment-kind": "growth", "domain": {"graph": "flat"}, "grid": {"h": [0.75]}},
    {"experiment-kind": "quotient", "domain": {"graph": "flat"}, "parameters": {"gamma": 1.5}},
    {"experiment-kind": "growth", "domain": {"graph": "flat"}, "operator": {"kind": "constant"}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    assert main(["run", str(tmp_path / "absent.toml")]) == EXIT_CONFIG


def test_every_shipped_config_parses():
    paths = sorted(ACCEPT.glob("*.toml"))
    assert len(paths) == 12
    for p in paths:
        assert load_config(p).name == p.stem


def test_run_writes_report_and_series(tmp_path, capsys):
    cfg = shutil.copy(ACCEPT / "09_decompose.toml", tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == EXIT_PASS
    target = tmp_path / "out" / "09_decompose"
    report = json.loads((target / "report.json").read_text())
    assert report["passed"] and report["experiment-kind"] == "decompose"
    for s in report["series"]:
        assert (target / s["file"]).exists()
    assert "PASS" in capsys.readouterr().out
    assert "runtime_seconds" in json.loads((target / "timing.json").read_text())


def test_reports_are_byte_identical():
    cfg = load_config(ACCEPT / "01_distance.toml")
    assert serialize(execute(cfg)[0]) == serialize(execute(cfg)[0])


def test_cli_rerun_byte_identical(tmp_path):
    cfg = shutil.copy(ACCEPT / "09_decompose.toml", tmp_path)
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "09_decompose" / "report.json").read_bytes()
    b = (tmp_path / "b" / "09_decompose" / "report.json").read_bytes()
    assert a == b


def test_thread_cap(tmp_path, monkeypatch):
    cfg = shutil.copy(ACCEPT / "09_decompose.toml", tmp_path)
    monkeypatch.setenv("BHLAB_THREADS", "many")
    assert main(["run", str(cfg), "--jobs", "2"]) == EXIT_CONFIG
    monkeypatch.setenv("BHLAB_THREADS", "1")
    assert main(["run", str(cfg), "--jobs", "4", "--out", str(tmp_path / "o")]) == EXIT_PASS


def test_kappa_command(tmp_path, capsys):
    code = main(["kappa", "--steps", "3", "--mesh-h", "0.0625", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code in (0, 1)
    assert out.count("eta =") == 3 and "Richardson" in out
    report = json.loads((tmp_path / "report.json").read_text())
    mus = [row["mu"] for row in report["measured"]["curve"]]
    assert mus == sorted(mus)


def test_kappa_bad_range():
    assert main(["kappa", "--eta-min", "0.2", "--eta-max", "0.1"]) == EXIT_CONFIG


def test_plots_from_report(tmp_path, capsys):
    cfg = shutil.copy(ACCEPT / "09_decompose.toml", tmp_path)
    main(["run", str(cfg)])
    report = tmp_path / "09_decompose" / "report.json"
    capsys.readouterr()
    assert main(["plots", str(report)]) == EXIT_PASS
    scripts = [Path(line) for line in capsys.readouterr().out.splitlines() if line.endswith(".py")]
    assert scripts and all(p.exists() for p in scripts)
    for p in scripts:
        compile(p.read_text(), str(p), "exec")


def test_plots_for_report_without_series(tmp_path):
    p = tmp_path / "report.json"
    p.write_text(json.dumps({"name": "x", "series": []}))
    scripts, notes = emit_plots(p)
    assert scripts == [] and notes


def test_plots_missing_report(tmp_path):
    assert main(["plots", str(tmp_path / "nothing.json")]) == EXIT_CONFIG

import json
import subprocess
import sys

import pytest

from atdipole.cli import EXIT_CODES, build_parser, main

SUBCOMMANDS = [
    "qdefect", "radial-me", "reduced-me", "simulate", "fit", "fit-waist",
    "simulate-image", "pipeline", "compare-models",
]

FAST = "quadrature.nx = 16\nquadrature.ny = 16\nsweep.step_MHz = 0.5\n"


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST)
    return path


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help(sub, capsys):
    with pytest.raises(SystemExit) as info:
        main([sub, "--help"])
    assert info.value.code == 0
    assert "--config" in capsys.readouterr().out


def test_parser_lists_all_subcommands():
    text = build_parser().format_help()
    for sub in SUBCOMMANDS:
        assert sub in text


def test_qdefect(capsys):
    assert main(["qdefect", "44D5/2", "5P3/2"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["energy_source"] == "quantum_defect"
    assert rows[1]["energy_source"] == "anchor"
    assert rows[0]["n_star"] == pytest.approx(44 - 1.34614, abs=1e-4)


def test_reduced_me(capsys):
    assert main(["reduced-me", "30D5/2", "--model", "MMP"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["model"] == "MMP" and rows[0]["lower"] == "5P3/2"


def test_simulate_then_fit(tmp_path, fast_config, capsys):
    trace = tmp_path / "t.csv"
    assert main(["simulate", "--config", str(fast_config), "--rabi-MHz", "25", "--noise", "0", "--out", str(trace)]) == 0
    out = tmp_path / "fit.json"
    assert main(["fit", str(trace), "--config", str(fast_config), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["rabi_max_MHz"] == pytest.approx(25.0, rel=1e-5)


def test_simulate_image_then_fit_waist(tmp_path, capsys):
    img = tmp_path / "img.pgm"
    assert main(["simulate-image", "--pixels", "61", "--pixel-um", "25", "--noise", "0.005", "--out", str(img)]) == 0
    assert main(["fit-waist", str(img)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["w_maj_um"] == pytest.approx(240, abs=3)
    assert data["w_min_um"] == pytest.approx(172, abs=3)


def test_pipeline_and_compare(tmp_path, capsys):
    cfg = tmp_path / "p.cfg"
    cfg.write_text(FAST + "pipeline.n_list = 22\n")
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["estimates"][0]["n"] == 22
    assert (out / "ledger.jsonl").exists()
    assert main(["compare-models", str(out / "dipoles.json")]) == 0
    cmp = json.loads(capsys.readouterr().out)
    assert set(cmp["chi2"]) == {"NCA", "MMP"}


def test_missing_file_exit_code(tmp_path, capsys):
    code = main(["fit", str(tmp_path / "nope.csv")])
    assert code == EXIT_CODES["file-not-found"] == 3
    assert _error(capsys)["error"] == "file-not-found"


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("detuning_MHz,value\n0,1\n")
    assert main(["fit", str(bad)]) == EXIT_CODES["parse-error"]
    err = _error(capsys)
    assert err["error"] == "parse-error" and "bad.csv:1" in err["message"]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("beam.nope = 1\n")
    assert main(["qdefect", "30D5/2", "--config", str(cfg)]) == EXIT_CODES["configuration-error"]


def test_domain_error_exit_code(capsys):
    assert main(["qdefect", "5P5/2"]) == EXIT_CODES["domain-error"]


def test_selection_rule_exit_code(capsys):
    assert main(["reduced-me", "30P3/2"]) == EXIT_CODES["selection-rule"]
    assert _error(capsys)["error"] == "selection-rule"


def test_no_signal_exit_code(tmp_path, capsys):
    flat = tmp_path / "flat.csv"
    flat.write_text("# detuning_unit = MHz\ndetuning_MHz,value\n" + "".join(f"{d},1.0\n" for d in range(-20, 21)))
    assert main(["fit", str(flat), "--two-level", str(flat), "--mode", "broadened"]) == EXIT_CODES["no-signal"]


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--bogus"])
    assert info.value.code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "atdipole", "qdefect", "30D5/2"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)[0]["state"] == "30D5/2"

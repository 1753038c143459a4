import subprocess
import sys

import pytest

from collabsod.cli import build_parser, main


def run(*args):
    return main([str(a) for a in args])


def test_parser_lists_all_commands():
    text = build_parser().format_help()
    for cmd in ("train", "eval", "infer", "gradcheck", "export-pr", "synth"):
        assert cmd in text


def test_cli_end_to_end(tmp_path, capsys, monkeypatch):
    data = tmp_path / "data"
    assert run("synth", "--out", data, "--n", 4, "--side", 32) == 0
    assert run("synth", "--out", data, "--n", 2, "--split", "test", "--side", 32, "--no-depth") == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"scale = tiny\ninput_side = 32\nepochs = 1\ntrain_data = {data}\n"
                   f"out_dir = {tmp_path / 'run'}\n")
    monkeypatch.setenv("COLLABSOD_LR", "0.01")
    assert run("train", "--config", cfg, "--seed", 3) == 0
    ckpt = tmp_path / "run" / "checkpoint.safetensors"
    assert ckpt.is_file()

    assert run("eval", "--checkpoint", ckpt, "--data", data, "--out", tmp_path / "ev") == 0
    assert "s_measure" in capsys.readouterr().out
    assert (tmp_path / "ev" / "metrics_pr.png").is_file()

    img = data / "test" / "RGB" / "0000.png"
    assert run("infer", "--checkpoint", ckpt, "--image", img, "--out", tmp_path / "p.png") == 0
    assert (tmp_path / "p.png").is_file()

    assert run("export-pr", "--report", tmp_path / "ev" / "metrics.txt",
               "--csv", tmp_path / "pr.csv", "--plot", tmp_path / "pr.png") == 0
    assert len((tmp_path / "pr.csv").read_text().splitlines()) == 257


def test_cli_gradcheck(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("scale = tiny\ninput_side = 16\nprecision = float64\n")
    assert run("gradcheck", "--config", cfg, "--samples", 10) == 0
    assert "max relative error" in capsys.readouterr().out


def test_cli_errors_exit_2(tmp_path, capsys):
    assert run("train", "--config", tmp_path / "missing.cfg") == 2
    assert "error:" in capsys.readouterr().err
    assert run("infer", "--checkpoint", tmp_path / "none", "--image", "x", "--out", "y") == 2
    with pytest.raises(SystemExit):
        run("bogus")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "collabsod", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "export-pr" in res.stdout

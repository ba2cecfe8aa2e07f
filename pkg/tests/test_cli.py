"""CLI surface: exit codes, stage gating, locking, and resumability."""

import json

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from script2board import pipeline
from script2board.cli import main

from conftest import DATA

MALFORMED = """INT. ROOM - DAY

JESSE
Hi there.

)( ????
"""


@pytest.fixture()
def runner():
    return CliRunner()


def output(result):
    err = result.stderr if result.stderr_bytes is not None else ""
    return result.output + err


# ---------------------------------------------------------------------------
# parse

def test_parse_writes_ir(runner, tmp_path):
    ws = tmp_path / "ws"
    result = runner.invoke(main, ["parse", str(DATA / "two_scene.txt"),
                                  "-w", str(ws)])
    assert result.exit_code == 0, output(result)
    payload = json.loads((ws / "ir" / "script.json").read_text())
    assert payload["dialogues"]
    assert "characters" in output(result)


def test_parse_missing_file_exit_3(runner, tmp_path):
    missing = tmp_path / "nope.txt"
    result = runner.invoke(main, ["parse", str(missing), "-w",
                                  str(tmp_path / "ws")])
    assert result.exit_code == 3
    assert str(missing) in output(result)


def test_parse_strict_malformed_exit_2_names_line(runner, tmp_path):
    script = tmp_path / "bad.txt"
    script.write_text(MALFORMED, encoding="utf-8")
    result = runner.invoke(main, ["parse", str(script), "--strict",
                                  "-w", str(tmp_path / "ws")])
    assert result.exit_code == 2
    assert "line 6" in output(result)


def test_parse_lenient_accepts_malformed(runner, tmp_path):
    script = tmp_path / "bad.txt"
    script.write_text(MALFORMED, encoding="utf-8")
    result = runner.invoke(main, ["parse", str(script),
                                  "-w", str(tmp_path / "ws")])
    assert result.exit_code == 0, output(result)


# ---------------------------------------------------------------------------
# stage gating + locking

def test_stale_predecessor_exit_2(runner, tmp_path):
    ws = tmp_path / "ws"
    args = ["-w", str(ws), "--mock", "--seed", "5"]
    assert runner.invoke(main, ["parse", str(DATA / "two_scene.txt"),
                                "-w", str(ws)]).exit_code == 0
    assert runner.invoke(main, ["direct"] + args).exit_code == 0

    chars = ws / "db" / "characters.json"
    records = json.loads(chars.read_text())
    records[0]["name"] = "Tampered"
    chars.write_text(json.dumps(records))

    result = runner.invoke(main, ["shoot"] + args)
    assert result.exit_code == 2
    assert "direct" in output(result) and "rerun" in output(result)


def test_missing_predecessor_exit_2(runner, tmp_path):
    result = runner.invoke(main, ["board", "-w", str(tmp_path / "ws"),
                                  "--mock"])
    assert result.exit_code == 2
    assert "parse" in output(result)


def test_workspace_locked_exit_2(runner, tmp_path):
    ws = tmp_path / "ws"
    ws.mkdir()
    (ws / ".lock").touch()
    result = runner.invoke(main, ["parse", str(DATA / "two_scene.txt"),
                                  "-w", str(ws)])
    assert result.exit_code == 2
    assert "lock" in output(result).lower()
    assert (ws / ".lock").exists()        # a failed acquire never removes it


def test_lock_released_after_run(runner, tmp_path):
    ws = tmp_path / "ws"
    assert runner.invoke(main, ["parse", str(DATA / "two_scene.txt"),
                                "-w", str(ws)]).exit_code == 0
    assert not (ws / ".lock").exists()


# ---------------------------------------------------------------------------
# end-to-end run + resume

def test_run_resumes_without_rerunning_stages(runner, tmp_path, monkeypatch):
    ws = tmp_path / "ws"
    args = ["-w", str(ws), "--mock", "--seed", "5"]
    assert runner.invoke(main, ["parse", str(DATA / "two_scene.txt"),
                                "-w", str(ws)]).exit_code == 0
    assert runner.invoke(main, ["direct"] + args).exit_code == 0
    assert runner.invoke(main, ["shoot"] + args).exit_code == 0

    def forbid(name):
        def stub(*a, **k):
            raise AssertionError(f"{name} re-ran on resume")
        return stub

    for name in ("stage_parse", "stage_direct", "stage_shoot"):
        monkeypatch.setattr(pipeline, name, forbid(name))

    result = runner.invoke(main, ["run", str(DATA / "two_scene.txt")] + args,
                           catch_exceptions=False)
    assert result.exit_code == 0, output(result)
    assert (ws / "board" / "storyboard.json").exists()
    assert (ws / "eval" / "report.json").exists()
    assert "workspace digest:" in output(result)


def test_run_is_idempotent(runner, tmp_path):
    ws = tmp_path / "ws"
    args = ["run", str(DATA / "two_scene.txt"), "-w", str(ws), "--mock",
            "--seed", "5"]
    first = runner.invoke(main, args)
    second = runner.invoke(main, args)
    assert first.exit_code == second.exit_code == 0
    assert output(first).strip() == output(second).strip()


# ---------------------------------------------------------------------------
# fit-niqe

def test_fit_niqe_writes_model(runner, tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    rng = np.random.default_rng(0)
    for i in range(10):
        base = rng.uniform(60, 200, (3, 3))
        img = np.kron(base, np.ones((64, 64)))
        Image.fromarray(img.astype(np.uint8)).save(corpus / f"{i}.png")
    ws = tmp_path / "ws"
    result = runner.invoke(main, ["fit-niqe", str(corpus), "-w", str(ws)])
    assert result.exit_code == 0, output(result)
    assert (ws / "models" / "niqe_pristine.json").exists()
    assert "corpus digest" in output(result)


def test_fit_niqe_missing_dir_exit_3(runner, tmp_path):
    result = runner.invoke(main, ["fit-niqe", str(tmp_path / "nope"),
                                  "-w", str(tmp_path / "ws")])
    assert result.exit_code == 3

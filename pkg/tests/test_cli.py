import json
import subprocess
import sys

import numpy as np
import pytest

from wavefield.cli import main
from wavefield.formats import read_recording

SMALL = """[lattice]
width = 24
height = 24
conduction_velocity = 0.2

[sim]
steps = 30
seed = 5

[decode]
step = 20
mode = single

[bench]
n_protocols = 20
seeds = 0,1

[task]
alphabet = 6,12;12,6;18,12

[ssm]
nodes = 16
steps = 20
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "small.ini").write_text(SMALL)
    (tmp_path / "proto.csv").write_text("x,y,onset,duration,amplitude\n12,12,5,1,1.5\n")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_writes_recording_and_manifest(workdir):
    out = workdir / "sim"
    assert run("simulate", workdir / "proto.csv", "--config", workdir / "small.ini", "--out", out) == 0
    rec = read_recording(out / "recording.f32")
    assert rec.frames.shape == (30, 24, 24)
    manifest = (out / "manifest.ini").read_text()
    assert "command = simulate" in manifest and "seed = 5" in manifest
    assert (out / "protocol.csv").exists()
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("event,x,y,onset")


def test_seed_flag_changes_recording(workdir):
    run("simulate", workdir / "proto.csv", "--config", workdir / "small.ini", "--out", workdir / "a")
    run("simulate", workdir / "proto.csv", "--config", workdir / "small.ini", "--seed", 6,
        "--out", workdir / "b")
    assert (workdir / "a/recording.f32").read_bytes() != (workdir / "b/recording.f32").read_bytes()
    assert "seed = 6" in (workdir / "b/manifest.ini").read_text()


def test_csv_format(workdir):
    out = workdir / "csv"
    run("simulate", workdir / "proto.csv", "--config", workdir / "small.ini", "--format", "csv_frames",
        "--out", out)
    assert (out / "recording.csv").read_text().startswith("step,unit_x")


def test_decode_recovers_stimulus(workdir):
    run("simulate", workdir / "proto.csv", "--config", workdir / "small.ini", "--out", workdir / "s")
    assert run("decode", workdir / "s/recording.f32", "--config", workdir / "small.ini",
               "--out", workdir / "d") == 0
    rows = (workdir / "d/events.csv").read_text().splitlines()
    x, y, onset, _ = (float(v) for v in rows[1].split(","))
    assert abs(x - 12) <= 1 and abs(y - 12) <= 1 and abs(onset - 5) <= 2


@pytest.mark.parametrize("command,files", [
    ("spectrum", ["spectrum.csv", "spectrum.png"]),
    ("ssm-run", ["outputs.csv", "spacetime.png"]),
    ("attn-run", ["encoding.csv", "attention.csv"]),
    ("bench", ["report.json", "report.csv", "report.png"]),
])
def test_commands_write_outputs(workdir, command, files):
    out = workdir / command
    assert run(command, "--config", workdir / "small.ini", "--out", out) == 0
    for name in files + ["manifest.ini"]:
        assert (out / name).stat().st_size > 0


def test_spectrum_residuals_small(workdir):
    run("spectrum", "--config", workdir / "small.ini", "--out", workdir / "sp")
    rows = [r.split(",") for r in (workdir / "sp/spectrum.csv").read_text().splitlines()[1:]]
    assert len(rows) == 16 and max(float(r[4]) for r in rows) < 1e-9


def test_render_frames(workdir):
    run("simulate", workdir / "proto.csv", "--config", workdir / "small.ini", "--out", workdir / "s")
    assert run("render", workdir / "s/recording.f32", "--out", workdir / "r") == 0
    assert len(list((workdir / "r/frames").glob("*.pgm"))) == 30


def test_bench_report_json(workdir):
    run("bench", "--config", workdir / "small.ini", "--out", workdir / "b")
    data = json.loads((workdir / "b/report.json").read_text())
    encoders = [r["encoder"] for r in data["reports"]]
    assert {"wave", "ssm", "attention"} <= set(encoders)


def test_failure_emits_json_error(workdir, capsys):
    bad = workdir / "bad.csv"
    bad.write_text("1,2,-3,1,1\n")
    assert run("simulate", bad, "--out", workdir / "x") != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ParseError" and err["line"] == 1 and err["field"] == "onset"


def test_bad_config_reports_location(workdir, capsys):
    cfg = workdir / "broken.ini"
    cfg.write_text("[lattice]\nwidth = many\n")
    assert run("spectrum", "--config", cfg, "--out", workdir / "y") != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["line"] == 2 and err["field"] == "lattice.width"


def test_console_script_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "wavefield.cli", "spectrum", "--out",
                           str(workdir / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (workdir / "m/spectrum.csv").exists()

import json

import numpy as np
import pytest

from conftest import FIXTURES
from robopath.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def compile_args(scene, out, base="B", **extra):
    argv = ["compile", "--scene", str(scene), "--base", base, "--out", str(out)]
    for key, value in extra.items():
        argv.append(f"--{key.replace('_', '-')}")
        if value is not None:
            argv.append(str(value))
    return argv


# ---------------------------------------------------------------------------
# compile
# ---------------------------------------------------------------------------


def test_compile_butt_joint_matches_golden(tmp_path, capsys):
    out = tmp_path / "butt.prog"
    code, _, err = run(
        capsys,
        *compile_args(FIXTURES / "butt_joint.scene.json", out, interp_dt=0.5),
    )
    assert code == 0, err
    assert out.read_bytes() == (FIXTURES / "butt_joint.prog").read_bytes()
    manifest = json.loads((tmp_path / "butt.prog.manifest.json").read_text())
    assert manifest["subcommand"] == "compile"
    assert manifest["options"]["base"] == "B"
    assert manifest["options"]["interp_dt_s"] == 0.5


def test_compile_profile_matches_golden(tmp_path, capsys):
    out = tmp_path / "profile.prog"
    code, _, _ = run(capsys, *compile_args(FIXTURES / "profile.scene.json", out))
    assert code == 0
    assert out.read_bytes() == (FIXTURES / "profile.prog").read_bytes()


def test_compile_missing_base_frame_exits_1(tmp_path, capsys):
    out = tmp_path / "x.prog"
    code, _, err = run(
        capsys, *compile_args(FIXTURES / "butt_joint.scene.json", out, base="nope")
    )
    assert code == 1
    assert err.startswith("error:")
    assert "nope" in err
    assert not out.exists()


def test_unwritable_output_exits_1(capsys):
    code, _, err = run(
        capsys,
        *compile_args(FIXTURES / "profile.scene.json", "/nonexistent_dir/x.prog"),
    )
    assert code == 1
    assert err.startswith("error:")


def test_compile_invalid_scene_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"units": "mm"')
    code, _, err = run(capsys, *compile_args(bad, tmp_path / "x.prog"))
    assert code == 1
    assert err.startswith("error:")


def test_compile_strict_workspace_violation_exits_2(tmp_path, capsys):
    scene = json.loads((FIXTURES / "straight_seam.scene.json").read_text())
    scene["workspace"] = {"min": [0.0, 0.0, 0.0], "max": [50.0, 50.0, 50.0]}
    scene_file = tmp_path / "cramped.json"
    scene_file.write_text(json.dumps(scene))
    out = tmp_path / "cramped.prog"

    code, _, err = run(capsys, *compile_args(scene_file, out))
    assert code == 0  # lint is advisory by default
    assert "lint:" in err and "t2" in err

    code, _, err = run(capsys, *compile_args(scene_file, out, strict=None))
    assert code == 2
    assert "lint failure" in err


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_seam_zero_offset(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code, stdout, _ = run(
        capsys,
        "simulate",
        "--program", str(FIXTURES / "straight_seam.prog"),
        "--scenario", "seam",
        "--out", str(out),
    )
    assert code == 0
    data = np.genfromtxt(out, delimiter=",", skip_header=1, usecols=range(8))
    assert np.all(data[:, 4:8] == 0.0)
    assert "final correction y=0.0000" in stdout


def test_simulate_seam_offset_converges(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code, stdout, _ = run(
        capsys,
        "simulate",
        "--program", str(FIXTURES / "straight_seam.prog"),
        "--scenario", "seam",
        "--offset-y", "1.0",
        "--gain-y", "1.0",
        "--out", str(out),
    )
    assert code == 0
    final = float(stdout.split("y=")[1].split(" ")[0])
    assert abs(final - 1.0) <= 0.01


def test_simulate_seam_lost_exits_3_with_partial_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code, stdout, _ = run(
        capsys,
        "simulate",
        "--program", str(FIXTURES / "straight_seam.prog"),
        "--scenario", "seam",
        "--offset-y", "75.0",
        "--out", str(out),
    )
    assert code == 3
    assert "ABORTED" in stdout
    assert out.exists()
    assert out.read_text().strip().splitlines()[-1].endswith("ABORTED")


@pytest.mark.parametrize("controller", ["pi", "fuzzy"])
def test_simulate_force_steady_state(tmp_path, capsys, controller):
    out = tmp_path / "trace.csv"
    code, stdout, _ = run(
        capsys,
        "simulate",
        "--program", str(FIXTURES / "straight_seam.prog"),
        "--scenario", "force",
        "--offset-z", "2.0",
        "--controller", controller,
        "--out", str(out),
    )
    assert code == 0
    err = float(stdout.split("= ")[1].split(" ")[0])
    assert err <= 0.5


def test_simulate_bad_program_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.prog"
    bad.write_text("PROGRAM p\nWOBBLE t1 SPEED 1.0\nEND\n")
    code, _, err = run(
        capsys,
        "simulate",
        "--program", str(bad),
        "--scenario", "seam",
        "--out", str(tmp_path / "x.csv"),
    )
    assert code == 1
    assert err.startswith("error:") and "line 2" in err


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def test_repeat_invocations_byte_identical(tmp_path, capsys):
    outputs = []
    for name in ("a", "b"):
        prog = tmp_path / f"{name}.prog"
        trace = tmp_path / f"{name}.csv"
        assert run(
            capsys,
            *compile_args(FIXTURES / "butt_joint.scene.json", prog, interp_dt=0.5),
        )[0] == 0
        assert run(
            capsys,
            "simulate",
            "--program", str(prog),
            "--scenario", "force",
            "--offset-z", "1.0",
            "--roughness", "0.05",
            "--seed", "11",
            "--out", str(trace),
        )[0] == 0
        outputs.append(
            (
                prog.read_bytes(),
                trace.read_bytes(),
                (tmp_path / f"{name}.csv.manifest.json").read_bytes(),
            )
        )
    first, second = outputs
    assert first[0] == second[0]
    assert first[1] == second[1]
    # manifests differ only in the recorded output paths
    a = json.loads(first[2])
    b = json.loads(second[2])
    for doc in (a, b):
        doc["options"].pop("out")
        doc["options"].pop("program")
        doc["inputs"].pop("path")
    assert a == b


def test_simulate_manifest_records_resolved_config(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    run(
        capsys,
        "simulate",
        "--program", str(FIXTURES / "straight_seam.prog"),
        "--scenario", "seam",
        "--out", str(out),
    )
    manifest = json.loads((tmp_path / "trace.csv.manifest.json").read_text())
    assert manifest["tool"] == "robopath"
    assert manifest["seed"] == 0
    cfg = manifest["options"]["config"]
    assert cfg["rate_hz"] == 5.0
    assert cfg["resolution_mm"] == 0.01
    assert cfg["max_step_mm"] == 0.5

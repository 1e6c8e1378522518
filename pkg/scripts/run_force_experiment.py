#!/usr/bin/env python3
"""Force-controlled profile-following experiment at desk scale.

Compiles the profile scene, then follows it while holding 20 N against a
surface that sits 2 mm closer than programmed and carries 0.05 mm of
roughness. Both controllers run on the same cell so their traces can be
compared side by side (out/force/pi.csv vs out/force/fuzzy.csv).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from robopath.cli import main  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
SCENE = ROOT / "tests" / "fixtures" / "profile.scene.json"
OUT = ROOT / "out" / "force"


def run(argv):
    code = main(argv)
    if code != 0:
        raise SystemExit(code)


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    program = OUT / "profile.prog"
    run(["compile", "--scene", str(SCENE), "--base", "B", "--out", str(program)])

    common = [
        "simulate", "--program", str(program), "--scenario", "force",
        "--offset-z", "2.0", "--roughness", "0.05", "--seed", "1",
        "--setpoint", "20.0", "--stiffness", "10.0",
    ]
    run(common + ["--controller", "pi", "--out", str(OUT / "pi.csv")])
    run(common + ["--controller", "fuzzy", "--out", str(OUT / "fuzzy.csv")])
    print(f"traces written under {OUT}")

#!/usr/bin/env python3
"""Seam-tracking experiment at desk scale.

Compiles the butt-joint scene into a robot program, then replays it against
two miscalibrated cells: a constant 1 mm lateral offset and a slow angular
misalignment that ramps the deviation up to ~2 mm over the run. Traces land
in out/seam/ as CSV, ready for plotting.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from robopath.cli import main  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
SCENE = ROOT / "tests" / "fixtures" / "butt_joint.scene.json"
OUT = ROOT / "out" / "seam"


def run(argv):
    code = main(argv)
    if code != 0:
        raise SystemExit(code)


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    program = OUT / "weld_seam.prog"
    run(
        ["compile", "--scene", str(SCENE), "--base", "B",
         "--interp-dt", "0.5", "--out", str(program)]
    )

    # the weld runs along -Y in the calibration frame, so its lateral axis
    # is the world X axis
    run(
        ["simulate", "--program", str(program), "--scenario", "seam",
         "--offset-x", "1.0", "--gain-y", "1.0", "--gain-z", "1.0",
         "--out", str(OUT / "constant_offset.csv")]
    )

    ramp_deg = math.degrees(math.asin(2.0 / 200.0))  # ~2 mm drift over the path
    run(
        ["simulate", "--program", str(program), "--scenario", "seam",
         "--rot-z-deg", f"{ramp_deg:.6f}",
         "--out", str(OUT / "ramped_offset.csv")]
    )
    print(f"traces written under {OUT}")

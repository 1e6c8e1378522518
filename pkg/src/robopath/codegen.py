"""Lower planned paths into a vendor-neutral robot program and emit its text.

Program grammar (one statement per line, LF endings):

    program := "PROGRAM" name NL { target } { move } "END" NL
    target  := "TARGET" name "=" "[" num "," num "," num "]" ","
               "[" num "," num "," num "," num "]" NL
    move    := ("MOVEJ"|"MOVEL"|"MOVES") name "SPEED" num NL
             | "MOVEC" name name "SPEED" num NL

Numbers are fixed-point with exactly four decimals; target tuples are
[x, y, z], [w, qx, qy, qz].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .planner import MotionKind, PlannedPath, TargetPose
from .scene import Workspace


class CodegenError(ValueError):
    """A planned path cannot be lowered into a well-formed program."""


class Opcode(str, Enum):
    MOVEJ = "MOVEJ"
    MOVEL = "MOVEL"
    MOVEC = "MOVEC"
    MOVES = "MOVES"


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    targets: tuple[str, ...]
    speed: float
    group: Optional[int] = None  # shared by consecutive MOVES of one spline

    def __post_init__(self):
        expected = 2 if self.opcode is Opcode.MOVEC else 1
        if len(self.targets) != expected:
            raise CodegenError(
                f"{self.opcode.value} takes {expected} target(s), got {len(self.targets)}"
            )


@dataclass(frozen=True)
class RobotProgram:
    name: str
    targets: dict[str, TargetPose] = field(compare=False)
    instructions: tuple[Instruction, ...] = ()

    def __post_init__(self):
        referenced = [t for ins in self.instructions for t in ins.targets]
        if len(set(referenced)) != len(referenced):
            raise CodegenError("a target is referenced by more than one instruction")
        declared = set(self.targets)
        if set(referenced) != declared:
            raise CodegenError("declared targets and instruction references differ")


def fmt_num(value: float) -> str:
    """Fixed-point, four decimals, no exponent, no negative zero."""
    text = f"{value:.4f}"
    return "0.0000" if text == "-0.0000" else text


_SIMPLE_OPCODES = {
    MotionKind.JOINT: Opcode.MOVEJ,
    MotionKind.LINEAR: Opcode.MOVEL,
    MotionKind.SPLINE_VIA: Opcode.MOVES,
}


def lower(path: PlannedPath) -> RobotProgram:
    """Map poses onto motion instructions.

    Joint, linear, and spline poses become single-target moves; a circular
    via pose pairs with the following circular end pose into one MOVEC.
    Targets are named t1, t2, ... in path order and never deduplicated, so
    every pose stays traceable to its source index.
    """
    targets: dict[str, TargetPose] = {}
    instructions: list[Instruction] = []
    group = 0
    in_spline = False
    i = 0
    poses = path.poses
    while i < len(poses):
        pose = poses[i]
        name = f"t{i + 1}"
        if pose.motion_kind is MotionKind.CIRCULAR_VIA:
            if i + 1 >= len(poses) or poses[i + 1].motion_kind is not MotionKind.CIRCULAR_END:
                raise CodegenError(
                    f"path {path.name!r}: circular via at pose {i} has no end pose"
                )
            end = poses[i + 1]
            end_name = f"t{i + 2}"
            targets[name] = pose
            targets[end_name] = end
            instructions.append(Instruction(Opcode.MOVEC, (name, end_name), end.speed))
            in_spline = False
            i += 2
            continue
        if pose.motion_kind is MotionKind.CIRCULAR_END:
            raise CodegenError(
                f"path {path.name!r}: circular end at pose {i} has no via pose"
            )
        opcode = _SIMPLE_OPCODES[pose.motion_kind]
        if opcode is Opcode.MOVES:
            if not in_spline:
                group += 1
                in_spline = True
            instructions.append(Instruction(opcode, (name,), pose.speed, group))
        else:
            in_spline = False
            instructions.append(Instruction(opcode, (name,), pose.speed))
        targets[name] = pose
        i += 1
    return RobotProgram(path.name, targets, tuple(instructions))


def emit(program: RobotProgram) -> str:
    """Deterministic program text; identical programs emit identical bytes."""
    lines = [f"PROGRAM {program.name}"]
    for name, pose in program.targets.items():
        x, y, z = pose.position
        q = pose.orientation
        lines.append(
            f"TARGET {name} = [{fmt_num(x)}, {fmt_num(y)}, {fmt_num(z)}], "
            f"[{fmt_num(q.w)}, {fmt_num(q.x)}, {fmt_num(q.y)}, {fmt_num(q.z)}]"
        )
    for ins in program.instructions:
        names = " ".join(ins.targets)
        lines.append(f"{ins.opcode.value} {names} SPEED {fmt_num(ins.speed)}")
    lines.append("END")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LintFinding:
    """A target position outside the declared workspace box."""

    target: str
    axis: str
    message: str


def workspace_lint(program: RobotProgram, workspace: Workspace) -> list[LintFinding]:
    """Flag every target coordinate outside the box; bounds are inclusive."""
    findings = []
    for name, pose in program.targets.items():
        for k, axis in enumerate("xyz"):
            v = float(pose.position[k])
            lo, hi = float(workspace.lo[k]), float(workspace.hi[k])
            if v < lo or v > hi:
                findings.append(
                    LintFinding(
                        name,
                        axis,
                        f"target {name} {axis}={v:.4f} outside workspace "
                        f"[{lo:.4f}, {hi:.4f}]",
                    )
                )
    return findings

"""Replay an emitted program inside a perturbed virtual cell and close the loop.

Two scenarios are modeled:

* seam: the tool advances along the programmed path while a virtual seam
  sensor measures the lateral (Y) and vertical (Z) deviation to the true,
  rigidly displaced seam. Every tick the accumulated correction moves by
  gain * error per axis, clamped to a per-tick step limit and quantized to
  the robot's resolution.

* force: the tool follows the programmed profile pressing onto a surface
  modeled as a unilateral linear spring (force = stiffness * penetration,
  zero when separated). A PI or fuzzy-PI controller turns the force error
  into a normal-direction displacement. Surface roughness is seeded
  zero-mean Gaussian height noise sampled once per tick.

Runs are fully deterministic for a given program, environment, and config.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .codegen import Instruction, Opcode, RobotProgram, fmt_num
from .geometry import GeometryError, Quaternion, Transform, apply
from .planner import MotionKind, TargetPose


class SimulationError(ValueError):
    """A run cannot start (bad program geometry or configuration)."""


class ProgramParseError(ValueError):
    """Program text violates the grammar; `line` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SeamLost(Exception):
    """The seam sensor found no joint within its sensing range."""


# ---------------------------------------------------------------------------
# program loading (inverse of codegen.emit)
# ---------------------------------------------------------------------------

_TARGET_RE = re.compile(
    r"^TARGET\s+([A-Za-z_]\w*)\s*=\s*\[([^\]]*)\]\s*,\s*\[([^\]]*)\]$"
)

_OPCODE_KIND = {
    Opcode.MOVEJ: MotionKind.JOINT,
    Opcode.MOVEL: MotionKind.LINEAR,
    Opcode.MOVES: MotionKind.SPLINE_VIA,
}


def _floats(text: str, count: int, line_no: int) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != count:
        raise ProgramParseError(f"expected {count} numbers, got {len(parts)}", line_no)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ProgramParseError(f"bad number in {text!r}", line_no) from None


def load_program(text: str) -> RobotProgram:
    """Parse program text back into a RobotProgram.

    All values are kept exactly as written, so a load/emit cycle is
    lossless. Raises ProgramParseError with the offending line number.
    """
    name = None
    raw_targets: dict[str, tuple[list[float], list[float]]] = {}
    moves: list[tuple[int, Opcode, tuple[str, ...], float]] = []
    ended = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if ended:
            raise ProgramParseError("content after END", line_no)
        if name is None:
            parts = line.split()
            if len(parts) != 2 or parts[0] != "PROGRAM":
                raise ProgramParseError("expected PROGRAM header", line_no)
            name = parts[1]
            continue
        if line == "END":
            ended = True
            continue
        if line.startswith("TARGET"):
            if moves:
                raise ProgramParseError("TARGET after motion statements", line_no)
            m = _TARGET_RE.match(line)
            if not m:
                raise ProgramParseError("malformed TARGET statement", line_no)
            tname = m.group(1)
            if tname in raw_targets:
                raise ProgramParseError(f"duplicate target {tname!r}", line_no)
            position = _floats(m.group(2), 3, line_no)
            quat = _floats(m.group(3), 4, line_no)
            raw_targets[tname] = (position, quat)
            continue
        parts = line.split()
        try:
            opcode = Opcode(parts[0])
        except ValueError:
            raise ProgramParseError(f"unknown opcode {parts[0]!r}", line_no) from None
        n_names = 2 if opcode is Opcode.MOVEC else 1
        if len(parts) != n_names + 3 or parts[n_names + 1] != "SPEED":
            raise ProgramParseError(f"malformed {opcode.value} statement", line_no)
        names = tuple(parts[1 : 1 + n_names])
        for t in names:
            if t not in raw_targets:
                raise ProgramParseError(f"undeclared target {t!r}", line_no)
        try:
            speed = float(parts[-1])
        except ValueError:
            raise ProgramParseError(f"bad speed {parts[-1]!r}", line_no) from None
        moves.append((line_no, opcode, names, speed))

    if name is None:
        raise ProgramParseError("empty program", 1)
    if not ended:
        raise ProgramParseError("missing END", len(text.splitlines()) or 1)

    targets: dict[str, TargetPose] = {}
    instructions: list[Instruction] = []
    group = 0
    in_spline = False

    def make_pose(tname, kind, speed, line_no):
        position, quat = raw_targets[tname]
        try:
            # components kept exactly as written so values survive reload
            orientation = Quaternion(*quat)
        except GeometryError as exc:
            raise ProgramParseError(f"target {tname!r}: {exc}", line_no) from exc
        try:
            return TargetPose(position, orientation, kind, speed)
        except ValueError as exc:
            raise ProgramParseError(f"target {tname!r}: {exc}", line_no) from exc

    for line_no, opcode, names, speed in moves:
        if opcode is Opcode.MOVEC:
            targets[names[0]] = make_pose(names[0], MotionKind.CIRCULAR_VIA, speed, line_no)
            targets[names[1]] = make_pose(names[1], MotionKind.CIRCULAR_END, speed, line_no)
            instructions.append(Instruction(opcode, names, speed))
            in_spline = False
            continue
        kind = _OPCODE_KIND[opcode]
        if opcode is Opcode.MOVES:
            if not in_spline:
                group += 1
                in_spline = True
            instructions.append(Instruction(opcode, names, speed, group))
        else:
            in_spline = False
            instructions.append(Instruction(opcode, names, speed))
        targets[names[0]] = make_pose(names[0], kind, speed, line_no)

    unused = set(raw_targets) - set(targets)
    if unused:
        raise ProgramParseError(f"unreferenced targets {sorted(unused)}", 1)
    return RobotProgram(name, targets, tuple(instructions))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Environment:
    """The perturbed 'real' cell: a rigid miscalibration offset, optional
    surface roughness, and the contact stiffness (force scenario)."""

    offset: Transform = field(default_factory=Transform.identity)
    roughness_mm: float = 0.0
    seed: int = 0
    stiffness_n_per_mm: float = 10.0

    def __post_init__(self):
        if self.roughness_mm < 0.0:
            raise SimulationError("roughness amplitude must be >= 0")
        if not self.stiffness_n_per_mm > 0.0:
            raise SimulationError("surface stiffness must be > 0")


@dataclass(frozen=True)
class SeamConfig:
    rate_hz: float = 5.0
    resolution_mm: float = 0.01
    gain_y: float = 1.0
    gain_z: float = 1.0
    max_step_mm: float = 0.5
    sensing_range_mm: float = 50.0

    def __post_init__(self):
        if not self.rate_hz > 0.0 or not self.resolution_mm > 0.0:
            raise SimulationError("rate and resolution must be > 0")
        if self.gain_y < 0.0 or self.gain_z < 0.0:
            raise SimulationError("gains must be >= 0")
        if not self.max_step_mm > 0.0 or not self.sensing_range_mm > 0.0:
            raise SimulationError("step limit and sensing range must be > 0")


class ControllerKind(str, Enum):
    PI = "pi"
    FUZZY_PI = "fuzzy"


@dataclass(frozen=True)
class ForceConfig:
    rate_hz: float = 20.0
    setpoint_n: float = 20.0
    controller: ControllerKind = ControllerKind.PI
    kp: float = 0.02
    ki: float = 0.5
    error_scale: float = 0.05
    derror_scale: float = 0.01
    output_scale: float = 0.1
    output_limit_mm: float = 25.0
    contact_timeout_s: float = 1.0

    def __post_init__(self):
        if not self.rate_hz > 0.0:
            raise SimulationError("rate must be > 0")
        if not self.setpoint_n > 0.0:
            raise SimulationError("force setpoint must be > 0")
        if min(self.kp, self.ki, self.error_scale, self.derror_scale, self.output_scale) < 0.0:
            raise SimulationError("controller gains and scales must be >= 0")


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------


@dataclass
class PIController:
    """Position-form PI with back-calculation anti-windup."""

    kp: float
    ki: float
    output_limit: float = math.inf
    integral: float = 0.0


def pi_step(state: PIController, error: float, dt: float) -> float:
    """u = Kp*e + Ki * integral(e dt), rectangular integration."""
    if not dt > 0.0:
        raise SimulationError("dt must be > 0")
    state.integral += error * dt
    u = state.kp * error + state.ki * state.integral
    if abs(u) > state.output_limit:
        u = math.copysign(state.output_limit, u)
        if state.ki > 0.0:
            state.integral = (u - state.kp * error) / state.ki
    return u


# Five symmetric triangular sets on [-1, 1]: NB NS ZE PS PB.
_CENTERS = (-1.0, -0.5, 0.0, 0.5, 1.0)

# Anti-diagonal rule table: output set index = clip(i + j - 2, 0, 4) for
# error set i and error-rate set j, so e and de of opposite sign cancel.
_RULE = tuple(tuple(min(4, max(0, i + j - 2)) for j in range(5)) for i in range(5))

# Rules grouped into mirror pairs (i, j) <-> (4-i, 4-j); summing each pair
# before accumulating keeps the defuzzified output exactly odd-symmetric.
_SELF_MIRROR = (2, 2)
_MIRROR_PAIRS = tuple(
    ((i, j), (4 - i, 4 - j))
    for i in range(5)
    for j in range(5)
    if (i, j) < (4 - i, 4 - j)
)


def _memberships(v: float) -> tuple[float, ...]:
    return tuple(max(0.0, 1.0 - abs(v - c) * 2.0) for c in _CENTERS)


def _fuzzy_increment(e: float, de: float) -> float:
    """Center-of-gravity defuzzification of the rule table, in [-1, 1]."""
    me = _memberships(e)
    md = _memberships(de)
    num = 0.0
    den = 0.0
    for (i, j), (mi, mj) in _MIRROR_PAIRS:
        w1 = min(me[i], md[j])
        w2 = min(me[mi], md[mj])
        den += w1 + w2
        num += w1 * _CENTERS[_RULE[i][j]] + w2 * _CENTERS[_RULE[mi][mj]]
    den += min(me[2], md[2])  # self-mirrored center rule, output ZE
    if den == 0.0:
        return 0.0
    return num / den


@dataclass
class FuzzyPIController:
    """Incremental fuzzy PI: du from the rule table, accumulated into u."""

    error_scale: float
    derror_scale: float
    output_scale: float
    output_limit: float = math.inf
    prev_error: Optional[float] = None
    output: float = 0.0


def fuzzy_pi_step(state: FuzzyPIController, error: float, dt: float) -> float:
    if not dt > 0.0:
        raise SimulationError("dt must be > 0")
    derror = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    state.prev_error = error
    e = min(1.0, max(-1.0, error * state.error_scale))
    de = min(1.0, max(-1.0, derror * state.derror_scale))
    u = state.output + state.output_scale * _fuzzy_increment(e, de)
    if abs(u) > state.output_limit:
        u = math.copysign(state.output_limit, u)
    state.output = u
    return u


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

SEAM_COLUMNS = ("t_s", "x_mm", "y_mm", "z_mm", "err_y_mm", "err_z_mm", "corr_y_mm", "corr_z_mm")
FORCE_COLUMNS = ("t_s", "x_mm", "y_mm", "z_mm", "force_N", "setpoint_N", "disp_mm")


@dataclass(frozen=True)
class SimTrace:
    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    status: str  # OK | ABORTED

    @property
    def aborted(self) -> bool:
        return self.status == "ABORTED"

    @property
    def data(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def to_csv(self) -> str:
        lines = [",".join(self.columns + ("status",))]
        for i, row in enumerate(self.rows):
            status = "ABORTED" if self.aborted and i == len(self.rows) - 1 else "OK"
            lines.append(",".join(fmt_num(v) for v in row) + f",{status}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# path traversal
# ---------------------------------------------------------------------------


def program_waypoints(program: RobotProgram) -> tuple[np.ndarray, np.ndarray]:
    """Ordered motion waypoints and per-leg speeds from the instruction list."""
    points = []
    speeds = []
    for ins in program.instructions:
        for tname in ins.targets:
            points.append(program.targets[tname].position)
            speeds.append(ins.speed)
    if len(points) < 2:
        raise SimulationError("program needs at least two targets to traverse")
    return np.array(points), np.array(speeds[1:])


class _PathProfile:
    """Time-parameterized traversal of a waypoint polyline at per-leg speeds."""

    def __init__(self, points: np.ndarray, leg_speeds: np.ndarray):
        legs = []
        for i in range(len(points) - 1):
            a, b = points[i], points[i + 1]
            length = float(np.linalg.norm(b - a))
            if length < 1e-12:
                continue  # reorientation in place, no travel time
            legs.append((a, (b - a) / length, length, length / leg_speeds[i]))
        if not legs:
            raise SimulationError("program path has zero length")
        self.legs = legs
        self.total_time = sum(leg[3] for leg in legs)

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Nominal position and unit travel direction at time t (clamped)."""
        remaining = t
        for start, direction, length, duration in self.legs:
            if remaining <= duration:
                frac = 0.0 if duration == 0.0 else remaining / duration
                return start + direction * (length * min(1.0, frac)), direction
            remaining -= duration
        start, direction, length, _ = self.legs[-1]
        return start + direction * length, direction


def _path_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed (X=travel, Y=lateral, Z=vertical-ish) frame for a leg."""
    x = direction / np.linalg.norm(direction)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(x @ up)) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    y = np.cross(up, x)
    y = y / np.linalg.norm(y)
    z = np.cross(x, y)
    return x, y, z


def _closest_on_polyline(points: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, float]:
    best = None
    best_d = math.inf
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        w = b - a
        denom = float(w @ w)
        if denom < 1e-24:
            candidate = a
        else:
            frac = min(1.0, max(0.0, float((p - a) @ w) / denom))
            candidate = a + frac * w
        d = float(np.linalg.norm(candidate - p))
        if d < best_d:
            best, best_d = candidate, d
    return best, best_d


def _tick_count(profile: _PathProfile, rate_hz: float, duration_s: Optional[float]) -> int:
    span = profile.total_time if duration_s is None else min(duration_s, profile.total_time)
    return int(math.floor(span * rate_hz + 1e-9)) + 1


def quantize(value: float, resolution: float) -> float:
    """Snap to the nearest resolution multiple (ties to even)."""
    return round(value / resolution) * resolution


# ---------------------------------------------------------------------------
# seam scenario
# ---------------------------------------------------------------------------


def seam_sensor(
    true_seam: np.ndarray,
    tool,
    travel: np.ndarray,
    sensing_range_mm: float = 50.0,
) -> tuple[float, float]:
    """Signed Y/Z offsets from the tool point to the closest point of the
    true seam, in the path frame of the travel direction.

    `tool` is a TargetPose or a bare point. Raises SeamLost when the seam
    is farther than the sensing range.
    """
    if isinstance(tool, TargetPose):
        tool = tool.position
    tool = np.asarray(tool, dtype=float)
    closest, dist = _closest_on_polyline(true_seam, tool)
    if dist > sensing_range_mm:
        raise SeamLost(f"closest seam point is {dist:.1f} mm away")
    _, y_axis, z_axis = _path_frame(np.asarray(travel, dtype=float))
    d = closest - tool
    return float(d @ y_axis), float(d @ z_axis)


def run_seam(
    program: RobotProgram,
    env: Environment,
    cfg: SeamConfig,
    duration_s: Optional[float] = None,
) -> SimTrace:
    """Closed-loop seam-tracking replay.

    The tool advances along the programmed path at the programmed speeds;
    each tick the sensed Y/Z deviation moves the accumulated correction by
    gain * error, clamped to max_step_mm and quantized to resolution_mm.
    Losing the seam aborts the run; the partial trace is flagged.
    """
    points, leg_speeds = program_waypoints(program)
    profile = _PathProfile(points, leg_speeds)
    true_seam = np.array([apply(env.offset, p) for p in points])
    n_ticks = _tick_count(profile, cfg.rate_hz, duration_s)

    corr_y = 0.0
    corr_z = 0.0
    rows = []
    status = "OK"
    for k in range(n_ticks):
        t = k / cfg.rate_hz
        nominal, direction = profile.at(t)
        _, y_axis, z_axis = _path_frame(direction)
        tool = nominal + corr_y * y_axis + corr_z * z_axis
        try:
            err_y, err_z = seam_sensor(true_seam, tool, direction, cfg.sensing_range_mm)
        except SeamLost:
            closest, _ = _closest_on_polyline(true_seam, tool)
            d = closest - tool
            rows.append(
                (t, *nominal, float(d @ y_axis), float(d @ z_axis), corr_y, corr_z)
            )
            status = "ABORTED"
            break
        step_y = min(cfg.max_step_mm, max(-cfg.max_step_mm, cfg.gain_y * err_y))
        step_z = min(cfg.max_step_mm, max(-cfg.max_step_mm, cfg.gain_z * err_z))
        corr_y = quantize(corr_y + step_y, cfg.resolution_mm)
        corr_z = quantize(corr_z + step_z, cfg.resolution_mm)
        rows.append((t, *nominal, err_y, err_z, corr_y, corr_z))
    return SimTrace("seam", SEAM_COLUMNS, tuple(rows), status)


# ---------------------------------------------------------------------------
# force scenario
# ---------------------------------------------------------------------------


def run_force(
    program: RobotProgram,
    env: Environment,
    cfg: ForceConfig,
    duration_s: Optional[float] = None,
) -> SimTrace:
    """Closed-loop force-controlled profile following.

    The programmed path is assumed to produce the setpoint force in the
    unperturbed cell; the environment offset (projected on the local normal)
    and the roughness noise move the true surface. Contact is a unilateral
    spring; the controller displaces the tool along the normal (positive
    into the surface). Losing contact for longer than the timeout aborts.
    """
    points, leg_speeds = program_waypoints(program)
    profile = _PathProfile(points, leg_speeds)
    n_ticks = _tick_count(profile, cfg.rate_hz, duration_s)
    dt = 1.0 / cfg.rate_hz
    rng = np.random.default_rng(env.seed)

    if cfg.controller is ControllerKind.PI:
        controller = PIController(cfg.kp, cfg.ki, cfg.output_limit_mm)
        step = pi_step
    else:
        controller = FuzzyPIController(
            cfg.error_scale, cfg.derror_scale, cfg.output_scale, cfg.output_limit_mm
        )
        step = fuzzy_pi_step

    disp = 0.0
    lost_for = 0.0
    rows = []
    status = "OK"
    for k in range(n_ticks):
        t = k / cfg.rate_hz
        nominal, direction = profile.at(t)
        _, _, z_axis = _path_frame(direction)
        surface_shift = float((apply(env.offset, nominal) - nominal) @ z_axis)
        if env.roughness_mm > 0.0:
            surface_shift += env.roughness_mm * float(rng.standard_normal())
        force = max(0.0, cfg.setpoint_n + env.stiffness_n_per_mm * (surface_shift + disp))
        error = cfg.setpoint_n - force
        disp = step(controller, error, dt)
        rows.append((t, *nominal, force, cfg.setpoint_n, disp))
        if force == 0.0:
            lost_for += dt
            if lost_for > cfg.contact_timeout_s:
                status = "ABORTED"
                break
        else:
            lost_for = 0.0
    return SimTrace("force", FORCE_COLUMNS, tuple(rows), status)

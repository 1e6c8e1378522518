"""Rigid 3D transform, rotation, and quaternion algebra. All lengths in millimetres."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Tolerance for algebraic identities (orthonormality, unit norm, determinant).
ATOL = 1e-9

# Below this angle (rad) slerp falls back to normalized linear interpolation.
SLERP_MIN_ANGLE = 1e-6


class GeometryError(ValueError):
    """A rotation, quaternion, or transform failed validation."""


def vec3(values) -> np.ndarray:
    """Coerce to a finite (3,) float vector; returns a read-only copy."""
    v = np.array(values, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"vector has non-finite components: {v!r}")
    v.setflags(write=False)
    return v


def rotation_matrix(values) -> np.ndarray:
    """Validate a row-major 3x3 rotation matrix; returns a read-only copy.

    Requires R.T @ R == I and det(R) == 1, both within ATOL per entry.
    """
    r = np.array(values, dtype=float)
    if r.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise GeometryError("rotation has non-finite entries")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > ATOL:
        raise GeometryError(f"matrix is not orthonormal (max deviation {err:.3e})")
    det = float(np.linalg.det(r))
    if abs(det - 1.0) > ATOL:
        raise GeometryError(f"matrix determinant is {det!r}, not +1")
    r.setflags(write=False)
    return r


def rotation_about_z(angle_rad: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation about the Z axis."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return rotation_matrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# Largest norm deviation the Quaternion constructor accepts: covers unit
# values that went through 4-decimal fixed-point formatting and back.
NEAR_UNIT_TOL = 5e-4


@dataclass(frozen=True)
class Quaternion:
    """Quaternion in (w, x, y, z) order, unit up to NEAR_UNIT_TOL, canonical sign.

    Canonical sign: w >= 0; if w == 0, the first nonzero of (x, y, z) >= 0.
    Components are stored exactly as given (sign-flipped if needed), so
    values survive fixed-point round trips; every operation in this module
    returns exactly normalized quaternions (see `unit`).
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        comps = (self.w, self.x, self.y, self.z)
        if not all(math.isfinite(c) for c in comps):
            raise GeometryError(f"quaternion has non-finite components: {comps}")
        norm = math.sqrt(sum(c * c for c in comps))
        if abs(norm - 1.0) > NEAR_UNIT_TOL:
            raise GeometryError(f"quaternion norm is {norm!r}, not 1")
        if _needs_sign_flip(comps):
            for name, value in zip(("w", "x", "y", "z"), comps):
                object.__setattr__(self, name, -value)

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def unit(cls, w: float, x: float, y: float, z: float) -> "Quaternion":
        """Normalize an arbitrary nonzero 4-vector into a unit quaternion."""
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        if not math.isfinite(norm) or norm < 1e-12:
            raise GeometryError(f"cannot normalize quaternion ({w}, {x}, {y}, {z})")
        return cls(w / norm, x / norm, y / norm, z / norm)

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "Quaternion":
        a = np.asarray(axis, dtype=float).reshape(3)
        n = float(np.linalg.norm(a))
        if n < 1e-12:
            raise GeometryError("rotation axis has zero length")
        a = a / n
        half = 0.5 * angle_rad
        s = math.sin(half)
        return cls.unit(math.cos(half), a[0] * s, a[1] * s, a[2] * s)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


def _needs_sign_flip(comps) -> bool:
    for c in comps:
        if c > 0.0:
            return False
        if c < 0.0:
            return True
    return False  # all exactly zero cannot happen for a unit quaternion


def angle_between(a: Quaternion, b: Quaternion) -> float:
    """Great-circle arc angle between two unit quaternions, in [0, pi/2].

    Sign-insensitive (q and -q describe the same rotation).
    """
    d = min(1.0, abs(a.dot(b)))
    return math.acos(d)


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid transform: rotation matrix plus origin (frame pose or point map)."""

    rotation: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", rotation_matrix(self.rotation))
        object.__setattr__(self, "origin", vec3(self.origin))

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, q: Quaternion, origin) -> "Transform":
        return cls(quaternion_to_rotation(q), origin)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Transform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.origin, other.origin
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.origin.tobytes()))


def compose(a: Transform, b: Transform) -> Transform:
    """Chain two transforms: (a o b) maps p to a(b(p))."""
    return Transform(a.rotation @ b.rotation, a.rotation @ b.origin + a.origin)


def invert(t: Transform) -> Transform:
    """Inverse transform: rotation transposed, origin -R^T p."""
    rt = t.rotation.T
    return Transform(rt, -(rt @ t.origin))


def apply(t: Transform, p) -> np.ndarray:
    """Map a point: R p + origin."""
    return t.rotation @ np.asarray(p, dtype=float).reshape(3) + t.origin


def rotation_to_quaternion(r) -> Quaternion:
    """Convert a rotation matrix to a canonical unit quaternion."""
    m = rotation_matrix(r)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = 2.0 * math.sqrt(trace + 1.0)
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return Quaternion.unit(w, x, y, z)


def quaternion_to_rotation(q: Quaternion) -> np.ndarray:
    """Convert a quaternion to a rotation matrix (renormalizing first)."""
    norm = math.sqrt(q.w**2 + q.x**2 + q.y**2 + q.z**2)
    w, x, y, z = q.w / norm, q.x / norm, q.y / norm, q.z / norm
    return rotation_matrix(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def slerp(q0: Quaternion, q1: Quaternion, t: float) -> Quaternion:
    """Spherical linear interpolation along the shortest great-circle arc.

    Q(t) = sin((1-t)*theta)/sin(theta) * q0 + sin(t*theta)/sin(theta) * q1,
    with theta = acos(q0 . q1). When q0 . q1 < 0, q1 is negated first so the
    short arc is taken; below SLERP_MIN_ANGLE the weights degenerate and a
    normalized linear interpolation is used instead.
    """
    if not 0.0 <= t <= 1.0:
        raise GeometryError(f"slerp parameter t={t!r} outside [0, 1]")
    if t == 0.0:
        return q0
    if t == 1.0:
        return q1
    a = q0.as_array()
    b = q1.as_array()
    dot = float(a @ b)
    if dot < 0.0:
        b = -b
        dot = -dot
    theta = math.acos(min(1.0, dot))
    if theta < SLERP_MIN_ANGLE:
        mixed = (1.0 - t) * a + t * b
    else:
        sin_theta = math.sin(theta)
        mixed = (math.sin((1.0 - t) * theta) / sin_theta) * a + (
            math.sin(t * theta) / sin_theta
        ) * b
    return Quaternion.unit(*mixed)

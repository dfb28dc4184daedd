"""Rigid-body transforms in 3D and the small rotation toolkit everything else uses.

Conventions:
    - Rotations are 3x3 orthonormal matrices with det +1 (no reflections).
    - Translations are 3-vectors in meters.
    - A transform maps child-frame coordinates into parent-frame coordinates:
      ``p_parent = R @ p_child + t``.
    - Angles are radians everywhere in this package; degrees appear only at the
      scenario/CLI boundary.

All values are immutable after construction (the wrapped numpy arrays are
marked read-only), so transforms can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Construction-time invariant tolerances.
ORTHONORMAL_TOL = 1e-9
DET_TOL = 1e-9
# compose() re-orthonormalizes its result when drift exceeds this.
DRIFT_TOL = 1e-12


@dataclass(frozen=True)
class Point3:
    """A 3D point in meters. All components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"Point3 components must be finite, got {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Point3":
        a = np.asarray(a, dtype=float).reshape(3)
        return Point3(float(a[0]), float(a[1]), float(a[2]))


class RigidTransform:
    """A proper rigid motion (rotation + translation) in 3D.

    The rotation must be orthonormal within ``ORTHONORMAL_TOL`` (Frobenius
    norm of R^T R - I) and have determinant +1 within ``DET_TOL``.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation) -> None:
        rot = np.array(rotation, dtype=float).reshape(3, 3)
        tra = np.array(translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(tra)):
            raise ValueError("RigidTransform requires finite entries")
        err = float(np.linalg.norm(rot.T @ rot - np.eye(3)))
        if err >= ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I|_F = {err:.3e})")
        det = float(np.linalg.det(rot))
        if abs(det - 1.0) >= DET_TOL:
            raise ValueError(f"rotation determinant must be +1, got {det:.12f}")
        rot.setflags(write=False)
        tra.setflags(write=False)
        self.rotation = rot
        self.translation = tra

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        """Apply the transform to an (n, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """The 4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_close(self, other: "RigidTransform", rot_tol: float = 1e-9, tra_tol: float = 1e-9) -> bool:
        # Frobenius norm on the rotation difference: acos-based geodesic
        # distance bottoms out near 1.5e-8 and cannot express tight tolerances.
        return (
            float(np.linalg.norm(self.rotation - other.rotation)) <= rot_tol
            and float(np.linalg.norm(self.translation - other.translation)) <= tra_tol
        )

    def __repr__(self) -> str:
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def identity() -> RigidTransform:
    return RigidTransform(np.eye(3), np.zeros(3))


def translation(x: float, y: float, z: float) -> RigidTransform:
    return RigidTransform(np.eye(3), (x, y, z))


def rot_x(angle: float) -> RigidTransform:
    c, s = math.cos(angle), math.sin(angle)
    return RigidTransform([[1, 0, 0], [0, c, -s], [0, s, c]], np.zeros(3))


def rot_y(angle: float) -> RigidTransform:
    c, s = math.cos(angle), math.sin(angle)
    return RigidTransform([[c, 0, s], [0, 1, 0], [-s, 0, c]], np.zeros(3))


def rot_z(angle: float) -> RigidTransform:
    c, s = math.cos(angle), math.sin(angle)
    return RigidTransform([[c, -s, 0], [s, c, 0], [0, 0, 1]], np.zeros(3))


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix onto the closest proper rotation.

    Uses the orthogonal factor of the SVD with a sign fix so det = +1.
    """
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def rotation_from_axis_angle(vec) -> np.ndarray:
    """Rodrigues' formula: rotation matrix for an axis-angle 3-vector.

    The vector's direction is the axis, its norm the angle in radians.
    Small angles fall back to the second-order series to avoid dividing
    by a vanishing norm.
    """
    v = np.asarray(vec, dtype=float).reshape(3)
    angle = float(np.linalg.norm(v))
    k = _skew(v)
    if angle < 1e-12:
        return np.eye(3) + k + 0.5 * (k @ k)
    k = k / angle
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition: the result applies ``b`` first, then ``a``."""
    rot = a.rotation @ b.rotation
    tra = a.rotation @ b.translation + a.translation
    if float(np.linalg.norm(rot.T @ rot - np.eye(3))) > DRIFT_TOL:
        rot = nearest_rotation(rot)
    return RigidTransform(rot, tra)


def invert(t: RigidTransform) -> RigidTransform:
    rot = t.rotation.T
    return RigidTransform(rot, -(rot @ t.translation))


def apply(t: RigidTransform, p: Point3) -> Point3:
    return Point3.from_array(t.rotation @ p.as_array() + t.translation)


def rotation_distance(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic angle between the two rotations, in [0, pi]."""
    rel = a.rotation.T @ b.rotation
    cos_angle = 0.5 * (float(np.trace(rel)) - 1.0)
    return math.acos(min(1.0, max(-1.0, cos_angle)))

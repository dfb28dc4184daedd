"""Synthetic observations standing in for real RGB-D sensing.

Three streams per camera, all deterministic given (world, params, seed):
landmark points expressed in the camera's optical frame, robot tag
detections in the camera's ground frame, and per-cell obstacle evidence.

Camera 3D pose convention: the optical frame follows the usual computer
vision axes (z forward along the optical axis, x right, y down). The camera
sits at (x, y, h) and is pitched down so the optical axis hits the ground at
half the footprint depth, which centers the view on the footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geom
from .geom import Point3, RigidTransform
from .world import CameraSpec, CellIndex, GridWorld, covered_cells, ground_footprint, line_of_sight


@dataclass(frozen=True)
class LandmarkObservation:
    camera_id: int
    landmark_id: int
    point: Point3  # camera optical frame, meters


@dataclass(frozen=True)
class TagDetection:
    camera_id: int
    tag_id: int
    ground_position: tuple[float, float]  # camera ground frame: x lateral, y forward
    timestamp: float


@dataclass(frozen=True)
class ObstacleEvidence:
    camera_id: int
    cell: CellIndex
    occupied: bool
    timestamp: float


def camera_world_pose(cam: CameraSpec) -> RigidTransform:
    """Optical-frame -> world transform for a mounted camera."""
    fp = ground_footprint(cam)
    forward2d = np.array([-math.sin(cam.yaw), math.cos(cam.yaw)])
    pitch = math.atan2(cam.height, fp.depth / 2.0)  # down from horizontal
    z_axis = np.array(
        [forward2d[0] * math.cos(pitch), forward2d[1] * math.cos(pitch), -math.sin(pitch)]
    )
    x_axis = np.array([forward2d[1], -forward2d[0], 0.0])
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.column_stack([x_axis, y_axis, z_axis])
    return RigidTransform(rotation, (cam.x, cam.y, cam.height))


def _in_frustum(cam: CameraSpec, p_cam: np.ndarray) -> bool:
    px, py, pz = p_cam
    if pz <= 0:
        return False
    if float(np.linalg.norm(p_cam)) > cam.max_range:
        return False
    return abs(math.atan2(px, pz)) <= cam.hfov / 2.0 and abs(math.atan2(py, pz)) <= cam.vfov / 2.0


def observe_landmarks(
    cam: CameraSpec, world: GridWorld, sigma: float, seed: int
) -> list[LandmarkObservation]:
    """Landmarks visible in the camera frustum, expressed in its optical frame.

    Noise is isotropic Gaussian with the given sigma; the generator is
    seeded per (seed, camera, landmark), so a stream is reproducible
    regardless of which other cameras or landmarks are evaluated.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    world_from_cam = camera_world_pose(cam)
    cam_from_world = geom.invert(world_from_cam)
    out: list[LandmarkObservation] = []
    for lm in sorted(world.landmarks, key=lambda lm: lm.id):
        p_cam = cam_from_world.rotation @ lm.position.as_array() + cam_from_world.translation
        if not _in_frustum(cam, p_cam):
            continue
        if not line_of_sight(world, (cam.x, cam.y), (lm.position.x, lm.position.y)):
            continue
        if sigma > 0:
            rng = np.random.default_rng((seed, cam.id, lm.id))
            p_cam = p_cam + rng.normal(0.0, sigma, size=3)
        out.append(
            LandmarkObservation(camera_id=cam.id, landmark_id=lm.id, point=Point3.from_array(p_cam))
        )
    return out


def observe_tags(
    cam: CameraSpec,
    world: GridWorld,
    sigma: float,
    seed: int,
    t: float,
    footprint_cells: set[CellIndex] | None = None,
) -> list[TagDetection]:
    """One detection per robot whose cell the camera covers.

    The measured position is the robot's true ground position in the
    camera's ground frame plus planar Gaussian noise, seeded per
    (seed, millisecond tick, camera, tag). Pass footprint_cells to reuse
    a precomputed covered_cells result across ticks.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if footprint_cells is None:
        footprint_cells = covered_cells(cam, world)
    fp = ground_footprint(cam)
    tick_ms = int(round(t * 1000.0))
    out: list[TagDetection] = []
    for robot in sorted(world.robots, key=lambda r: r.tag):
        if world.cell_of(robot.x, robot.y) not in footprint_cells:
            continue
        local = np.array(fp.to_local(robot.x, robot.y))
        if sigma > 0:
            rng = np.random.default_rng((seed, tick_ms, cam.id, robot.tag))
            local = local + rng.normal(0.0, sigma, size=2)
        out.append(
            TagDetection(
                camera_id=cam.id,
                tag_id=robot.tag,
                ground_position=(float(local[0]), float(local[1])),
                timestamp=t,
            )
        )
    return out


def observe_obstacles(
    cam: CameraSpec,
    world: GridWorld,
    t: float = 0.0,
    footprint_cells: set[CellIndex] | None = None,
) -> list[ObstacleEvidence]:
    """Occupancy evidence for every visible footprint cell.

    A cell is reported occupied when an obstacle or a robot currently sits
    in it, free otherwise. The simulated detector is exact (ground truth);
    uncertainty enters the system through the localization streams instead.
    """
    if footprint_cells is None:
        footprint_cells = covered_cells(cam, world)
    occupied_cells = {ob.cell for ob in world.obstacles}
    occupied_cells |= {world.cell_of(r.x, r.y) for r in world.robots}
    return [
        ObstacleEvidence(camera_id=cam.id, cell=cell, occupied=cell in occupied_cells, timestamp=t)
        for cell in sorted(footprint_cells)
    ]

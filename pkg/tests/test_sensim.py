import math

import numpy as np
import pytest

from ubimap import geom, sensim
from ubimap.geom import Point3
from ubimap.world import (
    CameraSpec,
    CellIndex,
    GridWorld,
    Landmark,
    Robot,
    covered_cells,
    ground_footprint,
    line_of_sight,
)


def make_camera(x, y, *, width, depth, yaw=0.0, cid=1, height=2.0, max_range=100.0):
    hfov = 2.0 * math.atan(width / (2.0 * height))
    vfov = 2.0 * math.atan(depth / height)
    return CameraSpec(id=cid, x=x, y=y, height=height, yaw=yaw, hfov=hfov, vfov=vfov, max_range=max_range)


def room_with_landmarks(landmarks, robots=(), walls=frozenset()):
    return GridWorld(
        cell_size=1.0,
        width=8,
        height=8,
        walls=walls,
        robots=tuple(robots),
        landmarks=tuple(landmarks),
    )


def test_camera_pose_axis_hits_footprint_center():
    cam = make_camera(4.0, 2.0, width=3.0, depth=4.0, yaw=0.3)
    pose = sensim.camera_world_pose(cam)
    fp = ground_footprint(cam)
    # March along the optical axis (local +z) until it reaches the ground.
    z_world = pose.rotation[:, 2]
    s = cam.height / -z_world[2]
    hit = pose.translation + s * z_world
    expected = fp.to_world(0.0, fp.depth / 2.0)
    assert hit[2] == pytest.approx(0.0, abs=1e-12)
    assert hit[0] == pytest.approx(expected[0], abs=1e-12)
    assert hit[1] == pytest.approx(expected[1], abs=1e-12)


def test_noise_free_landmark_matches_ground_truth():
    lm = Landmark(id=1, position=Point3(4.0, 3.5, 0.4))
    cam = make_camera(4.0, 2.0, width=4.0, depth=4.0)
    world = room_with_landmarks([lm])
    obs = sensim.observe_landmarks(cam, world, sigma=0.0, seed=0)
    assert len(obs) == 1
    pose = sensim.camera_world_pose(cam)
    recovered = geom.apply(pose, obs[0].point)
    assert recovered.x == pytest.approx(lm.position.x, abs=1e-12)
    assert recovered.y == pytest.approx(lm.position.y, abs=1e-12)
    assert recovered.z == pytest.approx(lm.position.z, abs=1e-12)


def test_landmark_behind_wall_absent():
    wall = frozenset(CellIndex(c, 4) for c in range(8))
    near = Landmark(id=1, position=Point3(4.0, 3.5, 0.2))
    far = Landmark(id=2, position=Point3(4.0, 5.5, 0.2))
    cam = make_camera(4.0, 2.0, width=6.0, depth=6.0)
    world = room_with_landmarks([near, far], walls=wall)
    # Independent oracle: the far landmark has no line of sight.
    assert line_of_sight(world, (cam.x, cam.y), (near.position.x, near.position.y))
    assert not line_of_sight(world, (cam.x, cam.y), (far.position.x, far.position.y))
    obs = sensim.observe_landmarks(cam, world, sigma=0.0, seed=0)
    assert [o.landmark_id for o in obs] == [1]


def test_landmark_observation_deterministic():
    lms = [Landmark(id=i, position=Point3(3.0 + 0.3 * i, 3.0, 0.3)) for i in range(5)]
    cam = make_camera(4.0, 2.0, width=6.0, depth=5.0)
    world = room_with_landmarks(lms)
    a = sensim.observe_landmarks(cam, world, sigma=0.05, seed=9)
    b = sensim.observe_landmarks(cam, world, sigma=0.05, seed=9)
    assert a == b
    c = sensim.observe_landmarks(cam, world, sigma=0.05, seed=10)
    assert a != c


def test_landmark_outside_frustum_excluded():
    behind = Landmark(id=1, position=Point3(4.0, 1.0, 0.2))  # behind the camera
    cam = make_camera(4.0, 2.0, width=4.0, depth=4.0)
    world = room_with_landmarks([behind])
    assert sensim.observe_landmarks(cam, world, sigma=0.0, seed=0) == []


def test_tags_empty_when_robot_outside_every_footprint():
    robot = Robot(id=1, x=7.5, y=7.5, theta=0.0, tag=3)
    cam = make_camera(2.0, 1.0, width=2.0, depth=2.0)
    world = room_with_landmarks([], robots=[robot])
    assert sensim.observe_tags(cam, world, sigma=0.0, seed=0, t=0.0) == []


def test_tag_noise_free_equals_true_relative_position():
    robot = Robot(id=1, x=2.5, y=2.5, theta=0.0, tag=3)
    cam = make_camera(2.0, 1.0, width=4.0, depth=4.0)
    world = room_with_landmarks([], robots=[robot])
    dets = sensim.observe_tags(cam, world, sigma=0.0, seed=0, t=0.5)
    assert len(dets) == 1
    fp = ground_footprint(cam)
    expected = fp.to_local(robot.x, robot.y)
    assert dets[0].ground_position == pytest.approx(expected, abs=1e-12)
    assert dets[0].timestamp == 0.5


def test_robot_in_overlap_detected_by_both_cameras():
    robot = Robot(id=1, x=3.5, y=2.5, theta=0.0, tag=9)
    cam_a = make_camera(3.5, 1.0, width=4.0, depth=4.0, cid=1)
    cam_b = make_camera(3.5, 4.0, width=4.0, depth=4.0, yaw=math.pi, cid=2)
    world = room_with_landmarks([], robots=[robot])
    # Footprint-membership oracle.
    cell = world.cell_of(robot.x, robot.y)
    assert cell in covered_cells(cam_a, world)
    assert cell in covered_cells(cam_b, world)
    dets = sensim.observe_tags(cam_a, world, 0.0, 0, 0.0) + sensim.observe_tags(cam_b, world, 0.0, 0, 0.0)
    assert [d.tag_id for d in dets] == [9, 9]
    assert {d.camera_id for d in dets} == {1, 2}


def test_tag_noise_deterministic_per_tick():
    robot = Robot(id=1, x=2.5, y=2.5, theta=0.0, tag=3)
    cam = make_camera(2.0, 1.0, width=4.0, depth=4.0)
    world = room_with_landmarks([], robots=[robot])
    a = sensim.observe_tags(cam, world, sigma=0.02, seed=4, t=0.1)
    b = sensim.observe_tags(cam, world, sigma=0.02, seed=4, t=0.1)
    c = sensim.observe_tags(cam, world, sigma=0.02, seed=4, t=0.2)
    assert a == b
    assert a[0].ground_position != c[0].ground_position


def test_obstacle_evidence_all_free_in_empty_footprint():
    cam = make_camera(2.0, 1.0, width=2.0, depth=2.0)
    world = room_with_landmarks([])
    evidence = sensim.observe_obstacles(cam, world)
    assert evidence
    assert all(not ev.occupied for ev in evidence)
    assert {ev.cell for ev in evidence} == covered_cells(cam, world)


def test_obstacle_in_footprint_reported_occupied():
    from ubimap.world import Obstacle

    ob = Obstacle(id=1, cell=CellIndex(2, 2))
    world = GridWorld(cell_size=1.0, width=8, height=8, obstacles=(ob,))
    cam = make_camera(2.0, 1.0, width=4.0, depth=4.0)
    evidence = {ev.cell: ev.occupied for ev in sensim.observe_obstacles(cam, world)}
    assert evidence[CellIndex(2, 2)] is True
    assert sum(evidence.values()) == 1


def test_obstacle_behind_wall_not_reported():
    from ubimap.world import Obstacle

    wall = frozenset(CellIndex(c, 3) for c in range(8))
    ob = Obstacle(id=1, cell=CellIndex(2, 5))
    world = GridWorld(cell_size=1.0, width=8, height=8, walls=wall, obstacles=(ob,))
    cam = make_camera(2.0, 0.5, width=6.0, depth=7.0)
    # Ray-cast oracle: the obstacle cell center is occluded.
    assert not line_of_sight(world, (cam.x, cam.y), world.cell_center(ob.cell))
    cells = {ev.cell for ev in sensim.observe_obstacles(cam, world)}
    assert ob.cell not in cells


def test_visibility_soundness_randomized():
    rng = np.random.default_rng(123)
    walls = frozenset({CellIndex(3, r) for r in range(2, 6)})
    lms = [
        Landmark(id=i, position=Point3(float(rng.uniform(0.2, 7.8)), float(rng.uniform(0.2, 7.8)), float(rng.uniform(0.1, 1.0))))
        for i in range(20)
    ]
    world = GridWorld(cell_size=1.0, width=8, height=8, walls=walls, landmarks=tuple(lms))
    for yaw in (0.0, 1.2, 2.8, 4.4):
        cam = make_camera(4.2, 3.4, width=6.0, depth=6.0, yaw=yaw)
        for obs in sensim.observe_landmarks(cam, world, sigma=0.0, seed=1):
            lm = next(l for l in lms if l.id == obs.landmark_id)
            assert line_of_sight(world, (cam.x, cam.y), (lm.position.x, lm.position.y))

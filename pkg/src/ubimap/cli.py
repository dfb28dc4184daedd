"""Scenario runner: plan, calibrate, simulate, render.

Exit codes: 0 ok, 1 scenario parse error, 2 constraint violations under
--strict, 3 calibration failure (disconnected camera graph), 4 runtime
error. All outputs (CSV reports, portable-pixmap images, hex capture
dumps) are byte-deterministic given the scenario, seed and flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calib, coverage, fusion, geom, netsim, sensim, world as worldmod
from .calib import CorrespondenceSet, DisconnectedGraphError, IcpOptions
from .fusion import CellState, GridMap
from .geom import RigidTransform
from .netsim import ClientState, MapServer, Message, MessageKind, NetworkParams, SimulatedNetwork
from .world import GridWorld, Scenario, ScenarioError, line_of_sight

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_CONSTRAINT = 2
EXIT_CALIBRATION = 3
EXIT_RUNTIME = 4

# Map palette: wall black, unexplored dark gray, explored light gray,
# obstacles red, robots green.
PALETTE = {
    CellState.WALL: (0, 0, 0),
    CellState.UNEXPLORED: (96, 96, 96),
    CellState.EXPLORED: (200, 200, 200),
    CellState.OBSTACLE: (220, 0, 0),
    CellState.ROBOT: (0, 200, 0),
}


def render_map(grid_map: GridMap) -> bytes:
    """Binary portable-pixmap of the map, row 0 first, 3 bytes per cell."""
    header = f"P6\n{grid_map.width} {grid_map.height}\n255\n".encode("ascii")
    body = bytearray()
    for row in range(grid_map.height):
        for col in range(grid_map.width):
            body.extend(PALETTE[CellState(int(grid_map.cells[row, col]))])
    return header + bytes(body)


@dataclass
class RunReport:
    """Everything a simulation run reports; fractions live in [0, 1] and
    every error is non-negative."""

    localization_errors: list[tuple[int, float, int, float]] = field(default_factory=list)
    map_accuracy: float = 1.0
    coverage_ratio: float = 0.0
    calibration_errors: dict[int, tuple[float, float]] = field(default_factory=dict)
    cost_initial: float = 0.0
    cost_final: float = 0.0
    messages_sent: int = 0
    messages_delivered: int = 0
    messages_dropped: int = 0
    stale_updates: int = 0
    uploads_merged: int = 0
    client_revisions: dict[int, int] = field(default_factory=dict)
    server_revision: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.map_accuracy <= 1.0:
            raise ValueError("map_accuracy must be in [0, 1]")
        if not 0.0 <= self.coverage_ratio <= 1.0:
            raise ValueError("coverage_ratio must be in [0, 1]")
        for _, _, _, err in self.localization_errors:
            if err < 0:
                raise ValueError("localization errors must be >= 0")
        for rot, tra in self.calibration_errors.values():
            if rot < 0 or tra < 0:
                raise ValueError("calibration errors must be >= 0")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_bytes(buffer.getvalue().encode("ascii"))


def _ground_truth_state(world: GridWorld, cell) -> CellState:
    if cell in world.walls:
        return CellState.WALL
    if any(ob.cell == cell for ob in world.obstacles):
        return CellState.OBSTACLE
    if any(world.cell_of(r.x, r.y) == cell for r in world.robots):
        return CellState.ROBOT
    return CellState.EXPLORED


def ground_truth_map(world: GridWorld) -> GridMap:
    """A fully revealed map of the ground truth (the renderer's demo input)."""
    truth = GridMap(world.width, world.height, world.cell_size, known_walls=world.walls)
    for cell in world.all_cells():
        truth.cells[cell.row, cell.col] = int(_ground_truth_state(world, cell))
    truth.revision = 1
    return truth


# -- calibration pipeline ------------------------------------------------------


@dataclass
class CalibrationResult:
    reference: int
    graph: calib.TransformGraph
    initial: dict[int, RigidTransform]
    refined: dict[int, RigidTransform]
    cost_trace: list[float]
    true_poses: dict[int, RigidTransform]

    def pose_errors(self) -> dict[int, tuple[float, float]]:
        out = {}
        for cam_id, pose in self.refined.items():
            truth = self.true_poses[cam_id]
            out[cam_id] = (
                geom.rotation_distance(pose, truth),
                float(np.linalg.norm(pose.translation - truth.translation)),
            )
        return out

    def estimated_world_poses(self, reference_world_pose: RigidTransform) -> dict[int, RigidTransform]:
        """Anchor the calibrated rig to the world through the surveyed
        reference camera."""
        return {cam_id: geom.compose(reference_world_pose, pose) for cam_id, pose in self.refined.items()}


def calibrate_scenario(scenario: Scenario, sigma: float, seed: int) -> CalibrationResult:
    """Full calibration: simulated landmark captures, pairwise ICP edges,
    propagation from the lowest camera id, then global refinement."""
    cams = sorted(scenario.cameras, key=lambda c: c.id)
    if not cams:
        raise ValueError("scenario has no cameras to calibrate")
    reference = cams[0].id
    observations = {
        cam.id: {obs.landmark_id: obs.point.as_array() for obs in sensim.observe_landmarks(cam, scenario.world, sigma, seed)}
        for cam in cams
    }
    pairwise = []
    for a in range(len(cams)):
        for b in range(a + 1, len(cams)):
            cam_i, cam_j = cams[a].id, cams[b].id
            shared = sorted(set(observations[cam_i]) & set(observations[cam_j]))
            if len(shared) < 3:
                continue
            pairwise.append(
                (
                    cam_i,
                    cam_j,
                    CorrespondenceSet(
                        camera_i=cam_i,
                        camera_j=cam_j,
                        points_i=np.array([observations[cam_i][lid] for lid in shared]),
                        points_j=np.array([observations[cam_j][lid] for lid in shared]),
                        landmark_ids=tuple(shared),
                    ),
                )
            )
    graph = calib.build_graph(pairwise, IcpOptions(), reference, nodes=tuple(c.id for c in cams))
    initial = calib.propagate(graph)  # raises DisconnectedGraphError
    refined, trace = calib.refine(graph, initial)

    world_poses = {cam.id: sensim.camera_world_pose(cam) for cam in cams}
    ref_inverse = geom.invert(world_poses[reference])
    true_poses = {cam.id: geom.compose(ref_inverse, world_poses[cam.id]) for cam in cams}
    return CalibrationResult(
        reference=reference,
        graph=graph,
        initial=initial,
        refined=refined,
        cost_trace=trace,
        true_poses=true_poses,
    )


# -- subcommands -----------------------------------------------------------------


def _load_scenario(path: str) -> Scenario:
    return worldmod.parse_scenario(Path(path).read_text(encoding="ascii"))


def cmd_plan(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if not scenario.cameras:
        print("scenario error: no candidate cameras", file=sys.stderr)
        return EXIT_PARSE

    problem = coverage.CoverageProblem(
        world=scenario.world,
        candidates=scenario.cameras,
        min_overlap=args.min_overlap,
        max_overlap=args.max_overlap if args.max_overlap is not None else len(scenario.cameras),
        budget=args.budget if args.budget is not None else len(scenario.cameras),
    )
    plan = coverage.plan_exhaustive(problem) if args.exact else coverage.plan_greedy(problem)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    histogram: dict[int, int] = {}
    for cell in problem.target_cells:
        count = plan.per_cell_multiplicity.get(cell, 0)
        histogram[count] = histogram.get(count, 0) + 1
    rows = [
        ["selected", " ".join(str(i) for i in plan.selected)],
        ["cameras_selected", len(plan.selected)],
        ["coverage_ratio", repr(plan.coverage_ratio)],
        ["objective", coverage.objective(plan, problem)],
        ["violations", len(plan.violations)],
    ]
    rows += [[f"multiplicity_{count}", histogram[count]] for count in sorted(histogram)]
    _write_csv(out_dir / "plan.csv", ["key", "value"], rows)
    _write_csv(
        out_dir / "plan_violations.csv",
        ["col", "row", "multiplicity"],
        [[cell.col, cell.row, count] for cell, count in plan.violations],
    )
    if args.heatmap:
        (out_dir / "plan_coverage.ppm").write_bytes(_coverage_heatmap(problem, plan))
    print(f"selected {len(plan.selected)} cameras, coverage {plan.coverage_ratio:.4f}, {len(plan.violations)} violations")
    if args.strict and plan.violations:
        return EXIT_CONSTRAINT
    return EXIT_OK


def _coverage_heatmap(problem: coverage.CoverageProblem, plan: coverage.PlacementPlan) -> bytes:
    w, h = problem.world.width, problem.world.height
    top = max([1] + list(plan.per_cell_multiplicity.values()))
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    body = bytearray()
    for row in range(h):
        for col in range(w):
            cell = worldmod.CellIndex(col, row)
            if cell in problem.world.walls:
                body.extend((0, 0, 0))
            else:
                level = int(255 * plan.per_cell_multiplicity.get(cell, 0) / top)
                body.extend((level, level, 64))
    return header + bytes(body)


def cmd_calibrate(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    seed = args.seed if args.seed is not None else scenario.params.seed
    sigma = args.noise_sigma if args.noise_sigma is not None else scenario.params.noise_sigma
    try:
        result = calibrate_scenario(scenario, sigma, seed)
    except DisconnectedGraphError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except ValueError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    loop = calib.loop_closure_error(result.graph, result.initial)
    rows = [["cost_initial", "", repr(result.cost_trace[0])], ["cost_final", "", repr(result.cost_trace[-1])]]
    for edge in result.graph.edges:
        rows.append(["edge_residual", f"{edge.camera_i}-{edge.camera_j}", repr(edge.residual)])
    for (i, j), err in sorted(loop.items()):
        rows.append(["loop_error_initial", f"{i}-{j}", repr(err)])
    for (i, j), err in sorted(calib.loop_closure_error(result.graph, result.refined).items()):
        rows.append(["loop_error_refined", f"{i}-{j}", repr(err)])
    for cam_id, (rot_err, tra_err) in sorted(result.pose_errors().items()):
        rows.append(["pose_rotation_error_rad", str(cam_id), repr(rot_err)])
        rows.append(["pose_translation_error_m", str(cam_id), repr(tra_err)])
    for cam_id, cam_j, reason in result.graph.failures:
        rows.append(["edge_failure", f"{cam_id}-{cam_j}", reason])
    _write_csv(out_dir / "calibration.csv", ["record", "key", "value"], rows)
    worst = max((err for err, _ in result.pose_errors().values()), default=0.0)
    print(
        f"calibrated {len(result.refined)} cameras, cost {result.cost_trace[0]:.3e} -> "
        f"{result.cost_trace[-1]:.3e}, worst rotation error {worst:.3e} rad"
    )
    return EXIT_OK


def _robot_local_map(world: GridWorld, robot, sense_radius: float) -> GridMap:
    """What the robot's own onboard sensing contributes: every cell within
    sensing range and line of sight, labeled from ground truth (other
    robots read as obstacles to an onboard detector)."""
    fragment = GridMap(world.width, world.height, world.cell_size)
    if sense_radius <= 0:
        return fragment
    occupied = {ob.cell for ob in world.obstacles}
    others = {world.cell_of(r.x, r.y) for r in world.robots if r.id != robot.id}
    own = world.cell_of(robot.x, robot.y)
    for cell in world.all_cells():
        center = world.cell_center(cell)
        if math.dist(center, (robot.x, robot.y)) > sense_radius:
            continue
        if not line_of_sight(world, (robot.x, robot.y), center):
            continue
        if cell in world.walls:
            state = CellState.WALL
        elif cell in occupied or cell in others:
            state = CellState.OBSTACLE
        else:
            state = CellState.EXPLORED
        fragment.cells[cell.row, cell.col] = int(state)
    fragment.cells[own.row, own.col] = int(CellState.EXPLORED)
    return fragment


def cmd_simulate(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        outputs = run_simulation(scenario, args)
    except DisconnectedGraphError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except ValueError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = outputs.report

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "final_map.ppm").write_bytes(render_map(outputs.server_map))
    (out_dir / "capture.hex").write_bytes("".join(f"{frame.hex()}\n" for frame in outputs.capture).encode("ascii"))
    if args.dump_observations:
        _write_csv(
            out_dir / "observations.csv",
            ["tick", "t", "kind", "camera_id", "a", "b", "c"],
            outputs.observations,
        )
    _write_csv(
        out_dir / "localization.csv",
        ["tick", "t", "robot_id", "error_m"],
        [[tick, repr(t), rid, repr(err)] for tick, t, rid, err in report.localization_errors],
    )
    rows = [
        ["coverage_ratio", repr(report.coverage_ratio)],
        ["map_accuracy", repr(report.map_accuracy)],
        ["cost_initial", repr(report.cost_initial)],
        ["cost_final", repr(report.cost_final)],
        ["messages_sent", report.messages_sent],
        ["messages_delivered", report.messages_delivered],
        ["messages_dropped", report.messages_dropped],
        ["stale_updates", report.stale_updates],
        ["uploads_merged", report.uploads_merged],
        ["server_revision", report.server_revision],
    ]
    for cam_id, (rot_err, tra_err) in sorted(report.calibration_errors.items()):
        rows.append([f"calibration_rotation_error_{cam_id}", repr(rot_err)])
        rows.append([f"calibration_translation_error_{cam_id}", repr(tra_err)])
    for robot_id, revision in sorted(report.client_revisions.items()):
        rows.append([f"client_revision_{robot_id}", revision])
    _write_csv(out_dir / "summary.csv", ["key", "value"], rows)
    print(
        f"simulated {args.duration}s: map accuracy {report.map_accuracy:.4f}, "
        f"{report.messages_sent} msgs sent, server revision {report.server_revision}"
    )
    return EXIT_OK


@dataclass
class SimulationOutputs:
    report: RunReport
    server_map: GridMap
    capture: list[bytes]
    observations: list[list]


def run_simulation(scenario: Scenario, args) -> SimulationOutputs:
    world = scenario.world
    params = scenario.params
    seed = args.seed if args.seed is not None else params.seed
    sigma = args.noise_sigma if args.noise_sigma is not None else params.noise_sigma
    loss = args.loss if args.loss is not None else params.net_loss
    latency_ms = args.latency_ms if args.latency_ms is not None else params.net_latency_ms

    cameras = sorted(scenario.cameras, key=lambda c: c.id)
    if args.plan_budget is not None:
        problem = coverage.CoverageProblem(
            world=world, candidates=tuple(cameras), budget=args.plan_budget,
            max_overlap=len(cameras),
        )
        selected = set(coverage.plan_greedy(problem).selected)
        cameras = [cam for cam in cameras if cam.id in selected]

    calibration = calibrate_scenario(Scenario(world, tuple(cameras), params), sigma, seed)
    reference_cam = next(cam for cam in cameras if cam.id == calibration.reference)
    camera_poses = calibration.estimated_world_poses(sensim.camera_world_pose(reference_cam))

    footprints = {cam.id: worldmod.covered_cells(cam, world) for cam in cameras}
    covered = set().union(*footprints.values()) if footprints else set()
    free_cells = set(world.free_cells())
    coverage_ratio = len(covered & free_cells) / len(free_cells) if free_cells else 1.0

    server_map = GridMap(
        world.width,
        world.height,
        world.cell_size,
        known_walls=world.walls,
        tag_registry={r.tag: r.id for r in world.robots},
    )
    # Address 0 is the map server; robots are addressed by their own id.
    if any(not 1 <= r.id < 2**16 for r in world.robots):
        raise ValueError("robot ids must be in 1..65535 to address them on the network")
    server = MapServer(server_map, sender_id=0)
    net = SimulatedNetwork(NetworkParams(latency_ms=latency_ms, jitter_ms=args.jitter_ms, loss_probability=loss, seed=seed))
    clients = {r.id: ClientState(r.id, world.cell_size) for r in world.robots}
    robots = sorted(world.robots, key=lambda r: r.id)

    beliefs: dict[int, fusion.GaussianBelief] = {}
    mm = fusion.odometry_motion_model(np.diag([1e-8, 1e-8, 1e-8]))
    meas_var = max(sigma, 1e-4) ** 2
    om = fusion.position_observation_model(np.diag([meas_var, meas_var]))

    upload_seqs = {r.id: 0 for r in robots}
    capture: list[bytes] = []
    observation_rows: list[list] = []
    report = RunReport(
        coverage_ratio=coverage_ratio,
        calibration_errors=calibration.pose_errors(),
        cost_initial=calibration.cost_trace[0],
        cost_final=calibration.cost_trace[-1],
    )

    def send(msg: Message, dest: int, now: float) -> None:
        capture.append(netsim.encode(msg))
        net.send(msg, dest, now)

    def handle_deliveries(deliveries) -> None:
        for delivery in deliveries:
            msg = delivery.message
            if delivery.dest == 0:
                ack = server.ingest(msg)
                if ack is not None:
                    send(ack, msg.sender_id, delivery.time)
            else:
                netsim.client_apply(clients[delivery.dest], msg)

    dt = args.dt
    ticks = int(round(args.duration / dt))
    broadcast_every = max(1, int(round(args.broadcast_ms / 1000.0 / dt)))
    upload_every = max(1, int(round(args.upload_ms / 1000.0 / dt)))

    for tick in range(ticks):
        t = tick * dt
        evidence, tags = [], []
        for cam in cameras:
            evidence.extend(sensim.observe_obstacles(cam, world, t, footprints[cam.id]))
            tags.extend(sensim.observe_tags(cam, world, sigma, seed, t, footprints[cam.id]))
        if args.dump_observations:
            for ev in evidence:
                observation_rows.append(
                    [tick, repr(t), "obstacle", ev.camera_id, ev.cell.col, ev.cell.row, int(ev.occupied)]
                )
            for det in tags:
                observation_rows.append(
                    [tick, repr(t), "tag", det.camera_id, repr(det.ground_position[0]), repr(det.ground_position[1]), det.tag_id]
                )

        detections_by_robot: dict[int, list] = {}
        tag_registry = server_map.tag_registry
        for det in sorted(tags, key=lambda d: (d.tag_id, d.camera_id)):
            detections_by_robot.setdefault(tag_registry.get(det.tag_id, det.tag_id), []).append(det)
        for robot in robots:
            if robot.id in beliefs:
                beliefs[robot.id] = fusion.ekf_predict(beliefs[robot.id], np.zeros(3), mm)
            for det in detections_by_robot.get(robot.id, []):
                z = np.array(fusion.tag_world_position(det, camera_poses[det.camera_id]))
                if robot.id not in beliefs:
                    beliefs[robot.id] = fusion.GaussianBelief(
                        np.array([z[0], z[1], 0.0]), np.diag([0.25, 0.25, 1.0])
                    )
                beliefs[robot.id] = fusion.ekf_update(beliefs[robot.id], z, om)
            if robot.id in beliefs:
                err = float(np.linalg.norm(beliefs[robot.id].mean[:2] - np.array([robot.x, robot.y])))
                report.localization_errors.append((tick, t, robot.id, err))

        fusion.fuse_frame(server_map, evidence, tags, camera_poses, t)

        if tick % broadcast_every == 0:
            for robot in robots:
                send(server.map_update_message(), robot.id, t)
                if robot.id in beliefs:
                    mean = beliefs[robot.id].mean
                    send(server.pose_message(robot.id, float(mean[0]), float(mean[1]), float(mean[2])), robot.id, t)

        if tick % upload_every == 0:
            for robot in robots:
                fragment = _robot_local_map(world, robot, args.sense_radius)
                fragment.revision = upload_seqs[robot.id] + 1
                msg = Message(
                    kind=MessageKind.SENSOR_UPLOAD,
                    seq=upload_seqs[robot.id],
                    sender_id=robot.id,
                    payload=netsim.encode_map_payload(fragment),
                )
                upload_seqs[robot.id] += 1
                send(msg, 0, t)

        handle_deliveries(netsim.network_step(net, t))

    # Quiescence: let in-flight traffic (and the ACKs it spawns) land.
    while net.pending():
        handle_deliveries(net.drain())

    matches = sum(
        1 for cell in covered if server_map.state(cell) == _ground_truth_state(world, cell)
    )
    report.map_accuracy = matches / len(covered) if covered else 1.0
    report.messages_sent = net.sent
    report.messages_delivered = net.delivered
    report.messages_dropped = net.dropped
    report.stale_updates = sum(c.stale_count for c in clients.values())
    report.uploads_merged = len(server._seen_uploads)
    report.server_revision = server_map.revision
    report.client_revisions = {
        rid: (c.grid_map.revision if c.grid_map is not None else 0) for rid, c in clients.items()
    }
    report.validate()
    return SimulationOutputs(
        report=report, server_map=server_map, capture=capture, observations=observation_rows
    )


def cmd_render(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "map.ppm").write_bytes(render_map(ground_truth_map(scenario.world)))
    print(f"wrote {out_dir / 'map.ppm'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ubimap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario document path")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default="ubimap_out", help="output directory")

    plan = sub.add_parser("plan", help="select camera placements")
    common(plan)
    plan.add_argument("--budget", type=int, default=None)
    plan.add_argument("--min-overlap", type=int, default=0)
    plan.add_argument("--max-overlap", type=int, default=None)
    plan.add_argument("--exact", action="store_true", help="exhaustive optimal search")
    plan.add_argument("--strict", action="store_true", help="exit 2 on overlap violations")
    plan.add_argument("--heatmap", action="store_true", help="write a coverage heatmap image")

    calibrate = sub.add_parser("calibrate", help="estimate camera extrinsics")
    common(calibrate)
    calibrate.add_argument("--noise-sigma", type=float, default=None)

    simulate = sub.add_parser("simulate", help="run the full pipeline")
    common(simulate)
    simulate.add_argument("--duration", type=float, default=2.0, help="simulated seconds")
    simulate.add_argument("--dt", type=float, default=0.1, help="tick length in seconds")
    simulate.add_argument("--noise-sigma", type=float, default=None)
    simulate.add_argument("--loss", type=float, default=None, help="override packet loss probability")
    simulate.add_argument("--latency-ms", type=float, default=None)
    simulate.add_argument("--jitter-ms", type=float, default=0.0)
    simulate.add_argument("--broadcast-ms", type=float, default=100.0)
    simulate.add_argument("--upload-ms", type=float, default=500.0)
    simulate.add_argument("--sense-radius", type=float, default=2.0)
    simulate.add_argument("--plan-budget", type=int, default=None, help="greedy-plan cameras before running")
    simulate.add_argument("--dump-observations", action="store_true", help="write raw observation streams as CSV")

    render = sub.add_parser("render", help="render the scenario ground truth")
    common(render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "plan": cmd_plan,
        "calibrate": cmd_calibrate,
        "simulate": cmd_simulate,
        "render": cmd_render,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps to exit codes
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

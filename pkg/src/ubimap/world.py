"""Ground-truth simulated environment: grid, walls, robots, cameras, landmarks.

Frame conventions:
    - World coordinates are meters, x to the right, y up (when drawn).
    - Cell (col, row) covers [col*cs, (col+1)*cs) x [row*cs, (row+1)*cs);
      its center is ((col+0.5)*cs, (row+0.5)*cs).
    - Camera yaw 0 points along +y; positive yaw rotates counter-clockwise.
      A camera's ground footprint is the rectangle x in [-w/2, w/2],
      y in [0, d] in its local ground frame, rotated by yaw about the
      camera's ground point.

Scenario documents are line-oriented ASCII: ``section <name>`` opens a block,
``end`` closes it, ``key = value`` pairs inside, ``#`` starts a comment.
Sections: world, walls, camera, robot, obstacle, landmark, sim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from .geom import Point3


class ScenarioError(ValueError):
    """Base class for scenario document problems."""


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ScenarioSemanticError(ScenarioError):
    pass


class CellIndex(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True)
class CameraSpec:
    """A fixed depth camera: ground position, mounting height, yaw and FOV."""

    id: int
    x: float
    y: float
    height: float
    yaw: float
    hfov: float
    vfov: float
    max_range: float

    def __post_init__(self) -> None:
        if self.height <= 0:
            raise ValueError(f"camera {self.id}: height must be > 0")
        if not 0 < self.hfov < math.pi:
            raise ValueError(f"camera {self.id}: hfov must be in (0, pi)")
        if not 0 < self.vfov < math.pi:
            raise ValueError(f"camera {self.id}: vfov must be in (0, pi)")
        if self.max_range <= 0:
            raise ValueError(f"camera {self.id}: max_range must be > 0")


@dataclass(frozen=True)
class GroundFootprint:
    """The ground rectangle a camera covers: width across, depth forward."""

    x: float
    y: float
    yaw: float
    depth: float
    width: float

    def contains(self, px: float, py: float) -> bool:
        lx, ly = self.to_local(px, py)
        return -self.width / 2 <= lx <= self.width / 2 and 0 <= ly <= self.depth

    def to_local(self, px: float, py: float) -> tuple[float, float]:
        """World point -> footprint-local ground frame (x lateral, y forward)."""
        dx, dy = px - self.x, py - self.y
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return c * dx + s * dy, -s * dx + c * dy

    def to_world(self, lx: float, ly: float) -> tuple[float, float]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return self.x + c * lx - s * ly, self.y + s * lx + c * ly


@dataclass(frozen=True)
class Robot:
    id: int
    x: float
    y: float
    theta: float
    tag: int


@dataclass(frozen=True)
class Obstacle:
    id: int
    cell: CellIndex


@dataclass(frozen=True)
class Landmark:
    id: int
    position: Point3


@dataclass(frozen=True)
class SimParams:
    seed: int = 0
    noise_sigma: float = 0.0
    net_latency_ms: float = 0.0
    net_loss: float = 0.0

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.net_latency_ms < 0:
            raise ValueError("net_latency_ms must be >= 0")
        if not 0.0 <= self.net_loss <= 1.0:
            raise ValueError("net_loss must be in [0, 1]")


@dataclass(frozen=True)
class GridWorld:
    """Immutable ground truth: dimensions, walls, and the entities on the grid."""

    cell_size: float
    width: int
    height: int
    walls: frozenset[CellIndex] = frozenset()
    obstacles: tuple[Obstacle, ...] = ()
    robots: tuple[Robot, ...] = ()
    landmarks: tuple[Landmark, ...] = ()

    def __post_init__(self) -> None:
        if self.cell_size <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("cell_size, width and height must be positive")
        for cell in self.walls:
            if not self.in_bounds(cell):
                raise ValueError(f"wall cell {cell} out of bounds")
        for ob in self.obstacles:
            if not self.in_bounds(ob.cell):
                raise ScenarioSemanticError(f"obstacle {ob.id} out of bounds")
            if ob.cell in self.walls:
                raise ScenarioSemanticError(f"obstacle {ob.id} placed on a wall cell")
        for robot in self.robots:
            if not self.point_in_bounds(robot.x, robot.y):
                raise ScenarioSemanticError(f"robot {robot.id} out of bounds")
            if self.cell_of(robot.x, robot.y) in self.walls:
                raise ScenarioSemanticError(f"robot {robot.id} placed on a wall cell")
        for lm in self.landmarks:
            if not self.point_in_bounds(lm.position.x, lm.position.y) or lm.position.z < 0:
                raise ScenarioSemanticError(f"landmark {lm.id} outside world bounds")

    # -- queries ----------------------------------------------------------

    def in_bounds(self, cell: CellIndex) -> bool:
        return 0 <= cell.col < self.width and 0 <= cell.row < self.height

    def point_in_bounds(self, x: float, y: float) -> bool:
        return 0 <= x <= self.width * self.cell_size and 0 <= y <= self.height * self.cell_size

    def cell_of(self, x: float, y: float) -> CellIndex:
        col = min(int(x // self.cell_size), self.width - 1)
        row = min(int(y // self.cell_size), self.height - 1)
        return CellIndex(max(col, 0), max(row, 0))

    def cell_center(self, cell: CellIndex) -> tuple[float, float]:
        return (cell.col + 0.5) * self.cell_size, (cell.row + 0.5) * self.cell_size

    def is_wall(self, cell: CellIndex) -> bool:
        return cell in self.walls

    def all_cells(self) -> Iterator[CellIndex]:
        for row in range(self.height):
            for col in range(self.width):
                yield CellIndex(col, row)

    def free_cells(self) -> Iterator[CellIndex]:
        for cell in self.all_cells():
            if cell not in self.walls:
                yield cell


@dataclass(frozen=True)
class Scenario:
    world: GridWorld
    cameras: tuple[CameraSpec, ...]
    params: SimParams = field(default_factory=SimParams)


def ground_footprint(cam: CameraSpec) -> GroundFootprint:
    """Project the camera's field of view onto the ground plane.

    Depth is the projected range h*tan(vfov/2), clamped by the sensor's
    max range; width is 2*h*tan(hfov/2).
    """
    depth = min(cam.height * math.tan(cam.vfov / 2.0), cam.max_range)
    width = 2.0 * cam.height * math.tan(cam.hfov / 2.0)
    return GroundFootprint(x=cam.x, y=cam.y, yaw=cam.yaw, depth=depth, width=width)


def covered_cells(cam: CameraSpec, world: GridWorld) -> set[CellIndex]:
    """Cells whose centers fall in the footprint and are not wall-occluded.

    Occlusion is a 2D ray cast at ground level against the static walls;
    obstacles and robots are transient and do not occlude.
    """
    if not world.point_in_bounds(cam.x, cam.y):
        raise ValueError(f"camera {cam.id} ground point outside world bounds")
    fp = ground_footprint(cam)
    out: set[CellIndex] = set()
    for cell in world.all_cells():
        cx, cy = world.cell_center(cell)
        if fp.contains(cx, cy) and line_of_sight(world, (cam.x, cam.y), (cx, cy)):
            out.add(cell)
    return out


def line_of_sight(world: GridWorld, a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True iff the open segment a->b crosses no wall cell.

    The cells containing the endpoints never block (a camera mounted over a
    wall cell can still see out of it, and a target is visible from within
    its own cell). Traversal is a supercover DDA: every cell the segment
    passes through is visited, and an exact corner crossing visits both
    side cells, so blocking is conservative.
    """
    if not (world.point_in_bounds(*a) and world.point_in_bounds(*b)):
        raise ValueError("line_of_sight endpoints must be inside world bounds")
    if a == b:
        return True
    exclude = {world.cell_of(*a), world.cell_of(*b)}
    for cell in _supercover_cells(world, a, b):
        if cell not in exclude and cell in world.walls:
            return False
    return True


def _supercover_cells(world: GridWorld, a: tuple[float, float], b: tuple[float, float]) -> Iterator[CellIndex]:
    cs = world.cell_size
    ax, ay = a[0] / cs, a[1] / cs
    bx, by = b[0] / cs, b[1] / cs
    col, row = world.cell_of(*a)
    end_col, end_row = world.cell_of(*b)
    dx, dy = bx - ax, by - ay
    step_col = 1 if dx > 0 else -1
    step_row = 1 if dy > 0 else -1
    # Parametric distance along the segment to the next grid line.
    t_max_x = ((col + (step_col > 0)) - ax) / dx if dx != 0 else math.inf
    t_max_y = ((row + (step_row > 0)) - ay) / dy if dy != 0 else math.inf
    t_delta_x = abs(1.0 / dx) if dx != 0 else math.inf
    t_delta_y = abs(1.0 / dy) if dy != 0 else math.inf

    yield CellIndex(col, row)
    guard = 2 * (world.width + world.height) + 4
    while (col, row) != (end_col, end_row) and guard > 0:
        guard -= 1
        if abs(t_max_x - t_max_y) < 1e-12:
            # Exact corner crossing: include both side cells, then the diagonal.
            side_a = CellIndex(col + step_col, row)
            side_b = CellIndex(col, row + step_row)
            if world.in_bounds(side_a):
                yield side_a
            if world.in_bounds(side_b):
                yield side_b
            col += step_col
            row += step_row
            t_max_x += t_delta_x
            t_max_y += t_delta_y
        elif t_max_x < t_max_y:
            col += step_col
            t_max_x += t_delta_x
        else:
            row += step_row
            t_max_y += t_delta_y
        if not (0 <= col < world.width and 0 <= row < world.height):
            return
        yield CellIndex(col, row)


# -- scenario document ----------------------------------------------------

_SECTION_KEYS = {
    "world": {"cell_size", "width", "height"},
    "camera": {"id", "x", "y", "h", "yaw_deg", "hfov_deg", "vfov_deg", "range"},
    "robot": {"id", "x", "y", "tag"},
    "obstacle": {"id", "x", "y"},
    "landmark": {"id", "x", "y", "z"},
    "sim": {"seed", "noise_sigma", "net_latency_ms", "net_loss"},
}
_REPEATABLE = {"camera", "robot", "obstacle", "landmark"}


def parse_scenario(document: str) -> Scenario:
    """Parse a scenario document into a world, camera list and sim parameters.

    Raises ScenarioSyntaxError (with line number) for grammar problems and
    ScenarioSemanticError for inconsistent content (robot on a wall, camera
    outside bounds, duplicate ids, ...).
    """
    try:
        document.encode("ascii")
    except UnicodeEncodeError as exc:
        raise ScenarioSyntaxError(0, f"document must be ASCII: {exc}") from None

    world_kv: dict[str, float] | None = None
    wall_rows: list[tuple[int, int, int, int]] = []  # (line_no, row, c0, c1)
    blocks: dict[str, list[tuple[int, dict[str, str]]]] = {name: [] for name in _REPEATABLE}
    sim_kv: dict[str, str] | None = None

    section: str | None = None
    section_line = 0
    current: dict[str, str] = {}

    def close_section() -> None:
        nonlocal world_kv, sim_kv
        if section == "world":
            world_kv = _convert_world(section_line, current)
        elif section == "sim":
            sim_kv = dict(current)
        elif section in _REPEATABLE:
            blocks[section].append((section_line, dict(current)))
        # walls lines are collected eagerly

    for line_no, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("section"):
            parts = line.split()
            if len(parts) != 2:
                raise ScenarioSyntaxError(line_no, "expected 'section <name>'")
            if section is not None:
                raise ScenarioSyntaxError(line_no, f"section '{section}' not closed before new section")
            name = parts[1]
            if name not in _SECTION_KEYS and name != "walls":
                raise ScenarioSyntaxError(line_no, f"unknown section '{name}'")
            if name == "world" and world_kv is not None:
                raise ScenarioSyntaxError(line_no, "duplicate 'world' section")
            if name == "sim" and sim_kv is not None:
                raise ScenarioSyntaxError(line_no, "duplicate 'sim' section")
            section = name
            section_line = line_no
            current = {}
        elif line == "end":
            if section is None:
                raise ScenarioSyntaxError(line_no, "'end' outside any section")
            close_section()
            section = None
        elif section == "walls":
            parts = line.split()
            if len(parts) != 3 or parts[0] != "row":
                raise ScenarioSyntaxError(line_no, "expected 'row <r> <colstart>..<colend>'")
            try:
                row = int(parts[1])
                c0_str, c1_str = parts[2].split("..", 1)
                c0, c1 = int(c0_str), int(c1_str)
            except ValueError:
                raise ScenarioSyntaxError(line_no, "expected 'row <r> <colstart>..<colend>'") from None
            if c1 < c0:
                raise ScenarioSyntaxError(line_no, "wall column range is reversed")
            wall_rows.append((line_no, row, c0, c1))
        elif section is not None:
            if "=" not in line:
                raise ScenarioSyntaxError(line_no, "expected 'key = value'")
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in _SECTION_KEYS[section]:
                raise ScenarioSyntaxError(line_no, f"unknown key '{key}' in section '{section}'")
            if key in current:
                raise ScenarioSyntaxError(line_no, f"duplicate key '{key}'")
            if not value:
                raise ScenarioSyntaxError(line_no, f"missing value for '{key}'")
            current[key] = value
        else:
            raise ScenarioSyntaxError(line_no, f"unexpected content outside a section: '{line}'")

    if section is not None:
        raise ScenarioSyntaxError(len(document.splitlines()), f"section '{section}' not closed")
    if world_kv is None:
        raise ScenarioSyntaxError(0, "missing required 'world' section")

    cell_size = world_kv["cell_size"]
    width, height = int(world_kv["width"]), int(world_kv["height"])

    walls: set[CellIndex] = set()
    for line_no, row, c0, c1 in wall_rows:
        if not (0 <= row < height and 0 <= c0 and c1 < width):
            raise ScenarioSemanticError(f"line {line_no}: wall row {row} cols {c0}..{c1} out of bounds")
        for col in range(c0, c1 + 1):
            walls.add(CellIndex(col, row))

    cameras = tuple(_convert_camera(ln, kv) for ln, kv in blocks["camera"])
    robots = tuple(_convert_robot(ln, kv) for ln, kv in blocks["robot"])
    obstacles = tuple(_convert_obstacle(ln, kv, cell_size) for ln, kv in blocks["obstacle"])
    landmarks = tuple(_convert_landmark(ln, kv) for ln, kv in blocks["landmark"])

    for kind, items in (("camera", cameras), ("robot", robots), ("obstacle", obstacles), ("landmark", landmarks)):
        ids = [item.id for item in items]
        if len(ids) != len(set(ids)):
            raise ScenarioSemanticError(f"duplicate {kind} ids")
    tags = [r.tag for r in robots]
    if len(tags) != len(set(tags)):
        raise ScenarioSemanticError("duplicate robot tags")

    world = GridWorld(
        cell_size=cell_size,
        width=width,
        height=height,
        walls=frozenset(walls),
        obstacles=obstacles,
        robots=robots,
        landmarks=landmarks,
    )
    for cam in cameras:
        if not world.point_in_bounds(cam.x, cam.y):
            raise ScenarioSemanticError(f"camera {cam.id} outside world bounds")

    params = _convert_sim(sim_kv) if sim_kv is not None else SimParams()
    return Scenario(world=world, cameras=cameras, params=params)


def serialize_scenario(scenario: Scenario) -> str:
    """Render a scenario back to document text; parse(serialize(s)) == s."""
    w = scenario.world
    lines = ["section world", f"  cell_size = {w.cell_size!r}", f"  width = {w.width}", f"  height = {w.height}", "end"]
    if w.walls:
        lines.append("section walls")
        by_row: dict[int, list[int]] = {}
        for cell in sorted(w.walls):
            by_row.setdefault(cell.row, []).append(cell.col)
        for row in sorted(by_row):
            cols = sorted(by_row[row])
            start = prev = cols[0]
            for col in cols[1:] + [None]:
                if col is not None and col == prev + 1:
                    prev = col
                    continue
                lines.append(f"  row {row} {start}..{prev}")
                if col is not None:
                    start = prev = col
        lines.append("end")
    for cam in scenario.cameras:
        lines += [
            "section camera",
            f"  id = {cam.id}",
            f"  x = {cam.x!r}",
            f"  y = {cam.y!r}",
            f"  h = {cam.height!r}",
            f"  yaw_deg = {math.degrees(cam.yaw)!r}",
            f"  hfov_deg = {math.degrees(cam.hfov)!r}",
            f"  vfov_deg = {math.degrees(cam.vfov)!r}",
            f"  range = {cam.max_range!r}",
            "end",
        ]
    for robot in w.robots:
        lines += [
            "section robot",
            f"  id = {robot.id}",
            f"  x = {robot.x!r}",
            f"  y = {robot.y!r}",
            f"  tag = {robot.tag}",
            "end",
        ]
    for ob in w.obstacles:
        ox = (ob.cell.col + 0.5) * w.cell_size
        oy = (ob.cell.row + 0.5) * w.cell_size
        lines += ["section obstacle", f"  id = {ob.id}", f"  x = {ox!r}", f"  y = {oy!r}", "end"]
    for lm in w.landmarks:
        lines += [
            "section landmark",
            f"  id = {lm.id}",
            f"  x = {lm.position.x!r}",
            f"  y = {lm.position.y!r}",
            f"  z = {lm.position.z!r}",
            "end",
        ]
    p = scenario.params
    lines += [
        "section sim",
        f"  seed = {p.seed}",
        f"  noise_sigma = {p.noise_sigma!r}",
        f"  net_latency_ms = {p.net_latency_ms!r}",
        f"  net_loss = {p.net_loss!r}",
        "end",
    ]
    return "\n".join(lines) + "\n"


def _parse_number(line_no: int, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ScenarioSyntaxError(line_no, f"'{key}' must be a number, got '{value}'") from None


def _parse_int(line_no: int, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioSyntaxError(line_no, f"'{key}' must be an integer, got '{value}'") from None


def _require(line_no: int, section: str, kv: dict[str, str], keys: set[str]) -> None:
    missing = keys - kv.keys()
    if missing:
        raise ScenarioSyntaxError(line_no, f"section '{section}' missing keys: {', '.join(sorted(missing))}")


def _convert_world(line_no: int, kv: dict[str, str]) -> dict[str, float]:
    _require(line_no, "world", kv, {"cell_size", "width", "height"})
    return {
        "cell_size": _parse_number(line_no, "cell_size", kv["cell_size"]),
        "width": _parse_int(line_no, "width", kv["width"]),
        "height": _parse_int(line_no, "height", kv["height"]),
    }


def _convert_camera(line_no: int, kv: dict[str, str]) -> CameraSpec:
    _require(line_no, "camera", kv, _SECTION_KEYS["camera"])
    try:
        return CameraSpec(
            id=_parse_int(line_no, "id", kv["id"]),
            x=_parse_number(line_no, "x", kv["x"]),
            y=_parse_number(line_no, "y", kv["y"]),
            height=_parse_number(line_no, "h", kv["h"]),
            yaw=math.radians(_parse_number(line_no, "yaw_deg", kv["yaw_deg"])),
            hfov=math.radians(_parse_number(line_no, "hfov_deg", kv["hfov_deg"])),
            vfov=math.radians(_parse_number(line_no, "vfov_deg", kv["vfov_deg"])),
            max_range=_parse_number(line_no, "range", kv["range"]),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioSemanticError(str(exc)) from None


def _convert_robot(line_no: int, kv: dict[str, str]) -> Robot:
    _require(line_no, "robot", kv, _SECTION_KEYS["robot"])
    return Robot(
        id=_parse_int(line_no, "id", kv["id"]),
        x=_parse_number(line_no, "x", kv["x"]),
        y=_parse_number(line_no, "y", kv["y"]),
        theta=0.0,
        tag=_parse_int(line_no, "tag", kv["tag"]),
    )


def _convert_obstacle(line_no: int, kv: dict[str, str], cell_size: float) -> Obstacle:
    _require(line_no, "obstacle", kv, _SECTION_KEYS["obstacle"])
    x = _parse_number(line_no, "x", kv["x"])
    y = _parse_number(line_no, "y", kv["y"])
    return Obstacle(id=_parse_int(line_no, "id", kv["id"]), cell=CellIndex(int(x // cell_size), int(y // cell_size)))


def _convert_landmark(line_no: int, kv: dict[str, str]) -> Landmark:
    _require(line_no, "landmark", kv, _SECTION_KEYS["landmark"])
    return Landmark(
        id=_parse_int(line_no, "id", kv["id"]),
        position=Point3(
            _parse_number(line_no, "x", kv["x"]),
            _parse_number(line_no, "y", kv["y"]),
            _parse_number(line_no, "z", kv["z"]),
        ),
    )


def _convert_sim(kv: dict[str, str]) -> SimParams:
    try:
        return SimParams(
            seed=int(kv.get("seed", "0")),
            noise_sigma=float(kv.get("noise_sigma", "0")),
            net_latency_ms=float(kv.get("net_latency_ms", "0")),
            net_loss=float(kv.get("net_loss", "0")),
        )
    except ValueError as exc:
        raise ScenarioSemanticError(f"bad sim parameters: {exc}") from None

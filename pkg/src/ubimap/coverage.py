"""Camera-placement optimization over the grid: greedy set cover + an
exhaustive oracle.

A placement problem fixes a candidate pool of cameras, a set of target
cells, per-cell overlap bounds [min_overlap, max_overlap] and a camera
budget. The objective is the number of distinct target cells covered; the
max-overlap bound is enforced as a hard constraint, while min_overlap is
reported as violations (and greedily repaired when budget remains), since
it exists to guarantee calibration overlap zones rather than coverage.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .world import CameraSpec, CellIndex, GridWorld, covered_cells


class ProblemTooLargeError(ValueError):
    """Exhaustive enumeration was asked for on an instance above its cap."""


@dataclass(frozen=True)
class CoverageProblem:
    world: GridWorld
    candidates: tuple[CameraSpec, ...]
    target_cells: frozenset[CellIndex] = field(default=None)  # type: ignore[assignment]
    min_overlap: int = 0
    max_overlap: int = 1_000_000
    budget: int = 1_000_000

    def __post_init__(self) -> None:
        if self.target_cells is None:
            object.__setattr__(self, "target_cells", frozenset(self.world.free_cells()))
        if self.min_overlap < 0:
            raise ValueError("min_overlap must be >= 0")
        if self.max_overlap < max(self.min_overlap, 1):
            raise ValueError("max_overlap must be >= max(min_overlap, 1)")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        ids = [cam.id for cam in self.candidates]
        if len(ids) != len(set(ids)):
            raise ValueError("candidate camera ids must be unique")


@dataclass(frozen=True)
class PlacementPlan:
    selected: tuple[int, ...]
    covered: frozenset[CellIndex]
    per_cell_multiplicity: dict[CellIndex, int]
    coverage_ratio: float
    violations: tuple[tuple[CellIndex, int], ...]


def total_coverage(selected: list[CameraSpec] | tuple[CameraSpec, ...], world: GridWorld) -> set[CellIndex]:
    """Union of the selected cameras' covered cells."""
    out: set[CellIndex] = set()
    for cam in selected:
        out |= covered_cells(cam, world)
    return out


def objective(plan: PlacementPlan, problem: CoverageProblem) -> int:
    """Distinct target cells covered: sum over cells of min(1, multiplicity)."""
    return len(plan.covered & problem.target_cells)


def check_overlap(plan: PlacementPlan, problem: CoverageProblem) -> list[tuple[CellIndex, int]]:
    """Target cells whose coverage multiplicity falls outside [m, k]."""
    out = []
    for cell in sorted(problem.target_cells):
        count = plan.per_cell_multiplicity.get(cell, 0)
        if count < problem.min_overlap or count > problem.max_overlap:
            out.append((cell, count))
    return out


def build_plan(problem: CoverageProblem, selected_ids: tuple[int, ...]) -> PlacementPlan:
    """Assemble a PlacementPlan for an explicit selection of candidate ids."""
    by_id = {cam.id: cam for cam in problem.candidates}
    cover_sets = [covered_cells(by_id[cid], problem.world) for cid in selected_ids]
    covered: set[CellIndex] = set().union(*cover_sets) if cover_sets else set()
    multiplicity: dict[CellIndex, int] = {}
    for cells in cover_sets:
        for cell in cells:
            multiplicity[cell] = multiplicity.get(cell, 0) + 1
    ratio = len(covered & problem.target_cells) / len(problem.target_cells) if problem.target_cells else 1.0
    plan = PlacementPlan(
        selected=tuple(selected_ids),
        covered=frozenset(covered),
        per_cell_multiplicity=multiplicity,
        coverage_ratio=ratio,
        violations=(),
    )
    return PlacementPlan(
        selected=plan.selected,
        covered=plan.covered,
        per_cell_multiplicity=plan.per_cell_multiplicity,
        coverage_ratio=plan.coverage_ratio,
        violations=tuple(check_overlap(plan, problem)),
    )


def _target_cover_sets(problem: CoverageProblem) -> dict[int, frozenset[CellIndex]]:
    return {
        cam.id: frozenset(covered_cells(cam, problem.world) & problem.target_cells)
        for cam in problem.candidates
    }


def _k_feasible(cover: frozenset[CellIndex], multiplicity: dict[CellIndex, int], k: int) -> bool:
    return all(multiplicity.get(cell, 0) + 1 <= k for cell in cover)


def plan_greedy(problem: CoverageProblem) -> PlacementPlan:
    """Greedy set cover: repeatedly add the candidate with the largest
    marginal coverage gain that keeps every target cell within max_overlap.

    Stops at the budget, at zero marginal gain, or at full target coverage.
    If min_overlap >= 1 and budget remains, a repair pass then adds the
    candidates that best reduce under-coverage. Deterministic: ties break
    toward the smaller candidate id.
    """
    if not problem.candidates:
        raise ValueError("plan_greedy requires a nonempty candidate pool")
    cover = _target_cover_sets(problem)
    ordered_ids = sorted(cover)
    selected: list[int] = []
    covered: set[CellIndex] = set()
    multiplicity: dict[CellIndex, int] = {}

    def select(cid: int) -> None:
        selected.append(cid)
        covered.update(cover[cid])
        for cell in cover[cid]:
            multiplicity[cell] = multiplicity.get(cell, 0) + 1

    while len(selected) < problem.budget and covered != problem.target_cells:
        best_id, best_gain = None, 0
        for cid in ordered_ids:
            if cid in selected:
                continue
            if not _k_feasible(cover[cid], multiplicity, problem.max_overlap):
                continue
            gain = len(cover[cid] - covered)
            if gain > best_gain:
                best_id, best_gain = cid, gain
        if best_id is None:
            break
        select(best_id)

    if problem.min_overlap >= 1:
        while len(selected) < problem.budget:
            deficit = {
                cell: problem.min_overlap - multiplicity.get(cell, 0)
                for cell in problem.target_cells
                if multiplicity.get(cell, 0) < problem.min_overlap
            }
            if not deficit:
                break
            best_id, best_fix = None, 0
            for cid in ordered_ids:
                if cid in selected:
                    continue
                if not _k_feasible(cover[cid], multiplicity, problem.max_overlap):
                    continue
                fix = sum(1 for cell in cover[cid] if cell in deficit)
                if fix > best_fix:
                    best_id, best_fix = cid, fix
            if best_id is None:
                break
            select(best_id)

    return build_plan(problem, tuple(selected))


def plan_exhaustive(problem: CoverageProblem) -> PlacementPlan:
    """Optimal plan by subset enumeration (the test oracle for greedy).

    Maximizes the objective over every subset within the budget that keeps
    all target-cell multiplicities <= max_overlap. Ties break toward fewer
    cameras, then the lexicographically smallest id tuple. Instances above
    20 candidates (2^20 subsets) are refused.
    """
    n = len(problem.candidates)
    if n > 20:
        raise ProblemTooLargeError(f"{n} candidates exceed the enumeration cap of 20")
    total = sum(math.comb(n, size) for size in range(min(problem.budget, n) + 1))
    if total > 2**20:
        raise ProblemTooLargeError(f"{total} subsets exceed the enumeration cap of 2^20")

    cover = _target_cover_sets(problem)
    ordered_ids = sorted(cover)
    best_ids: tuple[int, ...] = ()
    best_obj = -1
    for size in range(min(problem.budget, n) + 1):
        for combo in itertools.combinations(ordered_ids, size):
            multiplicity: dict[CellIndex, int] = {}
            feasible = True
            for cid in combo:
                for cell in cover[cid]:
                    multiplicity[cell] = multiplicity.get(cell, 0) + 1
                    if multiplicity[cell] > problem.max_overlap:
                        feasible = False
                        break
                if not feasible:
                    break
            if not feasible:
                continue
            obj = len(multiplicity)
            if obj > best_obj or (obj == best_obj and (len(combo), combo) < (len(best_ids), best_ids)):
                best_obj = obj
                best_ids = combo
    return build_plan(problem, best_ids)


def lattice_candidates(
    world: GridWorld,
    *,
    spacing_cells: int,
    height: float,
    hfov: float,
    vfov: float,
    max_range: float,
    first_id: int = 1,
) -> tuple[CameraSpec, ...]:
    """Candidate pool on a position lattice x 8 yaw angles (45 deg apart)."""
    cams = []
    next_id = first_id
    for row in range(0, world.height, spacing_cells):
        for col in range(0, world.width, spacing_cells):
            cx, cy = world.cell_center(CellIndex(col, row))
            for octant in range(8):
                cams.append(
                    CameraSpec(
                        id=next_id,
                        x=cx,
                        y=cy,
                        height=height,
                        yaw=octant * math.pi / 4.0,
                        hfov=hfov,
                        vfov=vfov,
                        max_range=max_range,
                    )
                )
                next_id += 1
    return tuple(cams)

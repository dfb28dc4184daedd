import math

import numpy as np
import pytest

from ubimap.coverage import (
    CoverageProblem,
    PlacementPlan,
    ProblemTooLargeError,
    build_plan,
    check_overlap,
    lattice_candidates,
    objective,
    plan_exhaustive,
    plan_greedy,
    total_coverage,
)
from ubimap.world import CameraSpec, CellIndex, GridWorld, covered_cells


def make_camera(x, y, *, width, depth, yaw=0.0, cid=1, height=2.0):
    hfov = 2.0 * math.atan(width / (2.0 * height))
    vfov = 2.0 * math.atan(depth / height)
    return CameraSpec(id=cid, x=x, y=y, height=height, yaw=yaw, hfov=hfov, vfov=vfov, max_range=100.0)


def trap_problem(budget=2, k=2):
    """Greedy trap: the 6-cell bait beats either 4-cell row camera, but the
    two row cameras together cover all 8 cells."""
    world = GridWorld(cell_size=1.0, width=4, height=2)
    p = make_camera(2.0, 1.0, width=4.0, depth=1.0, cid=1)
    q = make_camera(2.0, 0.0, width=4.0, depth=1.0, cid=2)
    r = make_camera(1.5, 0.0, width=3.0, depth=2.0, cid=3)
    return CoverageProblem(world=world, candidates=(p, q, r), max_overlap=k, budget=budget)


def test_total_coverage_empty_selection():
    world = GridWorld(cell_size=1.0, width=4, height=4)
    assert total_coverage([], world) == set()


def test_total_coverage_single_camera():
    world = GridWorld(cell_size=1.0, width=6, height=6)
    cam = make_camera(3.0, 2.0, width=2.0, depth=2.0)
    assert total_coverage([cam], world) == covered_cells(cam, world)


def test_total_coverage_disjoint_union():
    problem = trap_problem()
    p, q, _ = problem.candidates
    a = covered_cells(p, problem.world)
    b = covered_cells(q, problem.world)
    assert a & b == set()
    assert len(total_coverage([p, q], problem.world)) == len(a) + len(b)


def test_objective_full_coverage():
    world = GridWorld(cell_size=1.0, width=4, height=4)
    cam = make_camera(2.0, 0.0, width=4.0, depth=4.0, cid=1)
    problem = CoverageProblem(world=world, candidates=(cam,))
    plan = build_plan(problem, (1,))
    assert objective(plan, problem) == 16
    assert plan.coverage_ratio == 1.0


def test_objective_empty_plan():
    problem = trap_problem()
    plan = build_plan(problem, ())
    assert objective(plan, problem) == 0


def test_objective_counts_overlap_once():
    # Two cameras share 3 cells; the objective must match a per-cell
    # min(1, multiplicity) sum computed independently.
    problem = trap_problem(k=10)
    p, q, r = problem.candidates
    plan = build_plan(problem, (1, 3))
    per_cam = [covered_cells(p, problem.world), covered_cells(r, problem.world)]
    oracle = sum(
        min(1, sum(cell in cover for cover in per_cam)) for cell in problem.target_cells
    )
    assert objective(plan, problem) == oracle
    assert oracle < sum(len(cover) for cover in per_cam)  # overlap existed


def test_check_overlap_no_min_violations_when_m_zero():
    problem = trap_problem()
    plan = build_plan(problem, (1,))
    assert all(count > problem.max_overlap for _, count in check_overlap(plan, problem))


def test_check_overlap_empty_plan_violates_everywhere_when_m_one():
    world = GridWorld(cell_size=1.0, width=4, height=4)
    cam = make_camera(2.0, 0.0, width=4.0, depth=4.0, cid=1)
    problem = CoverageProblem(world=world, candidates=(cam,), min_overlap=1, max_overlap=2)
    plan = build_plan(problem, ())
    violations = check_overlap(plan, problem)
    assert len(violations) == 16
    assert all(count == 0 for _, count in violations)


def test_check_overlap_double_cover_with_k_one():
    world = GridWorld(cell_size=1.0, width=4, height=2)
    a = make_camera(2.0, 0.0, width=4.0, depth=2.0, cid=1)
    b = make_camera(2.0, 0.0, width=4.0, depth=2.0, cid=2)
    problem = CoverageProblem(world=world, candidates=(a, b), max_overlap=1)
    plan = build_plan(problem, (1, 2))
    violated = {cell for cell, count in check_overlap(plan, problem)}
    # Multiplicity histogram oracle: every cell covered twice is violated.
    histogram = {}
    for cam in (a, b):
        for cell in covered_cells(cam, world):
            histogram[cell] = histogram.get(cell, 0) + 1
    assert violated == {cell for cell, n in histogram.items() if n > 1}
    assert violated == covered_cells(a, world)


def test_plan_greedy_single_covering_candidate():
    world = GridWorld(cell_size=1.0, width=4, height=4)
    cam = make_camera(2.0, 0.0, width=4.0, depth=4.0, cid=5)
    problem = CoverageProblem(world=world, candidates=(cam,), budget=1)
    plan = plan_greedy(problem)
    assert plan.selected == (5,)
    assert plan.coverage_ratio == 1.0


def test_plan_greedy_selects_disjoint_halves():
    problem = trap_problem(budget=2)
    p, q, _ = problem.candidates
    restricted = CoverageProblem(
        world=problem.world, candidates=(p, q), max_overlap=2, budget=2
    )
    plan = plan_greedy(restricted)
    assert sorted(plan.selected) == [1, 2]
    assert plan.coverage_ratio == 1.0


def test_plan_greedy_respects_budget_and_cap():
    problem = trap_problem(budget=1, k=1)
    plan = plan_greedy(problem)
    assert len(plan.selected) <= 1
    assert all(count <= 1 for count in plan.per_cell_multiplicity.values())


def test_plan_greedy_repair_pass_fills_min_overlap():
    world = GridWorld(cell_size=1.0, width=4, height=2)
    top = make_camera(2.0, 1.0, width=4.0, depth=1.0, cid=1)
    bottom = make_camera(2.0, 0.0, width=4.0, depth=1.0, cid=2)
    both = make_camera(2.0, 0.0, width=4.0, depth=2.0, cid=3)
    problem = CoverageProblem(
        world=world, candidates=(top, bottom, both), min_overlap=2, max_overlap=3, budget=3
    )
    plan = plan_greedy(problem)
    assert len(plan.selected) == 3
    assert plan.violations == ()


def test_plan_greedy_reports_unmeetable_min_overlap():
    world = GridWorld(cell_size=1.0, width=4, height=2)
    top = make_camera(2.0, 1.0, width=4.0, depth=1.0, cid=1)
    problem = CoverageProblem(world=world, candidates=(top,), min_overlap=1, max_overlap=2, budget=2)
    plan = plan_greedy(problem)
    assert plan.selected == (1,)
    under = [cell for cell, count in plan.violations if count == 0]
    assert set(under) == {CellIndex(c, 0) for c in range(4)}


def test_plan_exhaustive_single_candidate():
    world = GridWorld(cell_size=1.0, width=4, height=4)
    cam = make_camera(2.0, 0.0, width=4.0, depth=4.0, cid=2)
    problem = CoverageProblem(world=world, candidates=(cam,), budget=3)
    assert plan_exhaustive(problem).selected == (2,)


def test_plan_exhaustive_redundant_copies_picks_one():
    world = GridWorld(cell_size=1.0, width=4, height=2)
    cams = tuple(make_camera(2.0, 0.0, width=4.0, depth=2.0, cid=i) for i in (3, 1, 2))
    problem = CoverageProblem(world=world, candidates=cams, max_overlap=1, budget=3)
    plan = plan_exhaustive(problem)
    assert plan.selected == (1,)


def test_plan_exhaustive_beats_greedy_on_trap():
    problem = trap_problem(budget=2, k=2)
    greedy = plan_greedy(problem)
    exact = plan_exhaustive(problem)
    assert objective(greedy, problem) == 7
    assert objective(exact, problem) == 8
    assert exact.selected == (1, 2)
    assert greedy.selected[0] == 3  # the 6-cell bait goes first


def test_plan_exhaustive_rejects_oversize_pool():
    world = GridWorld(cell_size=1.0, width=2, height=2)
    cams = tuple(make_camera(1.0, 0.0, width=2.0, depth=2.0, cid=i) for i in range(21))
    problem = CoverageProblem(world=world, candidates=cams)
    with pytest.raises(ProblemTooLargeError):
        plan_exhaustive(problem)


def random_problem(rng, *, max_candidates=8, max_budget=3):
    width = int(rng.integers(3, 7))
    height = int(rng.integers(3, 7))
    walls = set()
    if rng.random() < 0.5:
        row = int(rng.integers(1, height - 1))
        for col in range(int(rng.integers(1, width))):
            walls.add(CellIndex(col, row))
    world = GridWorld(cell_size=1.0, width=width, height=height, walls=frozenset(walls))
    n = int(rng.integers(2, max_candidates + 1))
    cams = []
    for cid in range(1, n + 1):
        cams.append(
            make_camera(
                float(rng.uniform(0.3, width - 0.3)),
                float(rng.uniform(0.3, height - 0.3)),
                width=float(rng.uniform(1.0, width)),
                depth=float(rng.uniform(1.0, height)),
                yaw=float(rng.choice([0, 0.5, 1.5, 3.0, 4.5])),
                cid=cid,
            )
        )
    k = int(rng.choice([2, 3, n]))
    budget = int(rng.integers(1, max_budget + 1))
    return CoverageProblem(world=world, candidates=tuple(cams), max_overlap=k, budget=budget)


def test_greedy_bound_against_exhaustive_randomized():
    rng = np.random.default_rng(2024)
    bound = 1.0 - 1.0 / math.e
    for _ in range(30):
        problem = random_problem(rng)
        greedy_obj = objective(plan_greedy(problem), problem)
        exact_obj = objective(plan_exhaustive(problem), problem)
        assert exact_obj >= greedy_obj
        assert greedy_obj >= bound * exact_obj - 1e-12


def test_exhaustive_monotone_in_candidate_pool():
    rng = np.random.default_rng(99)
    for _ in range(10):
        problem = random_problem(rng, max_candidates=5)
        extra = make_camera(1.0, 1.0, width=2.0, depth=2.0, cid=100)
        bigger = CoverageProblem(
            world=problem.world,
            candidates=problem.candidates + (extra,),
            max_overlap=problem.max_overlap,
            budget=problem.budget,
        )
        assert objective(plan_exhaustive(bigger), bigger) >= objective(
            plan_exhaustive(problem), problem
        )


def test_greedy_never_exceeds_budget_or_cap_randomized():
    rng = np.random.default_rng(7)
    for _ in range(20):
        problem = random_problem(rng)
        plan = plan_greedy(problem)
        assert len(plan.selected) <= problem.budget
        target_mult = {
            cell: count
            for cell, count in plan.per_cell_multiplicity.items()
            if cell in problem.target_cells
        }
        assert all(count <= problem.max_overlap for count in target_mult.values())


def test_lattice_candidates_eight_yaws_per_site():
    world = GridWorld(cell_size=1.0, width=4, height=4)
    cams = lattice_candidates(
        world, spacing_cells=2, height=2.0, hfov=math.radians(90), vfov=math.radians(60), max_range=5.0
    )
    assert len(cams) == 4 * 8
    yaws = {round(cam.yaw, 9) for cam in cams}
    assert len(yaws) == 8
    assert len({cam.id for cam in cams}) == len(cams)

"""Field partitioning: evolve Voronoi seed points into fleet-sized sub-areas.

A chromosome is a set of n seed points inside the field; the induced clipped
Voronoi cells are scored on area balance, roundness and maximum perimeter.
The returned partition satisfies the fleet's per-charge area cap and the
communication-radius rule, increasing n until both hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import FleetSpec, GAParams, PartitionWeights
from .errors import InfeasibleError, InvalidGeometryError
from .geometry import PolygonWithHoles, min_enclosing_circle, polygon_area, voronoi_cell_pieces


@dataclass
class Partition:
    """Clipped Voronoi cells tiling the field, with the GA bookkeeping."""

    cells: list[PolygonWithHoles]
    seed_of_cell: list[int]
    seeds: np.ndarray
    fitness: float
    history: list[float] = field(default_factory=list)

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)


def required_subarea_count(area_rho: float, k: int, a_max: float) -> int:
    """ceil(area / (k * a_max)): sub-areas needed so one charge covers each."""
    if area_rho <= 0 or k <= 0 or a_max <= 0:
        raise ValueError("area, fleet size and per-UAV area must all be positive")
    return max(1, math.ceil(area_rho / (k * a_max)))


def _fitness_terms(cells: list[PolygonWithHoles], epsilon: float) -> tuple[float, float, float]:
    areas = np.array([c.area for c in cells])
    perims = np.array([c.perimeter for c in cells])
    t_area = 1.0 / (float(np.var(areas)) + epsilon)
    t_round = float(np.mean(perims)) ** 2 / (float(np.var(perims)) + epsilon)
    t_perim = 1.0 / float(perims.max())
    return t_area, t_round, t_perim


def partition_fitness(cells: list[PolygonWithHoles], w: PartitionWeights) -> float:
    """w1/(var(A)+eps) + w2*mean(C)^2/(var(C)+eps) + w3/max(C); higher is better."""
    if not cells:
        raise ValueError("fitness needs at least one cell")
    t_area, t_round, t_perim = _fitness_terms(cells, w.epsilon)
    return w.w_area * t_area + w.w_roundness * t_round + w.w_perimeter * t_perim


def _chrom_rng(rng_seed: int, generation: int, index: int) -> np.random.Generator:
    # per-chromosome stream so serial and fanned-out evaluation agree
    return np.random.default_rng(np.random.SeedSequence((rng_seed, generation, index)))


def _sort_seeds(seeds: np.ndarray) -> np.ndarray:
    order = np.lexsort((seeds[:, 1], seeds[:, 0]))
    return seeds[order]


def _repair(seeds: np.ndarray, rho: PolygonWithHoles, rng: np.random.Generator) -> np.ndarray:
    """Jitter coincident seeds and resample any that escaped the field."""
    seeds = seeds.copy()
    outside = ~rho.contains_points(seeds)
    if outside.any():
        seeds[outside] = rho.sample_interior(rng, int(outside.sum()))
    for i in range(len(seeds)):
        for j in range(i):
            if np.linalg.norm(seeds[i] - seeds[j]) < 1e-6:
                for _ in range(50):
                    cand = seeds[i] + rng.normal(0.0, 1e-3, size=2)
                    if rho.contains_point(cand):
                        seeds[i] = cand
                        break
                if np.linalg.norm(seeds[i] - seeds[j]) < 1e-9:
                    seeds[i] = rho.sample_interior(rng, 1)[0]
    return seeds


def _evaluate(seeds: np.ndarray, rho: PolygonWithHoles, eps: float):
    pieces = voronoi_cell_pieces(seeds, rho)
    cells = [c for _, c in pieces]
    owners = [i for i, _ in pieces]
    return cells, owners, _fitness_terms(cells, eps)


def evolve_partition(
    rho: PolygonWithHoles,
    n: int,
    w: PartitionWeights,
    ga: GAParams,
    rng_seed: int,
) -> Partition:
    """Best partition of ``rho`` into ``n`` Voronoi cells after ``ga`` generations.

    Deterministic for a fixed ``rng_seed``. Internally each fitness term is
    normalised by its value in the best chromosome of the initial population
    so the three terms contribute on comparable scales; the reported
    ``Partition.fitness`` is the raw weighted fitness.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    polygon_area(rho)  # validates rho
    if n == 1:
        cells = [rho]
        seeds = rho.sample_interior(_chrom_rng(rng_seed, 0, 0), 1)
        fit = partition_fitness(cells, w)
        return Partition(cells=cells, seed_of_cell=[0], seeds=seeds, fitness=fit, history=[fit])

    x0, y0, x1, y1 = rho.bounds
    sigma = ga.mutation_sigma_frac * math.hypot(x1 - x0, y1 - y0)
    weights = np.array([w.w_area, w.w_roundness, w.w_perimeter])

    pop = []
    for i in range(ga.population):
        rng = _chrom_rng(rng_seed, 0, i)
        pop.append(_sort_seeds(_repair(rho.sample_interior(rng, n), rho, rng)))

    evals = [_evaluate(s, rho, w.epsilon) for s in pop]
    raw = np.array([weights @ terms for _, _, terms in evals])
    best0 = int(raw.argmax())
    # term normalisers from the initial best chromosome
    ref = np.array([t if t > 0 else 1.0 for t in evals[best0][2]])

    def score(terms) -> float:
        return float(weights @ (np.asarray(terms) / ref))

    scores = np.array([score(t) for _, _, t in evals])
    order = np.argsort(-scores, kind="stable")
    pop = [pop[i] for i in order]
    evals = [evals[i] for i in order]
    scores = scores[order]
    history = [float(scores[0])]

    elite = ga.elite_count
    for gen in range(1, ga.generations + 1):
        children = []
        for j in range(ga.population - elite):
            rng = _chrom_rng(rng_seed, gen, j)
            # tournament selection (size ga.tournament_size) on the sorted population
            idx = [int(min(rng.integers(0, ga.population, size=ga.tournament_size))) for _ in range(2)]
            pa, pb = pop[idx[0]], pop[idx[1]]
            lam = rng.uniform(0.0, 1.0, size=(n, 1))
            child = lam * pa + (1.0 - lam) * pb
            mutate = rng.uniform(size=n) < ga.mutation_rate
            for m in np.flatnonzero(mutate):
                for _ in range(20):
                    cand = child[m] + rng.normal(0.0, sigma, size=2)
                    if rho.contains_point(cand):
                        child[m] = cand
                        break
            children.append(_sort_seeds(_repair(child, rho, rng)))

        child_evals = [_evaluate(s, rho, w.epsilon) for s in children]
        child_scores = np.array([score(t) for _, _, t in child_evals])
        pop = pop[:elite] + children
        evals = evals[:elite] + child_evals
        scores = np.concatenate([scores[:elite], child_scores])
        order = np.argsort(-scores, kind="stable")
        pop = [pop[i] for i in order]
        evals = [evals[i] for i in order]
        scores = scores[order]
        assert scores[0] >= history[-1] - 1e-12, "elitism must not lose the best chromosome"
        history.append(float(scores[0]))
        if ga.stall_generations and len(history) > ga.stall_generations:
            if history[-1] - history[-1 - ga.stall_generations] <= 1e-12:
                break

    cells, owners, terms = evals[0]
    return Partition(
        cells=cells,
        seed_of_cell=owners,
        seeds=pop[0],
        fitness=float(weights @ terms),
        history=history,
    )


def _cell_violation(cell: PolygonWithHoles, fleet: FleetSpec, battery_margin: float) -> str | None:
    cap = fleet.k * fleet.area_per_uav_m2
    if cell.area > cap * (1 + 1e-9):
        return f"cell area {cell.area:.0f} m2 exceeds fleet per-charge cap {cap:.0f} m2"
    _, radius = min_enclosing_circle(cell.outer)
    if radius > fleet.comm_radius_m * (1 + 1e-9):
        return (
            f"cell needs communication radius {radius:.0f} m "
            f"> limit {fleet.comm_radius_m:.0f} m"
        )
    # trail-length estimate: contour spacing w sweeps ~area/w metres of path
    est = cell.area / fleet.coverage_width_m
    if est > battery_margin * fleet.k * fleet.battery_distance_m:
        return (
            f"estimated trail length {est:.0f} m exceeds "
            f"{battery_margin:.0%} of the fleet distance budget"
        )
    return None


def partition_with_feasibility(
    rho: PolygonWithHoles,
    fleet: FleetSpec,
    w: PartitionWeights,
    ga: GAParams,
    rng_seed: int,
    n_override: int | None = None,
    battery_margin: float = 0.95,
) -> Partition:
    """Partition sized for the fleet; n grows until every cell is feasible.

    Feasibility per cell: area <= k * A_max, the minimum enclosing circle fits
    the communication radius, and the rough trail-length estimate leaves
    battery headroom. Raises InfeasibleError when 4x the initial count still
    violates a constraint.
    """
    n0 = n_override or required_subarea_count(polygon_area(rho), fleet.k, fleet.area_per_uav_m2)
    last_violation = ""
    for n in range(n0, 4 * n0 + 1):
        sub_seed = int(np.random.SeedSequence((rng_seed, n)).generate_state(1)[0])
        part = evolve_partition(rho, n, w, ga, sub_seed)
        violations = [_cell_violation(c, fleet, battery_margin) for c in part.cells]
        bad = [v for v in violations if v]
        if not bad:
            return part
        last_violation = bad[0]
    raise InfeasibleError(
        f"no feasible partition up to {4 * n0} sub-areas: {last_violation}",
        stage="partition",
        constraint=last_violation,
    )

"""Coverage mission planning for UAV fleets supported by a ground vehicle."""

from .config import FleetSpec, GAParams, MiqpBudget, PartitionWeights, PlannerConfig, load_config
from .errors import (
    ConfigError,
    FleetcoverError,
    InfeasibleError,
    InvalidGeometryError,
    MapLoadError,
)
from .fieldmap import FieldMap, load_map, save_map
from .geometry import (
    Point,
    PolygonWithHoles,
    SegmentHalfspaces,
    mitered_offset,
    polygon_area,
    segment_to_halfspaces,
    voronoi_cells,
)
from .partition import (
    Partition,
    evolve_partition,
    partition_fitness,
    partition_with_feasibility,
    required_subarea_count,
)
from .assignment import TrailAssignment, decode, encode, evaluate_fitness, mvrp_solve, rkga_run
from .access_opt import (
    DisjunctionConstraint,
    FullMiqpPlan,
    MiqpProblem,
    MiqpSolution,
    build_reduced_miqp,
    qp_relax,
    solve_full_miqp,
    solve_miqp,
)
from .routing import CarPlan, RoadGraph, atsp_order, build_intersubarea_costs, select_car_spots, shortest_path
from .trails import PathMetrics, Trail, generate_trails, generate_zigzag, path_metrics
from .pipeline import MissionPlan, SubareaPlan, ValidationReport, plan_mission, validate_mission
from .render import render_svg

__version__ = "0.1.0"

"""2D indoor-exploration workbench: pathwise information-gain planning over
predicted occupancy maps, with baselines, a simulator and a benchmark harness."""

from .grids import (
    CellState,
    GridGeometry,
    GroundTruthGrid,
    ObservedGrid,
    Pose,
    PredictedGrid,
    UncertaintyGrid,
    known_fraction,
    update_from_scan,
)
from .geometry import (
    RayFan,
    VisPolygon,
    VisibilityMask,
    draw_polygon,
    extract_holes,
    path_visibility_mask,
    path_visibility_mask_oracle,
    point_visibility_mask,
    polygon_union,
    rasterize_mask,
    raycast_ground_truth,
    raycast_observed,
    raycast_probabilistic,
)
from .frontiers import Frontier, extract_frontiers
from .pathing import GridPath, astar, sample_path
from .predictors import PredictionEnsemble, PredictorConfig, external_predict, predict
from .planners import PlannerConfig, PlannerInput, FrontierScore, select
from .simulate import SimConfig, SimState, run, step
from .metrics import ExperimentRecord, aggregate, auc, buffered_iou, time_to_threshold
from .worlds import (
    FloorplanSpec,
    generate_floorplan,
    load_graymap,
    rasterize_floorplan,
    sample_free_poses,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

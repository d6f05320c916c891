"""radvote: radial (and competing) keypoint voting for 6-DoF pose estimation
in RGB-D data -- ground-truth vote maps, 3D accumulator voting, closed-form
pose recovery, ICP refinement, and the benchmark experiment suite."""

from .accumulator import (
    AccumulatorGrid,
    PeakResult,
    VoteStats,
    build_grid,
    cast_offset_vote,
    cast_ray_vote,
    cast_sphere_vote,
    cast_votes,
    dump_grid,
    find_peak,
    load_grid,
    merge_grids,
)
from .geometry import (
    CameraIntrinsics,
    KeypointSet,
    Pixel,
    PointCloud,
    RigidTransform,
    SelectionMethod,
    backproject,
    bbox_keypoints,
    choose_corner_subset,
    disperse_keypoints,
    fps_keypoints,
    horn_solve,
    icp_refine,
    object_radius,
    project,
)
from .pipeline import (
    EvalReport,
    PoseEstimate,
    accuracy_at_threshold,
    add_metric,
    adds_metric,
    auc_metric,
    estimate_keypoints,
    recover_pose,
)
from .votemaps import (
    DepthFrame,
    NoiseKind,
    NoiseSpec,
    SchemeKind,
    VoteMap,
    apply_noise,
    compute_scheme_value,
    generate_gt_maps,
    loss_m1,
    loss_s,
    render_depth,
)

__version__ = "0.1.0"

"""boundvol: Monte Carlo measurement of classifier decision-boundary
neighbourhood volumes, with from-scratch network training and a
high-dimensional geometry diagnostics suite."""

from .attack import (
    AttackConfig,
    AttackOutcome,
    BoundaryPoint,
    bisect_boundary_point,
    fgsm_step,
    min_flip_epsilon,
    sample_class_pairs,
)
from .data import Dataset, load_cifar10, load_idx, make_synthetic, subset_split
from .geometry import (
    RatioMoments,
    SpreadStats,
    TubeSpec,
    chebyshev_tail,
    cube_overlap_bound,
    min_pairwise_stats,
    orthogonality_capacity,
    orthogonality_trial,
    ratio_expectation,
    ratio_moments,
    relative_spread,
    simulate_ratio,
    weyl_tube_volume,
)
from .layers import LayerSpec, ShapeMismatchError
from .network import (
    Network,
    build_network,
    checkpoint_load,
    checkpoint_save,
    forward,
    init_he_normal,
    loss_and_input_grad,
    predict,
)
from .oracles import HalfspaceOracle, SphereOracle, oracle_classifier
from .training import DropoutConfig, TrainConfig, train
from .volume import (
    RegionSpec,
    VolumeEstimate,
    ball_union,
    clt_halfwidth,
    epsilon_sweep,
    estimate_bvol,
    hoeffding_tail,
    run_bvol,
    run_ladv_bvol,
    run_train_bvol,
    sample_region,
    unit_cube,
)

__version__ = "0.1.0"

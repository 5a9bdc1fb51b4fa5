"""ripplekit: co-activation-aware neuron placement for flash offload.

The toolkit learns which neuron bundles of a sparse model layer tend to
activate together, orders them in flash so co-activated bundles become
contiguous reads, and replays activation traces through a parameterized
flash cost model (with online read collapse and a run-aware DRAM cache) to
measure what the layout buys.
"""

from .access import (
    CollapseConfig,
    PlannerState,
    analytic_threshold,
    build_extents,
    collapse,
    default_collapse_config,
    initial_planner_state,
    plan_token,
)
from .cache import CacheConfig, NeuronCache, classify_runs
from .errors import (
    CacheCapacityError,
    CalibrationError,
    ConfigError,
    DegenerateStatsError,
    FileFormatError,
    InvalidPairError,
    RippleKitError,
    SizeLimitError,
    TraceFormatError,
)
from .estimator import NeuronPlacer
from .flashsim import (
    CalibrationResult,
    EMPTY_PLAN,
    FlashModel,
    IoReport,
    PROFILE_PRESETS,
    ReadPlan,
    calibrate_from_curve,
    is_iops_bound,
    load_profile,
    save_profile,
    simulate,
    single_extent_bandwidth,
)
from .harness import (
    ExperimentSpec,
    RunReport,
    compare,
    run_experiment,
    write_report_csv,
    write_report_json,
)
from .placement import (
    IoCostEstimate,
    Placement,
    brute_force_optimal,
    count_extents,
    evaluate_expected_ops,
    greedy_search,
    identity_placement,
    link_distance,
    load_placement,
    neuron_distance,
    placement_cost,
    save_placement,
    shuffled_placement,
)
from .stats import (
    CoActivationStats,
    extract_stats,
    load_stats,
    merge_stats,
    prob_pair,
    prob_single,
    save_stats,
)
from .trace import (
    LayerTrace,
    SyntheticTraceSpec,
    cluster_partition,
    generate_clustered_trace,
    read_trace,
    trace_digest,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "CacheCapacityError",
    "CacheConfig",
    "CalibrationError",
    "CalibrationResult",
    "CoActivationStats",
    "CollapseConfig",
    "ConfigError",
    "DegenerateStatsError",
    "EMPTY_PLAN",
    "ExperimentSpec",
    "FileFormatError",
    "FlashModel",
    "InvalidPairError",
    "IoCostEstimate",
    "IoReport",
    "LayerTrace",
    "NeuronCache",
    "NeuronPlacer",
    "PROFILE_PRESETS",
    "Placement",
    "PlannerState",
    "ReadPlan",
    "RippleKitError",
    "RunReport",
    "SizeLimitError",
    "SyntheticTraceSpec",
    "TraceFormatError",
    "analytic_threshold",
    "brute_force_optimal",
    "build_extents",
    "calibrate_from_curve",
    "classify_runs",
    "cluster_partition",
    "collapse",
    "compare",
    "count_extents",
    "default_collapse_config",
    "evaluate_expected_ops",
    "extract_stats",
    "generate_clustered_trace",
    "greedy_search",
    "identity_placement",
    "initial_planner_state",
    "is_iops_bound",
    "link_distance",
    "load_placement",
    "load_profile",
    "load_stats",
    "merge_stats",
    "neuron_distance",
    "placement_cost",
    "plan_token",
    "prob_pair",
    "prob_single",
    "read_trace",
    "run_experiment",
    "save_placement",
    "save_profile",
    "save_stats",
    "shuffled_placement",
    "simulate",
    "single_extent_bandwidth",
    "trace_digest",
    "write_report_csv",
    "write_report_json",
    "write_trace",
]

"""chorusloc: concurrent narrowband-ultrasound multi-target locating, end to end.

Simulates targets that ping in shared time slots, receivers that lose
wavefronts to transducer aftershock, and the pipeline that turns the
resulting anonymous distances back into labeled trajectories: masking
geometry, detectability predicates, coverage bounds, consistency-based
candidate generation, track filtering, and separation-aware slot
scheduling.
"""

from .detection import (
    ArrivalEvent,
    DetectedToa,
    multi_detectable,
    pairwise_detectable,
    simulate_comparator,
)
from .feasibility import (
    DeploymentModel,
    empirical_prob_three_receivers,
    prob_three_receivers_lb,
    solve_separation_distance,
    symmetric_union_blind_area,
    tdr_lower_bound_area,
)
from .geometry import (
    AcousticParams,
    BlindRegionParams,
    Point2D,
    blind_region_area,
    blind_region_contains,
    blind_region_params,
    distance,
    monte_carlo_blind_area,
)
from .harness import (
    ChorusPipeline,
    EstimateRow,
    ExperimentPreset,
    MetricsReport,
    RunArtifacts,
    compute_efficiency,
    compute_error_cdf,
    make_preset,
    quantile_summary,
    replay,
    run_experiment,
    run_sweep,
    write_artifacts,
)
from .locating import (
    CandidatePosition,
    DegenerateGeometryError,
    LabeledDistance,
    LocatorConfig,
    generate_candidates,
    label_distances,
    self_consistency,
    trilaterate,
)
from .scenario import (
    AnonymousDistanceSet,
    GroundTruth,
    MotionState,
    ScenarioConfig,
    build_receivers,
    init_motion,
    measure_slot,
    step_motion,
)
from .scheduling import SlotSchedule, build_schedule, divide_closest_targets
from .tracking import (
    FilterStepResult,
    MotionPdf,
    OpCounter,
    Particle,
    TargetTracker,
    Track,
    evaluate_likelihood,
    filter_step,
    update_pdf,
)

__version__ = "0.1.0"

__all__ = [
    "AcousticParams",
    "AnonymousDistanceSet",
    "ArrivalEvent",
    "BlindRegionParams",
    "CandidatePosition",
    "ChorusPipeline",
    "DegenerateGeometryError",
    "DeploymentModel",
    "DetectedToa",
    "EstimateRow",
    "ExperimentPreset",
    "FilterStepResult",
    "GroundTruth",
    "LabeledDistance",
    "LocatorConfig",
    "MetricsReport",
    "MotionPdf",
    "MotionState",
    "OpCounter",
    "Particle",
    "Point2D",
    "RunArtifacts",
    "ScenarioConfig",
    "SlotSchedule",
    "TargetTracker",
    "Track",
    "blind_region_area",
    "blind_region_contains",
    "blind_region_params",
    "build_receivers",
    "build_schedule",
    "compute_efficiency",
    "compute_error_cdf",
    "distance",
    "divide_closest_targets",
    "empirical_prob_three_receivers",
    "evaluate_likelihood",
    "filter_step",
    "generate_candidates",
    "init_motion",
    "label_distances",
    "make_preset",
    "measure_slot",
    "monte_carlo_blind_area",
    "multi_detectable",
    "pairwise_detectable",
    "prob_three_receivers_lb",
    "quantile_summary",
    "replay",
    "run_experiment",
    "run_sweep",
    "self_consistency",
    "simulate_comparator",
    "solve_separation_distance",
    "step_motion",
    "symmetric_union_blind_area",
    "tdr_lower_bound_area",
    "trilaterate",
    "update_pdf",
    "write_artifacts",
]

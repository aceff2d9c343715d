"""Bandwidth minimization for deadline-constrained token-bucket flows via
traffic reprofiling, under FIFO and static-priority scheduling."""

from .curves import (
    ConcaveCurve,
    InvalidPeakRateError,
    Reprofiler,
    TokenBucketProfile,
    curve_sum,
    horizontal_deviation,
    make_2src_curve,
    make_token_bucket_curve,
    shaping_delay,
    shift_left,
    sup_ratio,
)
from .network import (
    FlowSpec,
    Scenario,
    Scheduler,
    Topology,
    flows_on_link,
    load_scenario,
    max_shaping_delay,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)
from .provision import (
    InflectionPoint,
    LinkClassState,
    PriorityAssignment,
    class_bandwidth,
    inflection_points,
    link_bandwidth,
    minimal_service_function,
    slacks,
)
from .fifo import (
    FifoSolution,
    Ordering,
    fs_solve,
    nlp_closed_form_bandwidth,
    nlp_solve_for_ordering,
    ns_solve,
    randomized_search,
)
from .staticprio import (
    GammaSchedule,
    SpSolution,
    adjustment,
    greedy_reprofiling,
    kmeans_assign,
    reduce_class_deadline,
    shaping_ratio_report,
    sp_fs_solve,
    sp_ns_solve,
)

__version__ = "0.1.0"

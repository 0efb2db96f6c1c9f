"""Hilbert distance versus centro-affine length: sharp bounds, Bellman functions, optimal controls."""

from .errors import CubicFormUndefined, DomainError, InadmissibleProfileError, IntegrationFault
from .projective import SegmentChart, cross_ratio, hilbert_distance, t_param_distance, tanh_chart_point
from .centroaffine import (
    AnalyticProfile,
    CubicBound,
    ImmersionProfile,
    SampledProfile,
    check_admissible,
    cubic_form,
    metric_h,
    mu_from_gamma,
    riemann_length,
    state_bounds_check,
)
from .bounds import (
    blaschke_bound,
    blaschke_corollary_bounds,
    bound_curve,
    delta,
    thm1_upper,
    thm2_relaxed,
    thm2_upper,
    thm3_lower,
    thm3_relaxed,
    thm4_geodesic_bounds,
)
from .bellman import bellman_free, bellman_max, bellman_min, maximal_B, minimal_B, verify_bellman
from .control import (
    ControlState,
    Trajectory,
    dynamics,
    first_integral,
    integrate,
    profile_from_trajectory,
    random_admissible_profile,
    synthesize_max_fixed_start,
    synthesize_max_free,
    synthesize_min_fixed_start,
    synthesize_min_free,
)

__version__ = "0.1.0"

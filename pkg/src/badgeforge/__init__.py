"""Badge mechanisms for users who value their rank among peers."""

from .abilities import (
    AbilityDistribution,
    Custom,
    EmpiricalQuantile,
    LongTail,
    Mixture,
    PopulationMix,
    Power,
    RegularityReport,
    Uniform01,
    aggregate,
    check_regularity,
    monopoly_quantile,
    revenue_at,
    value_at,
    value_derivative,
    virtual_at,
)
from .exceptions import (
    BadgeForgeError,
    ConfigError,
    DivisionDegenerate,
    DomainError,
    NoBracket,
    NonConvergence,
    NotRegular,
    OutOfRange,
    ShapeMismatch,
    SummationOverflow,
    TooLarge,
    UnsupportedBeta,
)
from .mechanisms import (
    AbsoluteThreshold,
    ContributionThresholds,
    EquilibriumSolution,
    Leaderboard,
    Mechanism,
    OptimalLeaderboardCutoff,
    QuantileThresholds,
    Setting,
    absolute_contribution,
    add_badge_delta,
    approximation_ratio,
    best_single_badge,
    construct_concave_m,
    construct_convex_logH,
    construct_linear_m,
    construct_median,
    construct_single_improved,
    leaderboard_bid,
    leaderboard_contribution,
    linear_optimal_contribution,
    mechanism_contribution,
    optimal_bid,
    optimal_contribution,
    optimal_cutoff,
    quantiles_from_thresholds,
    thresholds_from_quantiles,
)
from .numerics import DEFAULT_TOL, Tolerance, bernstein_weights, binomial_expect, find_all_roots, find_root, integrate
from .status import (
    LARGE,
    BetaStatus,
    ConcavePower,
    ConvexReciprocal,
    CustomStatus,
    InterimStatus,
    Linear,
    StatusFunction,
    beta_interim_single,
    classify_shape,
    interim_status,
    interim_status_inverse,
    parse_n,
    status_at,
)
from .tiebreak import (
    MedianTieBreak,
    OptimalTieBreak,
    TieBreakModel,
    everyone_wins_single_badge,
    leaderboard_tiebreak_contribution,
    median_tiebreak_contribution,
    optimal_tiebreak,
    random_winner_single_badge,
    single_badge_equilibria,
)

__version__ = "0.1.0"

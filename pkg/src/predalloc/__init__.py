"""Prediction-driven allocation of a limited treatment budget over time."""

from .config import ConfigError, RunConfig
from .dynamics import (
    CohortTable,
    PopulationDensity,
    PosteriorSpec,
    PosteriorTables,
    cohort_stats,
    initial_cohorts,
    posterior,
    simulate_trajectory,
    survival_update,
    untreated_cohorts,
)
from .model import (
    BetaPrior,
    BudgetSpec,
    DecayingConstants,
    DomainError,
    GridPrior,
    ObservationModel,
    Utility,
    beta_moments,
    check_g_decaying,
    decaying_constants,
    estimate_beta_prior,
    prior_from_dict,
)
from .one_time import (
    best_one_time,
    general_deferral_condition,
    one_time_welfare,
    t_star_fully_effective,
)
from .over_time import PolicySchedule, enumerate_schedules, evaluate_schedule, solve_optimal

__version__ = "0.1.0"

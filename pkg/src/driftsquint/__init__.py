"""Prediction with expert advice in changing environments.

Learners: Hedge, Squint (second-order, rate-grid), coin-betting over
geometric covering intervals (CBCE) applied to either, and the mix-loss
exponential-weights meta-scheme (Squint-CE) with uniform or coin-betting box
priors. The harness replays any run and checks every regret bound the
algorithms carry as a per-run inequality.
"""

from .core import (
    BOUND_SLACK,
    ExpertPrior,
    LearningRateGrid,
    ProbabilityVector,
    RegretLedger,
    build_grid,
    instantaneous_regret,
    kl_divergence,
    mix_loss,
    regret_over_set,
    surrogate_loss,
)
from .covering import (
    CoveringInterval,
    CoveringSchedule,
    Partition,
    active_intervals,
    enumerate_boxes,
    partition,
    partition_count_bound,
)
from .algorithms import (
    EwPosterior,
    Hedge,
    Squint,
    bound_A,
    hedge_bound,
    hedge_default_rate,
    squint_bound,
    surrogate_regret,
)
from .meta import (
    Cbce,
    CbceLearner,
    JunPrior,
    SquintCe,
    bound_A_hat,
    bound_A_tilde,
    cbce_meta_bound,
    jun_prior,
    learner_mixloss_equivalence,
    squintce_bound,
)
from .envsim import EnvironmentSpec, Segment, builtin_scenarios, generate
from .harness import (
    ALGORITHMS,
    BoundReport,
    BoundRow,
    ExperimentConfig,
    RoundError,
    RunRecord,
    compare,
    evaluate_bounds,
    intervals_for,
    read_config,
    run,
    run_many,
    scenario_config,
    write_bound_csv,
    write_compare_csv,
    write_config,
    write_run_csv,
)

__version__ = "0.1.0"

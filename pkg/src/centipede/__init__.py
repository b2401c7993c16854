"""Level-k and quantal-response models of centipede games under direct
response and strategy-method elicitation."""

__version__ = "0.1.0"

from .games import (  # noqa: E402
    CentipedeGame,
    Family,
    Form,
    GameSpec,
    GameValidationError,
    Rescale,
    custom_game,
    make_game,
    experiment_game_specs,
    experiment_games,
    terminal_node,
)
from .levels import LevelPrior, degenerate_prior, poisson_prior  # noqa: E402
from .solvers import (  # noqa: E402
    ConvergenceError,
    Kind,
    ModelSpec,
    Solution,
    SolverConfig,
    aggregate_choice_probs,
    aqre_solve,
    dch_solve,
    qdch_solve,
    solve,
)
from .predict import design_scan, supnorm, terminal_distribution  # noqa: E402
from .estimate import (  # noqa: E402
    Dataset,
    FitResult,
    Observation,
    bootstrap_se,
    fit,
    loglik,
    lrt,
    vuong,
)
from .simulate import SimConfig, simulate  # noqa: E402
from .stats import (  # noqa: E402
    bonferroni,
    friedman,
    ks_two_sample_pvalue,
    matched_terminal_nodes,
    rank_sum,
    wilcoxon_signed_rank,
)
from ._backend import NAME as BACKEND  # noqa: E402

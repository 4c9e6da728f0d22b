"""Learning in finite games with quantized payoff feedback."""

from .analysis import (
    ConvergenceVerdict,
    RateFit,
    ball_in_cone_check,
    classify_trajectory,
    finite_time_check,
    fit_rate,
    heatmap,
    in_neighborhood,
    normal_cone_contains,
    sampling_rate_check,
)
from .dynamics import (
    FeedbackChannel,
    LearnerState,
    NoiseModel,
    Schedule,
    TrajectoryRecord,
    ftql_step,
    iwe_estimate,
    realized_feedback,
    sampling_strategy,
    simulate,
    vector_feedback,
)
from .experiment import ExperimentConfig, load_config, run_batch, run_trajectory
from .game import (
    Game,
    enumerate_strict_nash,
    is_strict_nash,
    min_payoff_gap,
    mixed_payoff,
    payoff_vector,
    quantize_game,
)
from .quantize import QuantizationScheme, quantize, quantize_vector
from .regularizer import (
    ENTROPIC,
    EUCLIDEAN,
    Regularizer,
    choice_map,
    initial_scores_for,
    rate_function,
)

__version__ = "0.1.0"

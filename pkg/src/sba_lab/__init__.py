"""Symmetry-breaking augmentations for ad hoc teamwork, on the iterated lever game."""

from .core_env import (
    ActionObservationHistory,
    EnvironmentSpec,
    EpisodeResult,
    Policy,
    expected_return_exact,
    expected_return_mc,
    run_episode,
)
from .lever_game import (
    FollowerPolicy,
    LeverGame,
    LeverGameConfig,
    LeverObservation,
    lever_symmetry_group,
    make_deterministic_population,
    make_env,
    optimal_br_value,
)
from .metrics import (
    AugImpBudget,
    MetricReport,
    augmentation_difference,
    augmentation_impact,
    crossplay,
    j_aht,
    paired_permutation_test,
    robustness,
)
from .populations import Population, crossplay_matrix, deserialize, sample_member, serialize
from .symmetry import (
    SymmetryGroup,
    SymmetryOp,
    apply_to_trajectory,
    augment_policy,
    compose,
    identity,
    inverse,
    sample_uniform,
    validate_symmetry,
)

__version__ = "0.1.0"

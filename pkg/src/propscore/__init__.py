"""Compare probabilistic models with proper scoring rules and paired tests."""

__version__ = "0.1.0"

from .comparison import (
    ComparisonReport,
    ModelScoreSummary,
    compare_all,
    compare_pair,
    perplexity,
    score_model,
)
from .dataset import ValidationPolicy, align_models, apply_zero_policy, load_dataset, parse_dataset
from .exceptions import (
    BoundaryError,
    ConvergenceError,
    DatasetError,
    DegenerateTestError,
    InfiniteLossError,
    PropscoreError,
)
from .scoring import (
    LOG,
    QUADRATIC,
    SPHERICAL,
    bregman_divergence,
    bregman_loss,
    bregman_rule,
    expected_loss,
    generalized_entropy,
    get_rule,
    kl_divergence,
    log_loss,
    quadratic_loss,
    spherical_loss,
    squared_euclidean,
)
from .stats import TestResult, paired_t_test, student_t_sf, wilcoxon_signed_rank

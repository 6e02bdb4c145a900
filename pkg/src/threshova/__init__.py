"""Thresholding-based ANOVA tests with exact Monte Carlo calibration."""
from .anova_tests import (
    TestOutcome,
    block_test,
    coordinate_test,
    general_anova_test,
    oplus_test,
    tukey_threshold_test,
)
from .calibration import (
    Calibration,
    NullSampler,
    closed_form_threshold_oneway,
    fisher_equivalent_threshold,
    monte_carlo_threshold,
    quantile_universal_threshold,
    qut_alpha,
)
from .design import Basis, Block, DesignSpec, RescalePolicy, ThresholdMode, prepare_design
from .errors import ConfigurationError, NumericalError, ThreshovaError
from .thresholding import SolverConfig, sbite_solve
from .variance import SigmaEstimator

__version__ = "0.1.0"

__all__ = [
    "Basis", "Block", "Calibration", "ConfigurationError", "DesignSpec", "NullSampler", "NumericalError",
    "RescalePolicy", "SigmaEstimator", "SolverConfig", "TestOutcome", "ThresholdMode", "ThreshovaError",
    "block_test", "closed_form_threshold_oneway", "coordinate_test", "fisher_equivalent_threshold",
    "general_anova_test", "monte_carlo_threshold", "oplus_test", "prepare_design", "quantile_universal_threshold",
    "qut_alpha", "sbite_solve", "tukey_threshold_test",
]

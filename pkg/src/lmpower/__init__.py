"""Labour-market frictions and monopsony power from survey microdata.

Estimators of the job-offer arrival rate ``lambda``, the job-destruction
rate ``delta`` and their ratio ``k = lambda / delta`` from accepted wages
and elapsed job tenures, the monopsony index built from them, and a
steady-state simulator to validate both.
"""
__version__ = "0.1.0"

from .core import (ConvergenceError, EmpiricalWageDistribution, EstimationError,
                   FrictionEstimate, GroupedDurations, Method, MonopsonyResult, Observation,
                   Observations, SegmentKey, UnemploymentMixtureEstimate, mu_index)
from .ingestion import DatasetManifest, Filters, load_dataset, load_manifest, segmentize
from .monopsony import DecompositionResult, decompose, render_table, segment_mu
from .parametric import (ExponentialDurationMLE, GroupedDurationMLE, MleSettings, fit_mle,
                         fit_mle_grouped)
from .semiparametric import (SemiparametricFrictions, empirical_cdf, fit_linear,
                             fit_linear_robust)
from .simulator import Scenario, WageDistribution, sample_employed, sample_unemployed
from .unconditional import (EStockGroupedEstimator, UnemploymentMixtureEstimator,
                            fit_estock_grouped, fit_unemployment_mixture)

__all__ = [
    "ConvergenceError", "EmpiricalWageDistribution", "EstimationError", "FrictionEstimate",
    "GroupedDurations", "Method", "MonopsonyResult", "Observation", "Observations",
    "SegmentKey", "UnemploymentMixtureEstimate", "mu_index",
    "DatasetManifest", "Filters", "load_dataset", "load_manifest", "segmentize",
    "DecompositionResult", "decompose", "render_table", "segment_mu",
    "ExponentialDurationMLE", "GroupedDurationMLE", "MleSettings", "fit_mle", "fit_mle_grouped",
    "SemiparametricFrictions", "empirical_cdf", "fit_linear", "fit_linear_robust",
    "Scenario", "WageDistribution", "sample_employed", "sample_unemployed",
    "EStockGroupedEstimator", "UnemploymentMixtureEstimator", "fit_estock_grouped",
    "fit_unemployment_mixture",
]

"""Treatment-effect identification from two-environment observational data.

Estimates the causal effect of a treatment on an outcome under a latent
confounder, given samples from two environments that share the effect but
differ in exactly one mechanism (a structural coefficient or a noise
distribution).  Higher-order moment and cumulant identities pin the effect
down uniquely for coefficient changes and up to two candidates for noise
changes; the package also detects which mechanism changed, exhibits the
proven non-identifiable cases, and ships a Monte Carlo harness for the
bias-convergence experiments.
"""

from .detector import ChangeVerdict, NonIdentifiableError, detect_source, estimate_auto
from .empirical import (
    EnvPairDataset,
    MomentEstimate,
    PairMoments,
    SamplePairMoments,
    joint_cumulant,
    ks_two_sample,
    mixed_moment,
    moment_diff_test,
)
from .estimators import (
    EstimateReport,
    EstimationError,
    EstimatorConfig,
    METHODS,
    estimate_alpha,
    estimate_eps_t,
    estimate_eps_u,
    estimate_gamma,
    get_ratio,
    get_ratio_estimate,
    ols_combined,
    ols_separate,
    residualize,
)
from .harness import (
    ExperimentConfig,
    ScenarioTemplate,
    run_experiment,
    simulate,
    write_results_csv,
)
from .model import (
    ChangeKind,
    ExactPairMoments,
    ScenarioSpec,
    ScmParams,
    construct_counterexample,
    construct_epsy_counterexample,
    population_moment,
    population_pairs,
    rescale_alpha_to_one,
    scenario_from_toml,
    scenario_from_toml_path,
    scenario_to_toml,
)
from .noise import (
    NoiseSpec,
    exponential,
    gamma,
    gaussian,
    gumbel,
    logistic,
    nongaussian_order,
    point_mass,
    raw_moment,
    sample,
    uniform,
)

__version__ = "0.1.0"

"""Monte Carlo pricing of VIX futures and options under rough stochastic Volterra volatility.

Nested Monte Carlo, least-squares Monte Carlo with pluggable regressors, and a
Riccati-ODE closed form for the independent CIR vol-of-vol case.
"""
__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DomainError,
    InvalidBudget,
    NoSolution,
    Nonconvergence,
    NotPositiveDefinite,
    RankDeficient,
    RoughVixError,
    ShapeMismatch,
)
from .paths import CorrelationSpec, PathBatch, build_correlation, generate_batch
from .kernel import RoughKernel, hybrid_b, kernel_g, riemann_E, simulate_tbss
from .vol_of_vol import CirParams, RoughVovParams, simulate_cir, simulate_rough_vov, zeta_update
from .riccati import RiccatiSolution, oracle_hT, solve_riccati
from .model import (
    GridSpec,
    ModelConfig,
    OuterState,
    assemble_forward_curve,
    estimate_h0,
    simulate_h0,
    simulate_inner,
    simulate_outer,
)
from .regressors import (
    LinearRegressor,
    RandomForest,
    TrainingSet,
    fit_linear,
    fit_random_forest,
    hermite_basis,
    load_regressor,
    save_regressor,
    stratified_sample,
)
from .pricing import (
    MetricsReport,
    SmileReport,
    VixSample,
    black_call,
    compute_metrics,
    implied_vol,
    price_lsmc,
    price_nmc,
    price_oracle,
    vix_from_curve,
)
from .config import ExperimentConfig, parse_config

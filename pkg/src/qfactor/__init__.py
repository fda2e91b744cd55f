"""Quantile factor analysis for heavy-tailed panels.

Separates common and idiosyncratic components of large panels without moment
conditions by alternating check-loss regressions over factor loadings and
scores, with robust factor-number selection, heavy-tailed simulation
benchmarks, and a minimum-variance portfolio backtest.
"""

from .baselines import fit_pca
from .errors import (
    AllChainsFailedError,
    DegenerateProblemError,
    EmptyInputError,
    InsufficientDataError,
    InvalidParameterError,
    MissingDataUnsupportedError,
    NotOrthonormalError,
    NotRepairableError,
    QFactorError,
    RankDeficientError,
    SingularMatrixError,
    ZeroDenominatorError,
    ZeroTruthError,
)
from .metrics import (
    MonteCarloReport,
    ave_fl,
    ave_fs,
    bahadur_loading_ratio,
    bahadur_score_ratio,
    mee_cc_single,
    r2_absolute,
    r2_square,
)
from .panel import (
    FactorFit,
    PanelData,
    RotationMatrix,
    alignment_rotation,
    normalize_canonical,
    orthonormal_basis,
    subspace_distance,
)
from .portfolio import (
    BacktestConfig,
    BacktestResult,
    backtest,
    contamination_sensitivity,
    estimate_sigma,
    hard_threshold,
    min_var_weights,
)
from .quantreg import (
    QuantRegProblem,
    QuantRegSolution,
    check_loss,
    empirical_quantile,
    quantile_regress,
)
from .rip import RipConfig, RipTrace, f_step, fit_rip, init_loadings, l_step
from .selection import (
    SelectionConfig,
    SelectionReport,
    select_factor_number,
    select_r_er,
    select_r_ic,
    select_r_rer,
)
from .simlab import (
    DGPConfig,
    SimulatedPanel,
    gen_dgp,
    run_scenario,
    sample_mvt,
    sample_stable,
    scenario_config,
)

__version__ = "0.1.0"

"""Rolling factor fits, thresholded covariance, minimum-variance backtest.

The pipeline mirrors a weekly risk-minimization strategy: at each period a
factor model is fitted on the trailing window of demeaned returns, the return
covariance is estimated as the common-component Gram plus a hard-thresholded
residual Gram, and the portfolio holds the normalized inverse-covariance
weights.  Out-of-sample fit quality is tracked through squared and absolute
total R-squared of cross-sectional factor regressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import fit_pca
from .errors import (
    AllChainsFailedError,
    DegenerateProblemError,
    InvalidParameterError,
    NotRepairableError,
    RankDeficientError,
    SingularMatrixError,
)
from .panel import FactorFit, PanelData, orthonormal_basis, subspace_distance
from .quantreg import QuantRegProblem, quantile_regress
from .rip import RipConfig, fit_rip
from .rng import derive_seed, substream
from .selection import SelectionConfig, select_r_er, select_r_rer

__all__ = [
    "BacktestConfig",
    "BacktestResult",
    "ContaminationCurve",
    "hard_threshold",
    "estimate_sigma",
    "min_var_weights",
    "backtest",
    "contamination_sensitivity",
]

_DEGENERATE_ERRORS = (
    DegenerateProblemError,
    RankDeficientError,
    AllChainsFailedError,
    SingularMatrixError,
    NotRepairableError,
)


@dataclass(frozen=True)
class BacktestConfig:
    """Rolling-window settings for the risk-minimization backtest."""

    window: int = 52
    refit_every: int = 1
    method: str = "rip"  # "rip" | "pca"
    r_selection: str = "fixed"  # "fixed" | "rer" | "er"
    r: int = 1
    r_max: int = 8
    tau: float = 0.5
    seed: int = 0
    n_starts: int = 5
    max_iter: int = 100
    conv_tol: float = 1e-5

    def __post_init__(self) -> None:
        if self.window < 2:
            raise InvalidParameterError("window must be at least 2")
        if self.refit_every < 1:
            raise InvalidParameterError("refit_every must be positive")
        if self.method not in ("rip", "pca"):
            raise InvalidParameterError("method must be 'rip' or 'pca'")
        if self.r_selection not in ("fixed", "rer", "er"):
            raise InvalidParameterError("r_selection must be 'fixed', 'rer' or 'er'")
        if self.r < 1 or self.window < self.r + 1:
            raise InvalidParameterError("window must exceed the factor count")
        if not 0.0 < self.tau < 1.0:
            raise InvalidParameterError("tau must lie in (0, 1)")


@dataclass
class BacktestResult:
    """Weights, net value, and out-of-sample fit statistics per period."""

    periods: list[int]
    weights: np.ndarray  # n_out x p, rows sum to one
    portfolio_returns: np.ndarray
    net_value: np.ndarray
    r2_square: float
    r2_absolute: float
    r_estimates: list[int]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "periods": self.periods,
            "weights": self.weights.tolist(),
            "portfolio_returns": self.portfolio_returns.tolist(),
            "net_value": self.net_value.tolist(),
            "r2_square": self.r2_square,
            "r2_absolute": self.r2_absolute,
            "r_estimates": self.r_estimates,
            "degenerate": self.degenerate,
        }


@dataclass
class ContaminationCurve:
    """Mean loading-space variation under entry contamination."""

    proportions: list[float]
    mean_distance: list[float]
    distances: np.ndarray = field(repr=False, default=None)  # n_props x n_reps
    method: str = ""

    def to_dict(self) -> dict:
        return {
            "proportions": self.proportions,
            "mean_distance": self.mean_distance,
            "distances": self.distances.tolist(),
            "method": self.method,
        }


def hard_threshold(s: np.ndarray, thr: float) -> np.ndarray:
    """Zero the off-diagonal entries smaller than ``thr`` in magnitude."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidParameterError("input must be a square matrix")
    if thr < 0:
        raise InvalidParameterError("threshold must be nonnegative")
    out = np.where(np.abs(s) < thr, 0.0, s)
    np.fill_diagonal(out, np.diag(s))
    return out


def estimate_sigma(
    fit: FactorFit,
    window_T: int,
    escalation: float = 1.5,
    max_steps: int = 60,
) -> np.ndarray:
    """Covariance estimate: common-component Gram plus thresholded residual Gram.

    The residual part is hard-thresholded at ``c * median |off-diagonal|``
    with ``c`` escalated from 1 until the total matrix has minimum eigenvalue
    at least ``1e-8 * trace / p``; if thresholding alone cannot achieve that,
    a ridge of the same size is added.
    """
    if window_T != fit.scores.shape[1]:
        raise InvalidParameterError("window_T must equal the fitted window length")
    common = fit.common_components
    resid = fit.residuals
    sigma_common = common @ common.T / window_T
    sigma_resid = resid @ resid.T / window_T
    p = sigma_common.shape[0]

    off = np.abs(sigma_resid[~np.eye(p, dtype=bool)])
    base_thr = float(np.median(off)) if off.size else 0.0
    floor = 1e-8 * float(np.trace(sigma_common + sigma_resid)) / p
    floor = max(floor, 1e-12)

    c = 1.0
    sigma = sigma_common + sigma_resid
    for _ in range(max_steps):
        candidate = sigma_common + hard_threshold(sigma_resid, c * base_thr)
        min_eig = float(np.linalg.eigvalsh(candidate)[0])
        if min_eig >= floor:
            return candidate
        sigma = candidate
        c *= escalation
        if base_thr == 0.0:
            break
    repaired = sigma + floor * 2.0 * np.eye(p) - min(float(np.linalg.eigvalsh(sigma)[0]), 0.0) * np.eye(p)
    if float(np.linalg.eigvalsh(repaired)[0]) < floor * 0.5:
        raise NotRepairableError("covariance repair failed to reach the eigenvalue floor")
    return repaired


def min_var_weights(sigma: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Fully-invested minimum-variance weights ``Sigma^{-1} 1 / (1' Sigma^{-1} 1)``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidParameterError("covariance must be square")
    if np.linalg.cond(sigma) > cond_limit:
        raise SingularMatrixError("covariance matrix is numerically singular")
    raw = np.linalg.solve(sigma, np.ones(sigma.shape[0]))
    return raw / raw.sum()


def _fit_window(x_centered: np.ndarray, cfg: BacktestConfig, window_index: int) -> tuple[FactorFit, int]:
    panel = PanelData(x_centered, np.ones_like(x_centered, dtype=bool))
    rip_cfg = RipConfig(
        r=cfg.r,
        tau=cfg.tau,
        seed=derive_seed(cfg.seed, "init", window_index),
        n_starts=cfg.n_starts,
        max_iter=cfg.max_iter,
        conv_tol=cfg.conv_tol,
    )
    if cfg.r_selection == "fixed":
        r_hat = cfg.r
    elif cfg.r_selection == "rer":
        sel = SelectionConfig(r_max=cfg.r_max, tau=cfg.tau)
        r_hat, _ = select_r_rer(
            panel,
            sel,
            RipConfig(
                r=cfg.r_max,
                tau=cfg.tau,
                seed=derive_seed(cfg.seed, "init", window_index),
                n_starts=cfg.n_starts,
                max_iter=cfg.max_iter,
                conv_tol=cfg.conv_tol,
            ),
        )
    else:
        sel = SelectionConfig(r_max=cfg.r_max, tau=cfg.tau)
        r_hat, _ = select_r_er(panel, sel)
    if cfg.method == "rip":
        fit = fit_rip(panel, RipConfig(
            r=r_hat,
            tau=cfg.tau,
            seed=rip_cfg.seed,
            n_starts=cfg.n_starts,
            max_iter=cfg.max_iter,
            conv_tol=cfg.conv_tol,
        ))
    else:
        fit = fit_pca(panel, r_hat)
    return fit, r_hat


def _score_next(fit: FactorFit, y_next: np.ndarray, method: str, tau: float) -> np.ndarray:
    """Cross-sectional factor regression for the next period's returns."""
    if method == "pca":
        beta, *_ = np.linalg.lstsq(fit.loadings, y_next, rcond=None)
        return beta
    sol = quantile_regress(QuantRegProblem(fit.loadings, y_next, tau))
    return sol.beta


def backtest(returns: PanelData, cfg: BacktestConfig) -> BacktestResult:
    """Run the rolling minimum-variance strategy on a returns panel.

    Returns are demeaned within each training window before fitting.  Weights
    for period ``t`` use only columns ``t - window .. t - 1``; the realized
    portfolio return is the weighted raw return at ``t``.  Degenerate windows
    (for example constant returns) fall back to equal weights and are flagged
    instead of raising.
    """
    if returns.T <= cfg.window:
        raise InvalidParameterError("panel must be longer than the training window")
    y = returns.values
    p, T = y.shape

    periods: list[int] = []
    weights: list[np.ndarray] = []
    port_returns: list[float] = []
    r_estimates: list[int] = []
    degenerate = False

    sq_num = sq_den = ab_num = ab_den = 0.0
    fit = None
    mu = np.zeros(p)
    w = np.full(p, 1.0 / p)
    r_hat = cfg.r
    for t in range(cfg.window, T):
        step = t - cfg.window
        if step % cfg.refit_every == 0:
            window_slice = y[:, t - cfg.window : t]
            mu = window_slice.mean(axis=1)
            centered = window_slice - mu[:, None]
            try:
                fit, r_hat = _fit_window(centered, cfg, step)
                sigma = estimate_sigma(fit, cfg.window)
                w = min_var_weights(sigma)
            except _DEGENERATE_ERRORS:
                degenerate = True
                fit = None
                w = np.full(p, 1.0 / p)
        periods.append(t)
        weights.append(w.copy())
        r_estimates.append(int(r_hat))
        port_returns.append(float(w @ y[:, t]))
        y_next = y[:, t] - mu
        if fit is not None:
            beta = _score_next(fit, y_next, cfg.method, cfg.tau)
            pred = fit.loadings @ beta
        else:
            pred = np.zeros(p)
        sq_num += float(np.sum((y_next - pred) ** 2))
        sq_den += float(np.sum(y_next**2))
        ab_num += float(np.sum(np.abs(y_next - pred)))
        ab_den += float(np.sum(np.abs(y_next)))

    port = np.asarray(port_returns)
    r2s = 1.0 - sq_num / sq_den if sq_den > 0 else float("nan")
    r2a = 1.0 - ab_num / ab_den if ab_den > 0 else float("nan")
    if sq_den == 0.0:
        degenerate = True
    return BacktestResult(
        periods=periods,
        weights=np.asarray(weights),
        portfolio_returns=port,
        net_value=np.cumprod(1.0 + port),
        r2_square=r2s,
        r2_absolute=r2a,
        r_estimates=r_estimates,
        degenerate=degenerate,
    )


def contamination_sensitivity(
    returns: PanelData,
    proportions,
    n_reps: int,
    method: str,
    seed: int,
    r: int = 1,
    tau: float = 0.5,
    n_starts: int = 5,
) -> ContaminationCurve:
    """Loading-space variation when a proportion of demeaned entries is scaled by 5.

    The same seed produces the same contaminated entry sets regardless of the
    fitted method, so curves for different methods are directly comparable.
    """
    if method not in ("rip", "pca"):
        raise InvalidParameterError("method must be 'rip' or 'pca'")
    props = [float(x) for x in proportions]
    if any(not 0.0 <= x < 1.0 for x in props):
        raise InvalidParameterError("proportions must lie in [0, 1)")
    y = returns.values
    demeaned = y - y.mean(axis=1, keepdims=True)
    p, T = demeaned.shape

    def fit_loadings(data: np.ndarray) -> np.ndarray:
        panel = PanelData(data, np.ones_like(data, dtype=bool))
        if method == "rip":
            fit = fit_rip(
                panel,
                RipConfig(r=r, tau=tau, seed=derive_seed(seed, "init"), n_starts=n_starts),
            )
        else:
            fit = fit_pca(panel, r)
        return orthonormal_basis(fit.loadings)

    base = fit_loadings(demeaned)
    distances = np.zeros((len(props), n_reps))
    for pi, prop in enumerate(props):
        n_entries = int(np.floor(prop * p * T))
        for rep in range(n_reps):
            if n_entries == 0:
                distances[pi, rep] = 0.0
                continue
            rng = substream(seed, "contamination", pi, rep)
            flat = rng.choice(p * T, size=n_entries, replace=False)
            data = demeaned.copy()
            data.flat[flat] *= 5.0
            distances[pi, rep] = subspace_distance(base, fit_loadings(data))
    return ContaminationCurve(
        proportions=props,
        mean_distance=[float(x) for x in distances.mean(axis=1)],
        distances=distances,
        method=method,
    )

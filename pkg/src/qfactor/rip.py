"""Robust iterative factor estimation.

Alternates check-loss regressions over scores (one per time point, design =
current loadings) and over loadings (one per variable, design = current
scores), renormalizing the pair to canonical form after each half-step.
Several independently initialized chains are run and the one with the lowest
final objective is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AllChainsFailedError,
    DegenerateProblemError,
    InsufficientDataError,
    InvalidParameterError,
)
from .panel import FactorFit, PanelData, normalize_canonical
from .quantreg import batch_quantile_regress, check_loss
from .rng import substream

__all__ = ["RipConfig", "RipTrace", "init_loadings", "f_step", "l_step", "fit_rip"]

MAX_ROW_NORM = 10.0


@dataclass(frozen=True)
class RipConfig:
    """Settings for the alternating estimation procedure."""

    r: int
    tau: float = 0.5
    max_iter: int = 100
    conv_tol: float = 1e-5
    n_starts: int = 5
    seed: int = 0
    inner_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.r < 1:
            raise InvalidParameterError("factor count r must be at least 1")
        if not 0.0 < self.tau < 1.0:
            raise InvalidParameterError("tau must lie in (0, 1)")
        if self.max_iter < 1 or self.n_starts < 1:
            raise InvalidParameterError("max_iter and n_starts must be positive")
        if self.conv_tol <= 0 or self.inner_tol <= 0:
            raise InvalidParameterError("tolerances must be positive")
        if self.seed < 0:
            raise InvalidParameterError("seed must be non-negative")


@dataclass
class RipTrace:
    """Per-iteration diagnostics of one estimation run."""

    objectives: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    rate_bound: float = float("nan")  # log(p)/sqrt(T) + 1/sqrt(p)


def init_loadings(p: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Random starting loadings with a diagonal Gram matrix and bounded rows.

    Entries are i.i.d. standard Gaussian; rows longer than ``MAX_ROW_NORM``
    are rescaled, then the matrix is rotated so ``L'L/p`` is diagonal with
    descending entries (rotation preserves row norms).
    """
    if r > p:
        raise InvalidParameterError("factor count cannot exceed the variable count")
    g = rng.standard_normal((p, r))
    norms = np.linalg.norm(g, axis=1)
    over = norms > MAX_ROW_NORM
    if over.any():
        g[over] *= (MAX_ROW_NORM / norms[over])[:, None]
    d, u = np.linalg.eigh(g.T @ g / p)
    u = u[:, np.argsort(-d, kind="stable")]
    out = g @ u
    peaks = np.abs(out).argmax(axis=0)
    signs = np.sign(out[peaks, np.arange(r)])
    signs[signs == 0] = 1.0
    return out * signs


def _panel_objective(panel: PanelData, common: np.ndarray, tau: float) -> float:
    resid = np.where(panel.mask, panel.values - common, 0.0)
    return float(np.sum(check_loss(resid, tau) * panel.mask))


def f_step(
    panel: PanelData,
    loadings: np.ndarray,
    tau: float,
    inner_tol: float = 1e-8,
    warm_scores: np.ndarray | None = None,
    exact: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Update scores given loadings, then renormalize the pair jointly.

    Column ``t`` solves a check-loss regression of the observed entries of
    ``Y[:, t]`` on the corresponding loading rows.  The returned pair has the
    same product as ``(loadings, new scores)``.
    """
    batch = batch_quantile_regress(
        loadings,
        panel.values,
        tau,
        mask=panel.mask,
        warm=warm_scores,
        tol=inner_tol,
        exact=exact,
    )
    if batch.degenerate.any():
        raise DegenerateProblemError(
            f"{int(batch.degenerate.sum())} time points have rank-deficient designs"
        )
    return normalize_canonical(loadings, batch.coefficients)


def l_step(
    panel: PanelData,
    scores: np.ndarray,
    tau: float,
    inner_tol: float = 1e-8,
    warm_loadings: np.ndarray | None = None,
    exact: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Update loadings given scores (mirror of :func:`f_step`)."""
    warm = None if warm_loadings is None else warm_loadings.T
    batch = batch_quantile_regress(
        scores.T,
        panel.values.T,
        tau,
        mask=panel.mask.T,
        warm=warm,
        tol=inner_tol,
        exact=exact,
    )
    if batch.degenerate.any():
        raise DegenerateProblemError(
            f"{int(batch.degenerate.sum())} variables have rank-deficient designs"
        )
    return normalize_canonical(batch.coefficients.T, scores)


def _run_chain(panel: PanelData, cfg: RipConfig, rng: np.random.Generator):
    loadings = init_loadings(panel.p, cfg.r, rng)
    scores = None
    trace = RipTrace(
        rate_bound=math.log(panel.p) / math.sqrt(panel.T) + 1.0 / math.sqrt(panel.p)
    )
    common_prev = None
    converged = False
    iterations = 0
    for _ in range(cfg.max_iter):
        loadings, scores = f_step(
            panel, loadings, cfg.tau, inner_tol=cfg.inner_tol, warm_scores=scores
        )
        loadings, scores = l_step(
            panel, scores, cfg.tau, inner_tol=cfg.inner_tol, warm_loadings=loadings
        )
        iterations += 1
        common = loadings @ scores
        trace.objectives.append(_panel_objective(panel, common, cfg.tau))
        if common_prev is not None:
            denom = float(np.abs(common_prev).sum())
            numer = float(np.abs(common - common_prev).sum())
            delta = 0.0 if numer == 0.0 else (math.inf if denom == 0.0 else numer / denom)
            trace.deltas.append(delta)
            if delta < cfg.conv_tol:
                converged = True
                common_prev = common
                break
        common_prev = common
    return loadings, scores, common_prev, trace, converged, iterations


def fit_rip(panel: PanelData, cfg: RipConfig) -> FactorFit:
    """Fit the factor model by multi-start alternating check-loss regression.

    Each chain alternates score and loading updates until the aggregate
    relative change of the common-component matrix drops below
    ``cfg.conv_tol`` or ``cfg.max_iter`` is reached.  The chain with the
    smallest final objective wins (ties go to the lowest chain index).

    Raises
    ------
    InsufficientDataError
        If some row or column observes fewer than ``r`` entries.
    AllChainsFailedError
        If every chain aborted on a degenerate regression.
    """
    if cfg.r > min(panel.p, panel.T):
        raise InvalidParameterError("r cannot exceed min(p, T)")
    col_obs = panel.mask.sum(axis=0)
    row_obs = panel.mask.sum(axis=1)
    if (col_obs < cfg.r).any() or (row_obs < cfg.r).any():
        raise InsufficientDataError(
            f"every row and column needs at least r={cfg.r} observed entries"
        )

    results = []
    for chain in range(cfg.n_starts):
        rng = substream(cfg.seed, "init", chain)
        try:
            results.append(_run_chain(panel, cfg, rng))
        except DegenerateProblemError:
            continue
    if not results:
        raise AllChainsFailedError("all multi-start chains hit degenerate regressions")

    finals = np.array([res[3].objectives[-1] for res in results])
    loadings, scores, common, trace, converged, iterations = results[int(np.argmin(finals))]
    residuals = np.where(panel.mask, panel.values - common, 0.0)
    return FactorFit(
        loadings=loadings,
        scores=scores,
        residuals=residuals,
        loss=float(trace.objectives[-1]),
        iterations=iterations,
        tau=cfg.tau,
        converged=converged,
        trace=trace,
    )


def rip_config_with(cfg: RipConfig, **changes) -> RipConfig:
    """Copy a config with some fields replaced."""
    return replace(cfg, **changes)

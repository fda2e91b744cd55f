"""Accuracy metrics and first-order expansion diagnostics.

Fit quality is scored by the relative squared Frobenius error of the common
components and by subspace distances between estimated and true loading and
score spaces.  The expansion diagnostics compare the fitted factors/loadings
against their density-weighted first-order approximation around the truth;
on data generated with known densities the remainder should be small
relative to the raw deviation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameterError, ZeroDenominatorError, ZeroTruthError
from .panel import FactorFit, alignment_rotation, orthonormal_basis, subspace_distance

__all__ = [
    "MethodMetrics",
    "SelectionCounts",
    "MonteCarloReport",
    "mee_cc_single",
    "loading_space_distance",
    "score_space_distance",
    "ave_fl",
    "ave_fs",
    "bahadur_score_ratio",
    "bahadur_loading_ratio",
    "max_loading_error",
    "r2_square",
    "r2_absolute",
]


def mee_cc_single(fit: FactorFit, loadings_true: np.ndarray, scores_true: np.ndarray) -> float:
    """Relative squared Frobenius error of the common-component matrix."""
    truth = np.asarray(loadings_true) @ np.asarray(scores_true)
    denom = float(np.sum(truth**2))
    if denom == 0.0:
        raise ZeroTruthError("true common components are identically zero")
    diff = fit.common_components - truth
    return float(np.sum(diff**2)) / denom


def loading_space_distance(loadings_hat: np.ndarray, loadings_true: np.ndarray) -> float:
    """Subspace distance between estimated and true loading spaces."""
    return subspace_distance(orthonormal_basis(loadings_hat), orthonormal_basis(loadings_true))


def score_space_distance(scores_hat: np.ndarray, scores_true: np.ndarray) -> float:
    """Subspace distance between estimated and true score spaces (time side)."""
    return subspace_distance(
        orthonormal_basis(np.asarray(scores_hat).T),
        orthonormal_basis(np.asarray(scores_true).T),
    )


def ave_fl(loadings_hats, loadings_true: np.ndarray) -> float:
    """Mean loading-space distance across replications."""
    return float(np.mean([loading_space_distance(lh, loadings_true) for lh in loadings_hats]))


def ave_fs(scores_hats, scores_true: np.ndarray) -> float:
    """Mean score-space distance across replications."""
    return float(np.mean([score_space_distance(sh, scores_true) for sh in scores_hats]))


def _score_deviation(fit: FactorFit, sim) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rot = alignment_rotation(fit.loadings, sim.loadings, sim.density_at_zero)
    deviation = fit.scores - rot.w @ sim.scores
    tau = fit.tau if fit.tau is not None else 0.5
    indicator = (sim.idiosyncratic <= 0.0).astype(float) - tau
    return rot.w, deviation, indicator


def bahadur_score_ratio(fit: FactorFit, sim) -> float:
    """Remainder-to-deviation ratio of the first-order score expansion.

    For each time point the fitted score is compared with the rotated truth
    plus the density-weighted correction built from loss subgradient
    indicators at the true residuals; the statistic is the median remainder
    norm divided by the median deviation norm (0 when both vanish).  Values
    well below 1 support the expansion.  Meaningful when ``p log^2 p / T`` is
    small; a warning is emitted otherwise.
    """
    p, T = sim.panel.values.shape
    if p * math.log(p) ** 2 / T > 1.0:
        warnings.warn(
            "score expansion checked outside its regime (p log^2 p / T is large)",
            stacklevel=2,
        )
    _, deviation, indicator = _score_deviation(fit, sim)
    weighted = fit.loadings * np.asarray(sim.density_at_zero)[:, None]
    gram = weighted.T @ fit.loadings
    correction = -np.linalg.solve(gram, fit.loadings.T @ indicator)
    dev_norm = float(np.median(np.linalg.norm(deviation, axis=0)))
    rem_norm = float(np.median(np.linalg.norm(deviation - correction, axis=0)))
    if dev_norm <= 1e-300:
        return 0.0
    return rem_norm / dev_norm


def bahadur_loading_ratio(fit: FactorFit, sim) -> float:
    """Mirrored expansion diagnostic on the loading side.

    Works in rotated coordinates ``W' l̂_i - l_i``; its validity regime is far
    stricter than the score-side one (it needs ``T`` growth dominated by
    ``p``), so the result is diagnostic only and a warning flags the regime.
    """
    p, T = sim.panel.values.shape
    if (math.log(p) ** 2 * math.log(T) ** 2 + math.log(T) ** 3 / math.sqrt(p)) * T / p > 1.0:
        warnings.warn(
            "loading expansion checked outside its (strict) regime", stacklevel=2
        )
    w, _, indicator = _score_deviation(fit, sim)
    deviation = fit.loadings @ w - sim.loadings
    f0 = sim.scores
    gram = f0 @ f0.T
    correction = -(indicator @ f0.T @ np.linalg.inv(gram)) / np.asarray(
        sim.density_at_zero
    )[:, None]
    dev_norm = float(np.median(np.linalg.norm(deviation, axis=1)))
    rem_norm = float(np.median(np.linalg.norm(deviation - correction, axis=1)))
    if dev_norm <= 1e-300:
        return 0.0
    return rem_norm / dev_norm


def max_loading_error(fit: FactorFit, sim) -> float:
    """Largest rotated per-variable loading error ``max_i |W' l̂_i - l_i|``."""
    w = alignment_rotation(fit.loadings, sim.loadings, sim.density_at_zero).w
    return float(np.linalg.norm(fit.loadings @ w - sim.loadings, axis=1).max())


def r2_square(pred: np.ndarray, actual: np.ndarray) -> float:
    """One minus the squared residual sum over the squared total sum."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise InvalidParameterError("prediction and actual shapes must agree")
    denom = float(np.sum(actual**2))
    if denom == 0.0:
        raise ZeroDenominatorError("actual values are identically zero")
    return 1.0 - float(np.sum((actual - pred) ** 2)) / denom


def r2_absolute(pred: np.ndarray, actual: np.ndarray) -> float:
    """One minus the absolute residual sum over the absolute total sum."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise InvalidParameterError("prediction and actual shapes must agree")
    denom = float(np.sum(np.abs(actual)))
    if denom == 0.0:
        raise ZeroDenominatorError("actual values are identically zero")
    return 1.0 - float(np.sum(np.abs(actual - pred))) / denom


@dataclass
class MethodMetrics:
    """Aggregated estimation accuracy of one method over replications."""

    mee_cc_median: float
    mee_cc_iqr: float
    ave_fl: float
    ave_fl_sd: float
    ave_fs: float
    ave_fs_sd: float
    mee_cc: list[float] = field(default_factory=list)
    fl_distances: list[float] = field(default_factory=list)
    fs_distances: list[float] = field(default_factory=list)
    max_loading_errors: Optional[list[float]] = None
    bahadur_ratios: Optional[list[float]] = None

    @classmethod
    def from_samples(
        cls,
        mee: list[float],
        fl: list[float],
        fs: list[float],
        max_errs: Optional[list[float]] = None,
        bahadur: Optional[list[float]] = None,
    ) -> "MethodMetrics":
        mee_a, fl_a, fs_a = map(np.asarray, (mee, fl, fs))
        sd = lambda x: float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        return cls(
            mee_cc_median=float(np.median(mee_a)),
            mee_cc_iqr=float(np.percentile(mee_a, 75) - np.percentile(mee_a, 25)),
            ave_fl=float(np.mean(fl_a)),
            ave_fl_sd=sd(fl_a),
            ave_fs=float(np.mean(fs_a)),
            ave_fs_sd=sd(fs_a),
            mee_cc=list(map(float, mee)),
            fl_distances=list(map(float, fl)),
            fs_distances=list(map(float, fs)),
            max_loading_errors=max_errs,
            bahadur_ratios=bahadur,
        )

    def to_dict(self) -> dict:
        out = {
            "mee_cc_median": self.mee_cc_median,
            "mee_cc_iqr": self.mee_cc_iqr,
            "ave_fl": self.ave_fl,
            "ave_fl_sd": self.ave_fl_sd,
            "ave_fs": self.ave_fs,
            "ave_fs_sd": self.ave_fs_sd,
            "mee_cc": self.mee_cc,
            "fl_distances": self.fl_distances,
            "fs_distances": self.fs_distances,
        }
        if self.max_loading_errors is not None:
            out["max_loading_errors"] = self.max_loading_errors
        if self.bahadur_ratios is not None:
            out["bahadur_ratios"] = self.bahadur_ratios
        return out


@dataclass
class SelectionCounts:
    """Factor-number selection outcomes over replications."""

    mean: float
    n_under: int
    n_over: int
    estimates: list[int] = field(default_factory=list)

    @classmethod
    def from_estimates(cls, estimates: list[int], r_true: int) -> "SelectionCounts":
        arr = np.asarray(estimates)
        return cls(
            mean=float(arr.mean()),
            n_under=int((arr < r_true).sum()),
            n_over=int((arr > r_true).sum()),
            estimates=list(map(int, estimates)),
        )

    def formatted(self) -> str:
        """Render as ``mean(#under|#over)``."""
        return f"{self.mean:.3f}({self.n_under}|{self.n_over})"

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "n_under": self.n_under,
            "n_over": self.n_over,
            "estimates": self.estimates,
        }


@dataclass
class MonteCarloReport:
    """Full record of a simulation study."""

    scenario: str
    p: int
    T: int
    reps: int
    tau: float
    seed: int
    r_true: int
    family: str
    fit_metrics: dict[str, MethodMetrics] = field(default_factory=dict)
    selection: dict[str, SelectionCounts] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "p": self.p,
            "T": self.T,
            "reps": self.reps,
            "tau": self.tau,
            "seed": self.seed,
            "r_true": self.r_true,
            "family": self.family,
            "fit_metrics": {k: v.to_dict() for k, v in self.fit_metrics.items()},
            "selection": {k: v.to_dict() for k, v in self.selection.items()},
        }

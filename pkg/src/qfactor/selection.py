"""Factor-number selection.

Three selectors over a common ``r_max`` grid: a robust eigenvalue-ratio rule
on the loading Gram matrix of a check-loss fit run with ``r_max`` columns, the
classical eigenvalue-ratio rule on the data Gram spectrum, and an information
criterion on least-squares residual variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import fit_pca
from .errors import InvalidParameterError, MissingDataUnsupportedError
from .panel import PanelData
from .rip import RipConfig, fit_rip, rip_config_with

__all__ = [
    "SelectionConfig",
    "SelectionReport",
    "select_r_rer",
    "select_r_er",
    "select_r_ic",
    "select_factor_number",
]

EIGENVALUE_FLOOR = 1e-12
METHODS = ("rer", "er", "ic")


@dataclass(frozen=True)
class SelectionConfig:
    r_max: int = 8
    tau: float = 0.5
    methods: tuple[str, ...] = METHODS

    def __post_init__(self) -> None:
        if self.r_max < 2:
            raise InvalidParameterError("r_max must be at least 2")
        if not 0.0 < self.tau < 1.0:
            raise InvalidParameterError("tau must lie in (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidParameterError(f"unknown selection methods: {sorted(unknown)}")


@dataclass
class SelectionReport:
    """Per-method factor-number estimates plus the spectra they used."""

    estimates: dict[str, int] = field(default_factory=dict)
    eigenvalues: dict[str, list[float]] = field(default_factory=dict)
    r_max: int = 8

    def to_dict(self) -> dict:
        return {
            "estimates": dict(self.estimates),
            "eigenvalues": {k: list(map(float, v)) for k, v in self.eigenvalues.items()},
            "r_max": self.r_max,
        }


def _check_dims(panel: PanelData, r_max: int) -> None:
    if r_max >= min(panel.p, panel.T):
        raise InvalidParameterError("r_max must be smaller than min(p, T)")


def _ratio_argmax(eigenvalues: np.ndarray, r_max: int) -> int:
    lam = np.maximum(eigenvalues[:r_max], EIGENVALUE_FLOOR)
    ratios = lam[:-1] / lam[1:]
    return int(np.argmax(ratios)) + 1  # ties resolve to the smallest index


def select_r_rer(
    panel: PanelData, cfg: SelectionConfig, rip_cfg: RipConfig
) -> tuple[int, np.ndarray]:
    """Robust eigenvalue-ratio estimate of the factor count.

    Fits the check-loss factor model with ``r_max`` columns and maximizes the
    ratio of consecutive eigenvalues of the loading Gram matrix ``L'L/p``.
    Trailing eigenvalues are clamped at a small floor before forming ratios.
    """
    _check_dims(panel, cfg.r_max)
    fit = fit_rip(panel, rip_config_with(rip_cfg, r=cfg.r_max, tau=cfg.tau))
    gram = fit.loadings.T @ fit.loadings / panel.p
    lam = np.sort(np.linalg.eigvalsh(gram))[::-1]
    return _ratio_argmax(lam, cfg.r_max), lam


def select_r_er(panel: PanelData, cfg: SelectionConfig) -> tuple[int, np.ndarray]:
    """Eigenvalue-ratio estimate from the data Gram spectrum.

    Uses the top ``r_max`` eigenvalues of ``Y Y' / (p T)`` with the same ratio
    and floor rules as the robust variant.
    """
    _check_dims(panel, cfg.r_max)
    if not panel.is_complete:
        raise MissingDataUnsupportedError("spectrum-based selection needs a complete panel")
    y = panel.values
    p, T = y.shape
    gram = y @ y.T if p <= T else y.T @ y
    lam = np.sort(np.linalg.eigvalsh(gram))[::-1][: cfg.r_max] / (p * T)
    return _ratio_argmax(lam, cfg.r_max), lam


def select_r_ic(panel: PanelData, cfg: SelectionConfig) -> tuple[int, np.ndarray]:
    """Information-criterion estimate based on least-squares residual variance.

    Minimizes ``log V(k) + k g(p, T)`` over ``k = 0..r_max`` where ``V(k)`` is
    the mean squared residual of the rank-``k`` least-squares fit and
    ``g(p, T) = ((p + T) / (p T)) log(p T / (p + T))``.
    """
    _check_dims(panel, cfg.r_max)
    if not panel.is_complete:
        raise MissingDataUnsupportedError("spectrum-based selection needs a complete panel")
    y = panel.values
    p, T = y.shape
    sv2 = np.linalg.svd(y, compute_uv=False) ** 2
    total = float(sv2.sum())
    tails = total - np.concatenate([[0.0], np.cumsum(sv2[: cfg.r_max])])
    v = np.maximum(tails / (p * T), 0.0)
    penalty = (p + T) / (p * T) * np.log(p * T / (p + T))
    crit = np.log(np.maximum(v, 1e-300)) + penalty * np.arange(cfg.r_max + 1)
    return int(np.argmin(crit)), v


def select_factor_number(
    panel: PanelData, cfg: SelectionConfig, rip_cfg: RipConfig | None = None
) -> SelectionReport:
    """Run the configured selectors and collect a report."""
    report = SelectionReport(r_max=cfg.r_max)
    for method in cfg.methods:
        if method == "rer":
            if rip_cfg is None:
                rip_cfg = RipConfig(r=cfg.r_max, tau=cfg.tau)
            est, spectrum = select_r_rer(panel, cfg, rip_cfg)
        elif method == "er":
            est, spectrum = select_r_er(panel, cfg)
        else:
            est, spectrum = select_r_ic(panel, cfg)
        report.estimates[method] = est
        report.eigenvalues[method] = [float(x) for x in np.asarray(spectrum).ravel()]
    return report

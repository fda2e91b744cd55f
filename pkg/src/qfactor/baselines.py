"""Least-squares (principal component) factor estimation baseline."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError, MissingDataUnsupportedError
from .panel import FactorFit, PanelData, normalize_canonical

__all__ = ["fit_pca"]


def fit_pca(panel: PanelData, r: int) -> FactorFit:
    """Rank-``r`` least-squares factor fit of a complete panel.

    Loadings come from the top eigenvectors of the smaller Gram matrix of the
    data (``Y Y'`` when ``p <= T``, otherwise ``Y' Y``), scores from the
    induced regression; the pair is then renormalized to canonical form.  The
    returned product is the best rank-``r`` approximation in squared loss and
    ``loss`` holds that squared total.

    Raises
    ------
    MissingDataUnsupportedError
        If the panel has unobserved entries.
    RankDeficientError
        If the data matrix has numerical rank below ``r``.
    """
    if r < 1:
        raise InvalidParameterError("factor count r must be at least 1")
    if not panel.is_complete:
        raise MissingDataUnsupportedError("least-squares factor path needs a complete panel")
    y = panel.values
    p, T = y.shape
    if r > min(p, T):
        raise InvalidParameterError("r cannot exceed min(p, T)")
    if p <= T:
        _, vecs = np.linalg.eigh(y @ y.T)
        u = vecs[:, ::-1][:, :r]
        loadings0 = u
        scores0 = u.T @ y
    else:
        _, vecs = np.linalg.eigh(y.T @ y)
        v = vecs[:, ::-1][:, :r]
        loadings0 = y @ v
        scores0 = v.T
    loadings, scores = normalize_canonical(loadings0, scores0)
    residuals = y - loadings @ scores
    return FactorFit(
        loadings=loadings,
        scores=scores,
        residuals=residuals,
        loss=float(np.sum(residuals**2)),
        iterations=1,
        tau=None,
        converged=True,
    )

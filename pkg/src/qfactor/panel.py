"""Core panel/matrix types, canonical normalization, and rotation utilities.

A panel is a ``p x T`` matrix of observations (rows = variables, columns =
time points) with an optional missingness mask.  Factor fits are identified
only up to invertible mixing, so estimators normalize their output to the
canonical form in which the score Gram matrix ``F F' / T`` is the identity
and the loading Gram matrix ``L' L / p`` is diagonal with descending entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    InvalidParameterError,
    NotOrthonormalError,
    RankDeficientError,
    SingularMatrixError,
)

__all__ = [
    "PanelData",
    "FactorFit",
    "RotationMatrix",
    "normalize_canonical",
    "alignment_rotation",
    "subspace_distance",
    "orthonormal_basis",
]

_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PanelData:
    """Observed panel: ``values[i, t]`` is variable ``i`` at time ``t``.

    ``mask`` is True where an entry is observed.  Every column must contain
    at least one observed entry and observed values must be finite.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidParameterError("panel values must be a non-empty 2-d matrix")
        if mask.shape != values.shape:
            raise InvalidParameterError("mask shape must match values shape")
        if not mask.any(axis=0).all():
            raise InvalidParameterError("every column needs at least one observed entry")
        if not np.isfinite(values[mask]).all():
            raise InvalidParameterError("observed entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_values(cls, values: np.ndarray, mask: Optional[np.ndarray] = None) -> "PanelData":
        """Build a panel; by default non-finite entries are treated as missing."""
        values = np.asarray(values, dtype=float)
        if mask is None:
            mask = np.isfinite(values)
        filled = np.where(mask, values, 0.0)
        return cls(filled, np.asarray(mask, dtype=bool))

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())


@dataclass
class RotationMatrix:
    """Square transformation aligning an estimated factor basis with a reference one."""

    w: np.ndarray

    def orthogonality_gap(self) -> float:
        """Max-norm deviation of ``w w'`` from the identity."""
        r = self.w.shape[0]
        return float(np.abs(self.w @ self.w.T - np.eye(r)).max())


@dataclass
class FactorFit:
    """Result of a factor estimation run.

    ``loadings`` is ``p x r``, ``scores`` is ``r x T`` and both satisfy the
    canonical constraints.  ``residuals`` equals observed values minus the
    common component (zero at unobserved entries).  ``loss`` is the objective
    value of the producing estimator: the check-loss total for quantile fits,
    the squared-error total for least-squares fits.  ``tau`` is None for
    least-squares fits.
    """

    loadings: np.ndarray
    scores: np.ndarray
    residuals: np.ndarray
    loss: float
    iterations: int
    tau: Optional[float]
    converged: bool
    trace: object = field(default=None, repr=False)

    @property
    def r(self) -> int:
        return self.loadings.shape[1]

    @property
    def common_components(self) -> np.ndarray:
        return self.loadings @ self.scores

    def validate(self, tol: float = 1e-8) -> None:
        """Check the canonical-form invariants, raising on violation."""
        p = self.loadings.shape[0]
        T = self.scores.shape[1]
        score_gram = self.scores @ self.scores.T / T
        if np.abs(score_gram - np.eye(self.r)).max() > tol:
            raise NotOrthonormalError("score Gram matrix is not the identity")
        load_gram = self.loadings.T @ self.loadings / p
        off = load_gram - np.diag(np.diag(load_gram))
        if np.abs(off).max() > tol:
            raise NotOrthonormalError("loading Gram matrix is not diagonal")
        if self.loss < 0:
            raise InvalidParameterError("loss must be nonnegative")
        if self.tau is not None and not 0.0 < self.tau < 1.0:
            raise InvalidParameterError("tau must lie in (0, 1)")


def _product_singular_values(loadings: np.ndarray, scores: np.ndarray) -> np.ndarray:
    # Singular values of the p x T product via its r x r core, never forming it.
    _, rl = np.linalg.qr(loadings)
    _, rf = np.linalg.qr(scores.T)
    return np.linalg.svd(rl @ rf.T, compute_uv=False)


def normalize_canonical(
    loadings: np.ndarray, scores: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Rotate/rescale ``(L, F)`` to canonical form without changing ``L F``.

    On return the score Gram ``F F' / T`` is the identity and the loading Gram
    ``L' L / p`` is diagonal with descending entries; column signs are fixed so
    the largest-magnitude loading entry of each column is positive.

    Raises
    ------
    RankDeficientError
        If the product ``L F`` has numerical rank below the factor count.
    """
    L = np.asarray(loadings, dtype=float)
    F = np.asarray(scores, dtype=float)
    if L.ndim != 2 or F.ndim != 2 or L.shape[1] != F.shape[0]:
        raise InvalidParameterError("loadings must be p x r and scores r x T")
    if not (np.isfinite(L).all() and np.isfinite(F).all()):
        raise InvalidParameterError("inputs must be finite")
    p, r = L.shape
    T = F.shape[1]

    sv = _product_singular_values(L, F)
    if sv[0] == 0.0 or sv[-1] <= _RANK_RTOL * sv[0]:
        raise RankDeficientError(
            f"common-component matrix has numerical rank below r={r}"
        )

    gram_f = F @ F.T / T
    vals, vecs = np.linalg.eigh(gram_f)
    root = np.sqrt(vals)
    s_half = (vecs * root) @ vecs.T
    s_inv_half = (vecs / root) @ vecs.T
    f_bar = s_inv_half @ F
    l_bar = L @ s_half

    gram_l = l_bar.T @ l_bar / p
    d, u = np.linalg.eigh(gram_l)
    order = np.argsort(-d, kind="stable")
    u = u[:, order]
    l_star = l_bar @ u
    f_star = u.T @ f_bar

    peaks = np.abs(l_star).argmax(axis=0)
    signs = np.sign(l_star[peaks, np.arange(r)])
    signs[signs == 0] = 1.0
    return l_star * signs, signs[:, None] * f_star


def alignment_rotation(
    loadings_hat: np.ndarray,
    loadings_true: np.ndarray,
    density_at_zero: np.ndarray,
    cond_limit: float = 1e12,
) -> RotationMatrix:
    """Density-weighted rotation mapping true factors onto estimated ones.

    Solves ``(sum_i h_i l̂_i l̂_i')^{-1} sum_i h_i l̂_i l_i'`` where ``h_i`` is
    the idiosyncratic density at zero for variable ``i``.  On a converged fit
    the result is close to orthogonal.
    """
    lh = np.asarray(loadings_hat, dtype=float)
    lt = np.asarray(loadings_true, dtype=float)
    h = np.asarray(density_at_zero, dtype=float).ravel()
    if lh.shape[0] != lt.shape[0] or lh.shape[0] != h.size:
        raise InvalidParameterError("row counts of loadings and densities must agree")
    if not (h > 0).all():
        raise InvalidParameterError("densities at zero must be strictly positive")
    weighted = lh * h[:, None]
    gram = weighted.T @ lh
    cross = weighted.T @ lt
    if np.linalg.cond(gram) > cond_limit:
        raise SingularMatrixError("density-weighted loading Gram matrix is singular")
    return RotationMatrix(np.linalg.solve(gram, cross))


def subspace_distance(q1: np.ndarray, q2: np.ndarray, tol: float = 1e-6) -> float:
    """Distance in [0, 1] between the column spaces of two orthonormal matrices.

    Returns ``sqrt(1 - Tr(Q1 Q1' Q2 Q2') / max(q1, q2))``: 0 for equal spaces,
    1 for orthogonal ones.

    Raises
    ------
    NotOrthonormalError
        If either input fails ``max|Q'Q - I| <= tol``.
    """
    a = np.asarray(q1, dtype=float)
    b = np.asarray(q2, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise InvalidParameterError("inputs must be 2-d with a common row count")
    for m in (a, b):
        gap = np.abs(m.T @ m - np.eye(m.shape[1])).max()
        if gap > tol:
            raise NotOrthonormalError(f"columns are not orthonormal (gap {gap:.2e})")
    overlap = float(np.sum((a.T @ b) ** 2))
    value = 1.0 - overlap / max(a.shape[1], b.shape[1])
    return float(np.sqrt(min(max(value, 0.0), 1.0)))


def orthonormal_basis(m: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of ``m`` (reduced QR)."""
    a = np.asarray(m, dtype=float)
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if diag.min() <= _RANK_RTOL * max(diag.max(), 1.0):
        raise RankDeficientError("matrix does not have full column rank")
    return q

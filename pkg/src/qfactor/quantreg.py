"""Weighted-L1 (check-loss) linear regression.

The solver is a majorize-minimize scheme: iteratively reweighted least
squares on the check loss with a smoothing parameter ``eps`` continued from
1e-2 down to 1e-8, followed by a polish step that snaps to the best
interpolating (basic) solution found near the smoothed path.  The optimum
*value* is the contract; on a flat optimal face the reported point is the
limit of the smoothed path.

An exact linear-programming reference (`lp_reference`) on the split-variable
formulation is provided for validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import EmptyInputError, InsufficientDataError, InvalidParameterError

__all__ = [
    "QuantRegProblem",
    "QuantRegSolution",
    "check_loss",
    "check_objective",
    "quantile_regress",
    "batch_quantile_regress",
    "empirical_quantile",
    "lp_reference",
]

EPS_LADDER = (1e-2, 1e-4, 1e-6, 1e-8)
WARM_EPS_LADDER = (1e-6, 1e-8)
BATCH_LADDER = (1e-2, 1e-4, 1e-6)
BATCH_WARM_LADDER = (1e-5, 1e-7)
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


def check_loss(x, tau: float):
    """Check loss ``(tau - 1{x <= 0}) * x``; works on scalars and arrays."""
    if not 0.0 < tau < 1.0:
        raise InvalidParameterError("tau must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    out = (tau - (x <= 0.0)) * x
    return float(out) if out.ndim == 0 else out


def check_objective(residuals: np.ndarray, tau: float) -> float:
    """Total check loss of a residual vector/matrix."""
    return float(np.sum(check_loss(residuals, tau)))


@dataclass(frozen=True)
class QuantRegProblem:
    """A single check-loss regression: minimize ``sum rho_tau(y - X beta)``.

    Rows where ``include_mask`` is False contribute no loss (used for missing
    panel entries).
    """

    design: np.ndarray
    response: np.ndarray
    tau: float
    include_mask: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise InvalidParameterError("design must be n x k with matching response")
        if not 0.0 < self.tau < 1.0:
            raise InvalidParameterError("tau must lie in (0, 1)")
        mask = self.include_mask
        mask = np.ones(y.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != y.shape:
            raise InvalidParameterError("include_mask must match the response length")
        if not (np.isfinite(X[mask]).all() and np.isfinite(y[mask]).all()):
            raise InvalidParameterError("included rows must be finite")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "include_mask", mask)

    @property
    def n_included(self) -> int:
        return int(self.include_mask.sum())

    @property
    def k(self) -> int:
        return self.design.shape[1]


@dataclass
class QuantRegSolution:
    beta: np.ndarray
    objective: float
    solver_iterations: int
    status: str  # "optimal" | "max_iter" | "degenerate"


def _irls_path(
    X: np.ndarray,
    y: np.ndarray,
    tau: float,
    tol: float,
    max_iter: int,
    beta0: Optional[np.ndarray],
    ladder: tuple[float, ...],
) -> tuple[np.ndarray, float, int, bool]:
    """Smoothed IRLS on one problem; returns (best beta, best objective, iters, converged)."""
    n, k = X.shape
    if beta0 is None:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    else:
        beta = np.asarray(beta0, dtype=float).copy()
    best_beta = beta.copy()
    best_obj = check_objective(y - X @ beta, tau)
    iters = 0
    converged = False
    obj_prev = best_obj
    for eps in ladder:
        # Iterates oscillate at O(eps) scale; only the last rung is held to
        # the requested tolerance.
        rung_tol = max(tol, 0.1 * eps)
        while iters < max_iter:
            r = y - X @ beta
            a = np.where(r > 0.0, tau, 1.0 - tau)
            w = a / np.maximum(np.abs(r), eps)
            sw = np.sqrt(w)
            beta, *_ = np.linalg.lstsq(sw[:, None] * X, sw * y, rcond=None)
            obj = check_objective(y - X @ beta, tau)
            iters += 1
            if obj < best_obj:
                best_obj = obj
                best_beta = beta.copy()
            done = abs(obj_prev - obj) <= rung_tol * (1.0 + abs(obj))
            obj_prev = obj
            if done:
                converged = eps == ladder[-1]
                break
        if iters >= max_iter:
            break
    return best_beta, best_obj, iters, converged


def _initial_basis(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> Optional[np.ndarray]:
    """An invertible k-row interpolation set near the current point, if any."""
    n, k = X.shape
    if k > n:
        return None
    order = np.argsort(np.abs(y - X @ beta), kind="stable")
    pool = order[: min(n, k + 4)]
    for subset in combinations(range(len(pool)), k):
        rows = pool[list(subset)]
        if abs(np.linalg.det(X[rows])) > 1e-300:
            return rows
    return None


def _vertex_descent(
    X: np.ndarray,
    y: np.ndarray,
    tau: float,
    basis: np.ndarray,
    max_pivots: int = 200,
    tol: float = 1e-10,
) -> tuple[np.ndarray, float, bool]:
    """Exact descent over interpolating vertices (simplex pivots).

    Starting from an invertible row basis, checks the subgradient optimality
    certificate; on violation the worst row leaves the basis and an exact
    piecewise-linear line search along the freed direction picks the entering
    row.  Terminates at the global optimum of the check-loss program on
    nondegenerate data; the flag reports whether optimality was certified.
    """
    n, k = X.shape
    basis = list(map(int, basis))
    beta = np.linalg.solve(X[basis], y[basis])
    obj = check_objective(y - X @ beta, tau)
    for _ in range(max_pivots):
        xs = X[basis]
        resid = y - X @ beta
        slopes = np.where(resid > 0.0, tau, tau - 1.0)
        slopes[basis] = 0.0
        try:
            mult = np.linalg.solve(xs.T, -(X.T @ slopes))
        except np.linalg.LinAlgError:
            return beta, obj, False
        viol_hi = mult - tau
        viol_lo = (tau - 1.0) - mult
        worst = int(np.argmax(np.maximum(viol_hi, viol_lo)))
        if max(viol_hi[worst], viol_lo[worst]) <= tol:
            return beta, obj, True
        sign = -1.0 if viol_hi[worst] > viol_lo[worst] else 1.0
        direction = sign * np.linalg.solve(xs, np.eye(k)[:, worst])
        xg = X @ direction
        slope = (tau - mult[worst]) if sign < 0 else (mult[worst] + 1.0 - tau)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cross = resid / xg
        t_cross[basis] = np.inf
        t_cross[~np.isfinite(t_cross)] = np.inf
        t_cross[t_cross <= 1e-14] = np.inf
        order = np.argsort(t_cross, kind="stable")
        entering = -1
        for i in order:
            if not np.isfinite(t_cross[i]):
                break
            slope += abs(xg[i])
            if slope >= 0.0:
                entering = int(i)
                break
        if entering < 0:
            return beta, obj, False  # unbounded direction (should not happen)
        basis[worst] = entering
        new_beta = np.linalg.solve(X[basis], y[basis])
        new_obj = check_objective(y - X @ new_beta, tau)
        if new_obj > obj + 1e-9 * (1.0 + obj):
            return beta, obj, False  # degenerate cycling guard
        beta, obj = new_beta, new_obj
    return beta, obj, False


def _polish(
    X: np.ndarray,
    y: np.ndarray,
    tau: float,
    beta: np.ndarray,
    objective: float,
) -> tuple[np.ndarray, float]:
    """Exact endgame for one problem: descend over vertices from the point."""
    basis = _initial_basis(X, y, beta)
    if basis is None:
        return beta, objective
    cand, cand_obj, _ = _vertex_descent(X, y, tau, basis)
    if cand_obj <= objective + 1e-12 * (1.0 + abs(objective)):
        return cand, min(cand_obj, objective)
    return beta, objective


def quantile_regress(
    prob: QuantRegProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    beta0: Optional[np.ndarray] = None,
) -> QuantRegSolution:
    """Solve a check-loss regression to near-LP accuracy.

    Returns a solution whose objective matches the exact LP optimum within
    ``tol`` relative on non-degenerate problems.  When the included rows are
    fewer than ``k`` or the design is column rank deficient the minimum-norm
    stationary point of the smoothed path is returned with status
    ``"degenerate"``.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    mask = prob.include_mask
    X = prob.design[mask]
    y = prob.response[mask]
    n, k = X.shape
    degenerate = n < k or (n > 0 and np.linalg.matrix_rank(X) < k)
    if n == 0:
        return QuantRegSolution(np.zeros(k), 0.0, 0, "degenerate")
    ladder = EPS_LADDER if beta0 is None else WARM_EPS_LADDER
    beta, obj, iters, converged = _irls_path(X, y, tau=prob.tau, tol=tol,
                                             max_iter=max_iter, beta0=beta0,
                                             ladder=ladder)
    if not degenerate:
        beta, obj = _polish(X, y, prob.tau, beta, obj)
    status = "degenerate" if degenerate else ("optimal" if converged else "max_iter")
    return QuantRegSolution(beta, obj, iters, status)


def empirical_quantile(values, tau: float) -> float:
    """Smallest value whose empirical CDF reaches ``tau`` (left-continuous)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInputError("cannot take a quantile of an empty sample")
    if not 0.0 < tau < 1.0:
        raise InvalidParameterError("tau must lie in (0, 1)")
    s = np.sort(v)
    idx = max(int(np.ceil(tau * v.size - 1e-9)) - 1, 0)
    return float(s[idx])


def lp_reference(X: np.ndarray, y: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Exact LP optimum of the check-loss program (validation reference).

    Uses the split-variable formulation ``y - X beta = u+ - u-`` with
    objective ``tau 1'u+ + (1 - tau) 1'u-`` solved by scipy's HiGHS backend.
    """
    from scipy.optimize import linprog

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    c = np.concatenate([np.zeros(k), tau * np.ones(n), (1.0 - tau) * np.ones(n)])
    a_eq = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"LP reference failed: {res.message}")
    return float(res.fun), res.x[:k]


@dataclass
class BatchRegression:
    """Solutions of many check-loss regressions sharing one design matrix."""

    coefficients: np.ndarray  # (k, m)
    objectives: np.ndarray  # (m,)
    iterations: int
    degenerate: np.ndarray = field(default=None)  # (m,) bool


def _batch_normal_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(A, b[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        return np.einsum("mkl,ml->mk", np.linalg.pinv(A), b)


def batch_quantile_regress(
    design: np.ndarray,
    responses: np.ndarray,
    tau: float,
    mask: Optional[np.ndarray] = None,
    warm: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    max_rounds: int = 240,
    rank_check: bool = True,
    exact: bool = True,
) -> BatchRegression:
    """Solve ``m`` check-loss regressions with common design ``X`` (n x k).

    ``responses`` is ``n x m`` (one problem per column); ``mask`` marks the
    rows included in each problem.  All columns are iterated together with
    vectorized reweighted least squares, so the cost per sweep is a single
    batched ``k x k`` solve.  With ``warm`` starts the smoothing ladder is
    shortened, which keeps alternating-minimization sweeps cheap.

    With ``exact`` the endgame verifies every column against the vertex
    optimality certificate and polishes failures, so objectives match the LP
    optimum to near machine accuracy; without it the solve stops after the
    ladder and one vertex snap (objectives can then sit a hair above the
    optimum, which alternating sweeps tolerate).

    Raises
    ------
    InsufficientDataError
        If some column includes fewer than ``k`` rows.
    """
    X = np.asarray(design, dtype=float)
    Y = np.asarray(responses, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise InvalidParameterError("design and responses must share the row count")
    if not 0.0 < tau < 1.0:
        raise InvalidParameterError("tau must lie in (0, 1)")
    n, k = X.shape
    m = Y.shape[1]
    inc = np.ones((n, m)) if mask is None else np.asarray(mask, dtype=float)
    counts = inc.sum(axis=0)
    if (counts < k).any():
        bad = int(np.argmin(counts))
        raise InsufficientDataError(
            f"problem {bad} has {int(counts[bad])} observations for {k} parameters"
        )

    degenerate = np.zeros(m, dtype=bool)
    if rank_check:
        gram = np.einsum("ik,im,il->mkl", X, inc, X, optimize=True)
        eigs = np.linalg.eigvalsh(gram)
        degenerate = eigs[:, 0] <= 1e-12 * np.maximum(eigs[:, -1], 1e-300)

    if warm is not None:
        beta = np.asarray(warm, dtype=float).copy()
        ladder = BATCH_WARM_LADDER
    else:
        a0 = inc
        A = np.einsum("ik,im,il->mkl", X, a0, X, optimize=True)
        A += 1e-12 * np.eye(k)
        b = np.einsum("ik,im,im->mk", X, a0, Y, optimize=True)
        beta = _batch_normal_solve(A, b).T
        ladder = BATCH_LADDER

    best_beta = beta.copy()
    best_obj = np.sum(check_loss(Y - X @ beta, tau) * inc, axis=0)
    state = _BatchState(X, Y, inc, tau, beta, best_beta, best_obj)
    rounds = state.sweep(np.arange(m), ladder, tol, max_rounds, rung_cap=25)

    if not exact:
        state.snap()
        return BatchRegression(state.best_beta, state.best_obj, rounds, degenerate)

    # Exact endgame: snap columns onto the interpolating vertex of their k
    # smallest residuals and verify optimality through the subgradient
    # certificate; columns failing it get extra sharp-smoothing sweeps, then
    # a per-column polish over nearby vertices.
    good = np.zeros(m, dtype=bool)
    for _ in range(3):
        idx = state.snap()
        good = state.certificate(idx)
        if good.all() or rounds >= max_rounds:
            break
        cols = np.flatnonzero(~good)
        state.beta[:, cols] = state.best_beta[:, cols]
        rounds += state.sweep(
            cols, (1e-8,), tol, min(15, max_rounds - rounds), rung_cap=15
        )
    for j in np.flatnonzero(~good):
        rows = inc[:, j] > 0
        state.best_beta[:, j], state.best_obj[j] = _polish(
            X[rows], Y[rows, j], tau, state.best_beta[:, j], state.best_obj[j]
        )
    return BatchRegression(state.best_beta, state.best_obj, rounds, degenerate)


class _BatchState:
    """Mutable state of a batched IRLS solve (one shared design matrix)."""

    def __init__(self, X, Y, inc, tau, beta, best_beta, best_obj):
        self.X, self.Y, self.inc, self.tau = X, Y, inc, tau
        self.beta, self.best_beta, self.best_obj = beta, best_beta, best_obj
        self.obj_prev = best_obj.copy()

    def sweep(
        self,
        cols: np.ndarray,
        ladder: tuple[float, ...],
        tol: float,
        max_rounds: int,
        rung_cap: int = 25,
    ) -> int:
        """Run the smoothing ladder over the given columns; returns sweep count.

        Iterates oscillate at O(eps) scale, so a column settles within a rung
        once its objective change falls below that scale or its best objective
        stops improving; it is then frozen until the next rung.  Each rung is
        additionally capped at ``rung_cap`` sweeps so slow tails cannot starve
        later rungs (the endgame is handled by snap and certificate).
        """
        X, Y, inc, tau = self.X, self.Y, self.inc, self.tau
        k = X.shape[1]
        eye = 1e-14 * np.eye(k)
        rounds = 0
        stall = np.zeros(self.best_obj.size, dtype=np.int8)
        for eps in ladder:
            rung_tol = max(tol, 0.1 * eps)
            active = cols.copy()
            stall[cols] = 0
            rung_rounds = 0
            while rounds < max_rounds and rung_rounds < rung_cap and active.size:
                Ya = Y[:, active]
                inca = inc[:, active]
                R = Ya - X @ self.beta[:, active]
                a = np.where(R > 0.0, tau, 1.0 - tau) * inca
                w = a / np.maximum(np.abs(R), eps)
                A = np.einsum("ik,im,il->mkl", X, w, X, optimize=True)
                A += eye
                b = np.einsum("ik,im,im->mk", X, w, Ya, optimize=True)
                new = _batch_normal_solve(A, b).T
                self.beta[:, active] = new
                obj = np.sum(check_loss(Ya - X @ new, tau) * inca, axis=0)
                rounds += 1
                rung_rounds += 1
                gain = self.best_obj[active] - obj
                improved = gain > 0
                hit = active[improved]
                self.best_beta[:, hit] = new[:, improved]
                self.best_obj[hit] = obj[improved]
                significant = gain > rung_tol * 1e-2 * (1.0 + np.abs(obj))
                stall[active] = np.where(significant, 0, stall[active] + 1)
                settled = (
                    np.abs(self.obj_prev[active] - obj) <= rung_tol * (1.0 + np.abs(obj))
                ) | (stall[active] >= 3)
                self.obj_prev[active] = obj
                active = active[~settled]
            if rounds >= max_rounds:
                break
        return rounds

    def snap(self) -> np.ndarray:
        """Move each column to the interpolating solution of its k smallest
        residuals when that does not worsen the objective; returns the (k, m)
        row sets used."""
        X, Y, inc, tau = self.X, self.Y, self.inc, self.tau
        n, k = X.shape
        resid = np.where(inc > 0, np.abs(Y - X @ self.best_beta), np.inf)
        idx = np.argpartition(resid, k - 1, axis=0)[:k]  # (k, m)
        systems = X[idx.T]  # (m, k, k)
        targets = np.take_along_axis(Y, idx, axis=0).T  # (m, k)
        dets_ok = np.abs(np.linalg.det(systems)) > 1e-300
        if dets_ok.any():
            cand = np.full_like(self.best_beta, np.nan)
            cand[:, dets_ok] = _batch_normal_solve(systems[dets_ok], targets[dets_ok]).T
            with np.errstate(invalid="ignore"):
                diff = np.nan_to_num(Y - X @ cand, nan=0.0)
                cand_obj = np.sum(check_loss(diff, tau) * inc, axis=0)
            finite = np.isfinite(cand).all(axis=0) & dets_ok
            # Strict improvement only: tie acceptance would flap between
            # equal-objective vertices across warm-started calls.
            accept = finite & (cand_obj < self.best_obj)
            self.best_beta[:, accept] = cand[:, accept]
            self.best_obj[accept] = cand_obj[accept]
        return idx

    def certificate(self, idx: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Exact subgradient optimality check of the interpolating vertices.

        A vertex with active rows S is optimal iff the k x k system
        ``X_S' c = -X_rest' s_rest`` has a solution with every ``c_i`` in
        ``[tau - 1, tau]``, where ``s_i`` is the check-loss slope at the
        residual sign of each non-active row.
        """
        X, Y, inc, tau = self.X, self.Y, self.inc, self.tau
        m = Y.shape[1]
        k = X.shape[1]
        R = Y - X @ self.best_beta
        # The vertex algebra only applies where the point interpolates its
        # candidate rows; anything else cannot be certified.
        scale = 1.0 + np.abs(Y).max(axis=0)
        interpolates = (
            np.abs(np.take_along_axis(R, idx, axis=0)).max(axis=0) <= 1e-9 * scale
        )
        s = np.where(R > 0.0, tau, tau - 1.0) * inc
        np.put_along_axis(s, idx, 0.0, axis=0)
        rhs = -(X.T @ s)  # (k, m)
        systems_t = np.swapaxes(X[idx.T], 1, 2)
        ok = interpolates & (np.abs(np.linalg.det(systems_t)) > 1e-300)
        c = np.full((m, k), np.nan)
        if ok.any():
            c[ok] = _batch_normal_solve(systems_t[ok], rhs.T[ok])
        with np.errstate(invalid="ignore"):
            inside = (c >= tau - 1.0 - tol) & (c <= tau + tol)
        return ok & np.isfinite(c).all(axis=1) & inside.all(axis=1)

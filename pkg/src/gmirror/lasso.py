"""Lasso by cyclic coordinate descent, with K-fold cross-validated penalty.

Objective convention throughout the package::

    ||y - X b||_2^2 + lam * ||b||_1

(no 1/2 and no 1/n), so the all-zero solution appears at
``lam >= 2 max_j |x_j' y|`` and the coordinate update soft-thresholds at
``lam / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import _streams
from .errors import ConvergenceError
from .linalg import RegressionProblem

MAX_CYCLES = 100_000
OBJ_TOL = 1e-10
STEP_TOL = 1e-9
ZERO_CLAMP = 1e-12
GRID_SIZE = 50
GRID_RATIO = 1e-4


@dataclass(frozen=True)
class LassoFit:
    coefficients: np.ndarray
    penalty: float
    active_set: np.ndarray
    signs: np.ndarray
    objective: float
    cycles: int = 0


@numba.njit(cache=True)
def _sweep(X, r, beta, col_sq, half, idx):
    max_step = 0.0
    for j in idx:
        cj = col_sq[j]
        if cj == 0.0:
            continue
        old = beta[j]
        rho = 0.0
        for i in range(X.shape[0]):
            rho += X[i, j] * r[i]
        rho += cj * old
        if rho > half:
            new = (rho - half) / cj
        elif rho < -half:
            new = (rho + half) / cj
        else:
            new = 0.0
        d = new - old
        if d != 0.0:
            for i in range(X.shape[0]):
                r[i] -= X[i, j] * d
            beta[j] = new
            step = abs(d) * cj
            if step > max_step:
                max_step = step
    return max_step


@numba.njit(cache=True)
def _objective(r, beta, lam):
    return np.dot(r, r) + lam * np.sum(np.abs(beta))


@numba.njit(cache=True)
def _cd(X, y, beta, lam, col_sq, max_cycles, obj_tol, step_tol):
    """Full sweeps alternate with sweeps restricted to the current support."""
    p = X.shape[1]
    half = 0.5 * lam
    r = y - X @ beta
    everything = np.arange(p)
    obj = _objective(r, beta, lam)
    cycles = 0
    gap = np.inf
    while cycles < max_cycles:
        step = _sweep(X, r, beta, col_sq, half, everything)
        cycles += 1
        new_obj = _objective(r, beta, lam)
        gap = obj - new_obj
        obj = new_obj
        if gap < obj_tol * max(1.0, obj) and step < step_tol * max(1.0, half):
            break
        active = np.nonzero(beta)[0]
        while cycles < max_cycles and active.size > 0:
            step = _sweep(X, r, beta, col_sq, half, active)
            cycles += 1
            new_obj = _objective(r, beta, lam)
            inner_gap = obj - new_obj
            obj = new_obj
            if inner_gap < obj_tol * max(1.0, obj) and step < step_tol * max(1.0, half):
                break
    return cycles, gap


def _finish(X, y, beta, lam, cycles, gap):
    if cycles >= MAX_CYCLES and not gap < OBJ_TOL:
        raise ConvergenceError(f"coordinate descent did not converge in {MAX_CYCLES} cycles", gap)
    beta = beta.copy()
    beta[np.abs(beta) < ZERO_CLAMP] = 0.0
    r = y - X @ beta
    active = np.nonzero(beta)[0]
    return LassoFit(beta, float(lam), active, np.sign(beta[active]).astype(int),
                    float(r @ r + lam * np.abs(beta).sum()), int(cycles))


def _prepare(X, y):
    X = np.asfortranarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    return X, y, np.einsum("ij,ij->j", X, X)


def lasso_fit(problem: RegressionProblem, penalty: float, warm_start=None) -> LassoFit:
    """Minimize ``||y - X b||^2 + penalty * ||b||_1``."""
    return lasso_fit_arrays(problem.X, problem.y, penalty, warm_start)


def lasso_fit_arrays(X, y, penalty, warm_start=None, _prepared=None) -> LassoFit:
    if not penalty > 0:
        raise ValueError(f"penalty must be positive, got {penalty}")
    X, y, col_sq = _prepared if _prepared is not None else _prepare(X, y)
    beta = np.zeros(X.shape[1]) if warm_start is None else np.array(warm_start, dtype=float)
    cycles, gap = _cd(X, y, beta, float(penalty), col_sq, MAX_CYCLES, OBJ_TOL, STEP_TOL)
    return _finish(X, y, beta, penalty, cycles, gap)


SATURATION = 1e-3


def lasso_path(X, y, penalties, warm: bool = True, stop_saturated: bool = False) -> list[LassoFit]:
    """Fits along ``penalties`` (any order), optionally warm-started.

    With ``stop_saturated`` the path ends after the first fit whose residual
    sum of squares drops below ``SATURATION * ||y||^2`` or whose support
    reaches ``n``, or before a fit that fails to converge (near-interpolating
    fits with p > n); the returned list is then shorter than ``penalties``.
    """
    prepared = _prepare(X, y)
    fits = []
    beta = None
    tss = float(prepared[1] @ prepared[1])
    n = prepared[0].shape[0]
    for lam in penalties:
        try:
            fit = lasso_fit_arrays(X, y, lam, beta if warm else None, prepared)
        except ConvergenceError:
            if not stop_saturated or not fits:
                raise
            break
        beta = fit.coefficients
        fits.append(fit)
        if stop_saturated:
            rss = fit.objective - lam * float(np.abs(beta).sum())
            if rss < SATURATION * tss or fit.active_set.size >= n:
                break
    return fits


def lambda_max(X, y) -> float:
    return float(2.0 * np.max(np.abs(np.asarray(X).T @ np.asarray(y))))


def lambda_grid(X, y, size: int = GRID_SIZE, ratio: float = GRID_RATIO) -> np.ndarray:
    """Decreasing log-spaced grid from ``lambda_max`` down to ``ratio * lambda_max``."""
    top = lambda_max(X, y)
    return np.geomspace(top, top * ratio, size)


def fold_labels(n: int, folds: int, rng_seed: int) -> np.ndarray:
    """Seeded shuffle followed by round-robin assignment."""
    order = _streams.stream(rng_seed, _streams.CV_FOLDS).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[order] = np.arange(n) % folds
    return labels


def cv_curve(problem: RegressionProblem, folds: int = 5, rng_seed: int = 0, threads=None,
             grid=None):
    """``(grid, mean held-out squared error)`` over the penalty grid.

    Grid points past a fold's saturation point (see :func:`lasso_path`) get
    infinite error.
    """
    X, y = problem.X, problem.y
    n = X.shape[0]
    if folds < 2 or n < 2 * folds:
        raise ValueError(f"need folds >= 2 and n >= 2*folds (n={n}, folds={folds})")
    grid = lambda_grid(X, y) if grid is None else np.asarray(grid, dtype=float)
    labels = fold_labels(n, folds, rng_seed)

    def held_out(k):
        train = labels != k
        fits = lasso_path(X[train], y[train], grid, stop_saturated=True)
        B = np.column_stack([f.coefficients for f in fits])
        err = y[~train, None] - X[~train] @ B
        sse = np.full(grid.size, np.inf)
        sse[:len(fits)] = np.sum(err ** 2, axis=0)
        return sse

    sse = np.sum(_streams.parallel_map(held_out, range(folds), threads), axis=0)
    return grid, sse / n


def cross_validate_lambda(problem: RegressionProblem, folds: int = 5, rng_seed: int = 0,
                          threads=None) -> float:
    """Grid penalty with the smallest mean held-out squared error (ties -> larger)."""
    grid, err = cv_curve(problem, folds, rng_seed, threads)
    return float(grid[int(np.argmin(err))])


def theoretical_lambda(problem: RegressionProblem, sigma: float, rescale: bool = True) -> float:
    """``4 sigma sqrt(log p / n)``, the screening penalty for ``||.||^2/n + lam||.||_1``.

    With ``rescale`` (default) the value is multiplied by ``n`` to match this
    module's ``||.||^2 + lam||.||_1`` objective, i.e. ``4 sigma sqrt(n log p)``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    n, p = problem.X.shape
    raw = 4.0 * sigma * math.sqrt(math.log(p) / n)
    return raw * n if rescale else raw


def kkt_violation(X, y, coefficients, penalty) -> float:
    """Largest violation of the Lasso optimality conditions."""
    X = np.asarray(X, dtype=float)
    b = np.asarray(coefficients, dtype=float)
    g = X.T @ (y - X @ b)
    half = 0.5 * penalty
    active = b != 0
    viol_active = np.abs(g[active] - half * np.sign(b[active]))
    viol_inactive = np.maximum(np.abs(g[~active]) - half, 0.0)
    return float(max(viol_active.max(initial=0.0), viol_inactive.max(initial=0.0)))

"""Dense least-squares substrate: standardization, QR solves, projections."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ConstantColumnError, SingularDesignError

RANK_RTOL = 1e-10
_STANDARD_TOL = 1e-12


@dataclass(frozen=True)
class RegressionProblem:
    """Design matrix ``X`` (n x p) with response ``y``.

    ``scale`` and ``center`` record the affine map applied by
    :func:`standardize`: ``X = (X_raw - center) * scale``.  A coefficient
    ``b`` on the standardized scale is ``b * scale`` in raw units.
    """

    X: np.ndarray
    y: np.ndarray
    standardized: bool = False
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    y_center: float = 0.0
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ValueError("design must be two-dimensional")
        if X.shape[0] < 1:
            raise ValueError("design must have at least one row")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"response length {y.shape[0]} != design rows {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design and response must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_response(self, y) -> "RegressionProblem":
        return RegressionProblem(self.X, y, self.standardized, self.center, self.scale,
                                 self.y_center, self.feature_names)

    def to_raw_coefficients(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        return beta if self.scale is None else beta * self.scale


def is_standardized(X, tol=1e-8) -> bool:
    n = X.shape[0]
    return bool(np.all(np.abs(X.mean(axis=0)) < tol)
                and np.all(np.abs((X ** 2).sum(axis=0) - n) < tol * n))


def standardize(problem: RegressionProblem) -> RegressionProblem:
    """Center every column and scale it to squared norm ``n``; center ``y``.

    Columns that already satisfy the convention to 1e-12 are left untouched,
    which makes the operation exactly idempotent.
    """
    X = problem.X
    n, p = X.shape
    means = X.mean(axis=0)
    Xc = X - means
    sq = (Xc ** 2).sum(axis=0)
    for j in range(p):
        if not sq[j] > 1e-24 * max(1.0, float(np.max(np.abs(X[:, j])) ** 2) * n):
            raise ConstantColumnError(j)
    factor = np.sqrt(n / sq)
    done = (np.abs(means) < _STANDARD_TOL) & (np.abs(sq - n) < _STANDARD_TOL * n)
    Xs = np.where(done, X, Xc * factor)
    factor = np.where(done, 1.0, factor)
    means = np.where(done, 0.0, means)

    old_center = np.zeros(p) if problem.center is None else problem.center
    old_scale = np.ones(p) if problem.scale is None else problem.scale
    # raw -> (raw - c0) s0 -> ((raw - c0) s0 - m) f = (raw - (c0 + m / s0)) s0 f
    center = old_center + means / old_scale
    scale = old_scale * factor

    y_mean = float(problem.y.mean())
    if abs(y_mean) < _STANDARD_TOL * max(1.0, float(np.max(np.abs(problem.y)))):
        y, y_mean = problem.y, 0.0
    else:
        y = problem.y - y_mean
    return RegressionProblem(Xs, y, True, center, scale, problem.y_center + y_mean,
                             problem.feature_names)


@dataclass(frozen=True)
class QRFactor:
    """Pivoted thin QR ``X[:, perm] = Q R`` of a full-column-rank matrix."""

    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray

    @property
    def cols(self) -> int:
        return self.R.shape[1]

    def solve(self, y) -> np.ndarray:
        """Least-squares coefficients for one or many right-hand sides."""
        z = self.Q.T @ y
        b = sla.solve_triangular(self.R, z, check_finite=False)
        out = np.empty_like(b)
        out[self.perm] = b
        return out

    def project_out(self, v) -> np.ndarray:
        return v - self.Q @ (self.Q.T @ v)

    def pinv_rows(self, rows) -> np.ndarray:
        """Rows ``rows`` of the pseudo-inverse, as an (len(rows), n) array."""
        inv_perm = np.empty_like(self.perm)
        inv_perm[self.perm] = np.arange(self.perm.size)
        E = np.zeros((self.cols, len(rows)))
        E[inv_perm[np.asarray(rows)], np.arange(len(rows))] = 1.0
        W = sla.solve_triangular(self.R, E, trans="T", check_finite=False)
        return (self.Q @ W).T

    def inverse_gram(self) -> np.ndarray:
        """``(X^T X)^{-1}`` in the original column order."""
        Rinv = sla.solve_triangular(self.R, np.eye(self.cols), check_finite=False)
        G = Rinv @ Rinv.T
        inv_perm = np.empty_like(self.perm)
        inv_perm[self.perm] = np.arange(self.perm.size)
        return G[np.ix_(inv_perm, inv_perm)]


def thin_qr(X) -> QRFactor:
    """Column-pivoted QR with a relative pivot tolerance of 1e-10."""
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    if m > n:
        raise SingularDesignError(f"design has {m} columns but only {n} rows", deficient=m - n)
    if m == 0:
        return QRFactor(np.zeros((n, 0)), np.zeros((0, 0)), np.zeros(0, dtype=int))
    Q, R, perm = sla.qr(X, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R))
    bad = int(np.sum(d < RANK_RTOL * d[0])) if d[0] > 0 else m
    if bad:
        raise SingularDesignError(f"design is rank deficient by {bad} column(s)", deficient=bad)
    return QRFactor(Q, R, perm)


def least_squares(design, response) -> np.ndarray:
    """``argmin ||y - X b||^2`` via pivoted QR."""
    return thin_qr(design).solve(np.asarray(response, dtype=float))


def project_out(v, basis) -> np.ndarray:
    """``(I - P_B) v`` for the column space of ``basis`` (empty basis allowed)."""
    v = np.asarray(v, dtype=float)
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.shape[1] == 0:
        return v.copy()
    return thin_qr(basis).project_out(v)

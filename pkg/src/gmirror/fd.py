"""Top-k false-discovery estimates and residual-bootstrap intervals."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _streams
from .errors import BootstrapError, GaussianMirrorError, InvalidKError
from .lasso import lasso_fit
from .linalg import RegressionProblem, least_squares
from .ols import run_gm_ols
from .postselect import LassoOptions, choose_penalty, run_gm_lasso

MAX_FAILURE_RATE = 0.10


@dataclass
class FdInterval:
    k: int
    point_estimate: int
    ci_low: int
    ci_high: int
    upper_bound: int
    alpha: float
    bootstrap_samples: int
    seed: int
    method: str = "ols"
    base: str = "ols"
    replicates: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    failed: int = 0
    statistics: np.ndarray | None = field(default=None, repr=False)


def fd_hat(statistics, k: int) -> int:
    """Number of statistics strictly below ``-M_(k)``, the k-th largest.

    ``nan`` entries (features without a statistic) are ignored.
    """
    M = np.asarray(statistics, dtype=float)
    M = M[~np.isnan(M)]
    positive = int(np.sum(M > 0))
    if not 1 <= k <= positive:
        raise InvalidKError(f"k={k} must lie in [1, {positive}] (number of positive statistics)")
    m_k = np.sort(M)[::-1][k - 1]
    return int(np.sum(M < -m_k))


def _pipeline(problem, method, seed, options):
    if method == "ols":
        return run_gm_ols(problem, 0.1, seed, threads=1).statistics
    if method == "lasso":
        return run_gm_lasso(problem, 0.1, seed, replace(options or LassoOptions(), threads=1)).statistics
    raise ValueError(f"unknown method {method!r}")


def _order_stat(values, prob, rounding=math.floor):
    return int(rounding(np.quantile(values, prob, method="inverted_cdf")))


def bootstrap_fd(problem: RegressionProblem, method: str, k: int, B: int = 200, alpha: float = 0.05,
                 rng_seed: int = 0, recenter: bool = False, options: LassoOptions | None = None,
                 threads=None, base: str | None = None) -> FdInterval:
    """Residual bootstrap of the top-k false-discovery estimate.

    ``method`` picks the mirror pipeline (OLS or post-Lasso mirrors).  The
    fitted values come from ``base``, which defaults to the same model:
    the full OLS fit or the Lasso at the pipeline's penalty.  With p
    comparable to n the OLS fit gives every null feature a nonzero
    coefficient and residuals with variance shrunk by ``(n - p) / n``, so
    ``base="lasso"`` is the better choice there.

    Each replicate resamples residuals, rebuilds the response and reruns
    the whole mirror pipeline with its own seed.
    Interval ends are empirical ``alpha/2`` and ``1 - alpha/2`` order
    statistics; ``upper_bound`` is the ``1 - alpha`` one.  ``recenter``
    shifts the bootstrap sample to have mean equal to the point estimate.
    """
    if B < 50:
        raise ValueError(f"need at least 50 bootstrap samples, got {B}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if method not in ("ols", "lasso"):
        raise ValueError(f"unknown method {method!r}")
    observed = _pipeline(problem, method, rng_seed, options)
    point = fd_hat(observed, k)

    base = method if base is None else base
    X, y = problem.X, problem.y
    if base == "ols":
        fitted = X @ least_squares(X, y)
    elif base == "lasso":
        lam = choose_penalty(problem, replace(options or LassoOptions(), threads=1), rng_seed)
        fitted = X @ lasso_fit(problem, lam).coefficients
    else:
        raise ValueError(f"unknown base fit {base!r}")
    resid = y - fitted
    n = y.size

    def replicate(b):
        rng = _streams.stream(rng_seed, _streams.BOOTSTRAP, b)
        yb = fitted + resid[rng.integers(0, n, size=n)]
        seed_b = _streams.derive_seed(rng_seed, _streams.BOOTSTRAP, b)
        try:
            return fd_hat(_pipeline(problem.with_response(yb), method, seed_b, options), k)
        except GaussianMirrorError as exc:
            return exc

    results = _streams.parallel_map(replicate, range(B), threads)
    failures = [r for r in results if isinstance(r, Exception)]
    if failures:
        warnings.warn(f"{len(failures)} of {B} bootstrap replicates failed; first: {failures[0]}")
    if len(failures) > MAX_FAILURE_RATE * B:
        raise BootstrapError(f"{len(failures)} of {B} bootstrap replicates failed")
    values = np.array([r for r in results if not isinstance(r, Exception)], dtype=float)
    if recenter:
        values = values - values.mean() + point
    lo = max(0, _order_stat(values, alpha / 2))
    hi = min(k, _order_stat(values, 1 - alpha / 2, math.ceil))
    ub = min(k, _order_stat(values, 1 - alpha, math.ceil))
    return FdInterval(k, point, lo, hi, ub, alpha, B, rng_seed, method, base,
                      values, len(failures), observed)

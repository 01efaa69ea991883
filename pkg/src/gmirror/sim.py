"""Synthetic designs, baseline BH procedures and FDR/power experiments."""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla
from scipy import stats

from . import _streams
from .errors import GaussianMirrorError, ReplicateFailureError, SpecError
from .lasso import cross_validate_lambda, lasso_fit
from .linalg import RegressionProblem, standardize, thin_qr
from .ols import run_gm_ols
from .postselect import LassoOptions, run_gm_lasso
from .selection import SelectionReport

DESIGN_KINDS = ("ar1", "constant_corr", "constant_partial", "student_t", "bimodal", "csv")
METHODS = ("gm-ols", "gm-lasso", "bh-zstat", "bh-ma", "bh-ds")
STUDENT_DF = 3
BIMODAL_SHIFT = 0.5
MAX_PARAM = 0.95
MAX_FAILURE_RATE = 0.10


@dataclass(frozen=True)
class DesignSpec:
    """Row distribution of a synthetic design.

    ``param`` is the AR(1) coefficient for ``ar1``, ``student_t`` and
    ``bimodal`` (whose correlation is AR(1) too), the common correlation
    for ``constant_corr`` and the common partial correlation for
    ``constant_partial``.  ``kind="csv"`` loads a fixed design from ``path``.
    """

    kind: str
    n: int
    p: int
    param: float = 0.0
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise SpecError(f"unknown design kind {self.kind!r}; expected one of {DESIGN_KINDS}")
        if self.kind == "csv":
            if not self.path:
                raise SpecError("csv design needs a path")
            return
        if self.n < 2 or self.p < 1:
            raise SpecError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if not 0.0 <= self.param <= MAX_PARAM:
            raise SpecError(f"design parameter must lie in [0, {MAX_PARAM}], got {self.param}")


@dataclass(frozen=True)
class TruthSpec:
    p1: int
    amplitude_sd: float
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.p1 < 0:
            raise SpecError("p1 must be non-negative")
        if not self.amplitude_sd > 0:
            raise SpecError("amplitude_sd must be positive")
        if self.noise_sd < 0:
            raise SpecError("noise_sd must be non-negative")


@dataclass
class EvalResult:
    fdp: float
    true_positive_proportion: float
    selected_count: int
    replicate_seed: int | None = None
    covers_support: bool | None = None

    @property
    def power(self) -> float:
        return self.true_positive_proportion


def covariance(kind: str, p: int, param: float) -> np.ndarray:
    """Population covariance of the Gaussian part of a design kind."""
    if kind in ("ar1", "student_t", "bimodal"):
        return sla.toeplitz(param ** np.arange(p))
    if kind == "constant_corr":
        return (1 - param) * np.eye(p) + param * np.ones((p, p))
    if kind == "constant_partial":
        # Q = (1 - tau) I + tau J has inverse (I - tau / (1 - tau + p tau) J) / (1 - tau)
        return (np.eye(p) - param / (1 - param + p * param) * np.ones((p, p))) / (1 - param)
    raise SpecError(f"no covariance for design kind {kind!r}")


@functools.lru_cache(maxsize=16)
def _cholesky(kind: str, p: int, param: float) -> np.ndarray:
    sigma = covariance(kind, p, param)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SpecError(f"{kind} covariance with param={param} is not positive definite") from exc


def raw_design(spec: DesignSpec) -> np.ndarray:
    """Rows of the design before standardization."""
    if spec.kind == "csv":
        from .io import read_matrix

        return read_matrix(spec.path)[0]
    L = _cholesky(spec.kind, spec.p, float(spec.param))
    rng = _streams.stream(spec.seed, _streams.DESIGN)
    G = rng.standard_normal((spec.n, spec.p)) @ L.T
    if spec.kind == "student_t":
        chi2 = rng.chisquare(STUDENT_DF, size=spec.n)
        G *= np.sqrt(STUDENT_DF / chi2 * (STUDENT_DF - 2) / STUDENT_DF)[:, None]
    elif spec.kind == "bimodal":
        sign = np.where(rng.random(spec.n) < 0.5, -1.0, 1.0)
        G += BIMODAL_SHIFT * sign[:, None]
    return G


def generate_design(spec: DesignSpec) -> np.ndarray:
    """Standardized design: centered columns with squared norm ``n``."""
    X = raw_design(spec)
    return standardize(RegressionProblem(X, np.zeros(X.shape[0]))).X


def generate_truth(spec: TruthSpec, p: int):
    """Sparse coefficients plus a function mapping a design to a noisy response.

    Returns ``(beta, build)``; ``build(X)`` gives ``X @ beta + noise`` with
    the noise drawn from its own seeded stream, so it is the same vector
    for every call.
    """
    if spec.p1 > p:
        raise SpecError(f"p1={spec.p1} exceeds p={p}")
    rng = _streams.stream(spec.seed, _streams.TRUTH)
    support = np.sort(rng.choice(p, size=spec.p1, replace=False))
    beta = np.zeros(p)
    beta[support] = rng.normal(0.0, spec.amplitude_sd, size=spec.p1)

    def build(X):
        X = np.asarray(X, dtype=float)
        noise = _streams.stream(spec.seed, _streams.NOISE).standard_normal(X.shape[0])
        return X @ beta + spec.noise_sd * noise

    return beta, build


def bh_stepup(pvalues, q: float) -> np.ndarray:
    """Indices rejected by the Benjamini-Hochberg step-up rule at level ``q``."""
    pv = np.asarray(pvalues, dtype=float)
    m = pv.size
    if m == 0:
        return np.zeros(0, dtype=int)
    order = np.argsort(pv, kind="stable")
    passed = np.nonzero(pv[order] <= q * np.arange(1, m + 1) / m)[0]
    if passed.size == 0:
        return np.zeros(0, dtype=int)
    return np.sort(order[: passed[-1] + 1])


def _two_sided(z):
    return 2.0 * stats.norm.sf(np.abs(z))


def _bh_report(p, candidates, z, q, method, seed=None, sigma=None, penalty=None, active=None):
    M = np.full(p, np.nan)
    M[candidates] = z
    keep = bh_stepup(_two_sided(z), q)
    selected = sorted(int(candidates[i]) for i in keep)
    tau = float(np.min(np.abs(z[keep]))) if keep.size else math.inf
    return SelectionReport(M, tau, selected, float("nan"), q, seed, method, sigma, penalty, active)


def bh_zstat(problem: RegressionProblem, sigma: float | None, q: float) -> SelectionReport:
    """BH on full-model OLS z-statistics ``beta_j / (sigma sqrt((X'X)^-1_jj))``.

    ``sigma=None`` plugs in the residual standard deviation.  The rule
    rejects every ``|z_j| >= t`` at the smallest observed ``t`` with
    ``P(|N(0,1)| >= t) / #{|z| >= t} <= q / p``, which is the step-up rule.
    """
    X, y = problem.X, problem.y
    n, p = X.shape
    qr = thin_qr(X)
    beta = qr.solve(y)
    if sigma is None:
        if n <= p:
            raise SpecError("plug-in sigma needs n > p")
        r = y - X @ beta
        sigma = math.sqrt(float(r @ r) / (n - p))
    z = beta / (sigma * np.sqrt(np.diag(qr.inverse_gram())))
    return _bh_report(p, np.arange(p), z, q, "bh-zstat", sigma=float(sigma))


def bh_marginal(problem: RegressionProblem, q: float, sigma: float | None = None) -> SelectionReport:
    """BH on p-values from the p univariate regressions of ``y`` on ``x_j``.

    The noise level of each regression is its own residual standard
    deviation unless ``sigma`` is given.
    """
    X, y = problem.X, problem.y - problem.y.mean()
    Xc = X - X.mean(axis=0)
    n, p = X.shape
    sq = np.einsum("ij,ij->j", Xc, Xc)
    slope = Xc.T @ y / sq
    if sigma is None:
        rss = float(y @ y) - slope ** 2 * sq
        scale = np.sqrt(np.maximum(rss, 0.0) / (n - 2))
    else:
        scale = np.full(p, float(sigma))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(scale > 0, slope * np.sqrt(sq) / scale, np.sign(slope) * np.inf)
    return _bh_report(p, np.arange(p), z, q, "bh-ma", sigma=sigma)


def split_halves(n: int, rng_seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 4:
        raise SpecError(f"data splitting needs n >= 4, got {n}")
    perm = _streams.stream(rng_seed, _streams.SPLIT).permutation(n)
    return np.sort(perm[: n // 2]), np.sort(perm[n // 2:])


def bh_datasplit(problem: RegressionProblem, q: float, rng_seed: int, sigma: float | None = None,
                 folds: int = 5) -> SelectionReport:
    """Lasso screening on one half, OLS z-tests on the other, then BH.

    When the screened set is too large to refit on the second half, only
    the ``n2 - 2`` features with the largest Lasso coefficients are kept.
    """
    first, second = split_halves(problem.n, rng_seed)
    p = problem.p
    half1 = standardize(RegressionProblem(problem.X[first], problem.y[first]))
    lam = cross_validate_lambda(half1, folds, _streams.derive_seed(rng_seed, _streams.CV_FOLDS), 1)
    fit = lasso_fit(half1, lam)
    active = fit.active_set
    limit = second.size - 2
    if active.size > limit:
        order = np.argsort(-np.abs(fit.coefficients[active]), kind="stable")
        active = np.sort(active[order[:limit]])
    if active.size == 0:
        return SelectionReport(np.full(p, np.nan), math.inf, [], float("nan"), q, rng_seed, "bh-ds",
                               sigma, float(lam), [], {"message": "lasso selected no features"})
    X2 = problem.X[np.ix_(second, active)]
    y2 = problem.y[second]
    X2 = X2 - X2.mean(axis=0)
    y2 = y2 - y2.mean()
    qr = thin_qr(X2)
    beta = qr.solve(y2)
    s = sigma
    if s is None:
        r = y2 - X2 @ beta
        s = math.sqrt(float(r @ r) / (second.size - 1 - active.size))
    z = beta / (s * np.sqrt(np.diag(qr.inverse_gram())))
    report = _bh_report(p, active, z, q, "bh-ds", rng_seed, float(s), float(lam),
                        [int(j) for j in active])
    return report


def evaluate(report: SelectionReport, support) -> EvalResult:
    """FDP and power of a selection against the true support."""
    selected = set(int(j) for j in report.selected)
    truth = set(int(j) for j in support)
    false = len(selected - truth)
    fdp = false / max(len(selected), 1)
    power = len(selected & truth) / max(len(truth), 1)
    covers = None
    if report.active_set is not None:
        covers = truth.issubset(set(int(j) for j in report.active_set))
    return EvalResult(fdp, power, len(selected), report.seed, covers)


def run_method(method: str, problem: RegressionProblem, q: float, seed: int, sigma=None,
               lasso_options: LassoOptions | None = None) -> SelectionReport:
    if method == "gm-ols":
        return run_gm_ols(problem, q, seed, threads=1)
    if method == "gm-lasso":
        base = lasso_options or LassoOptions()
        opts = replace(base, sigma=sigma if base.sigma is None else base.sigma, threads=1)
        return run_gm_lasso(problem, q, seed, opts)
    if method == "bh-zstat":
        return bh_zstat(problem, sigma, q)
    if method == "bh-ma":
        return bh_marginal(problem, q)
    if method == "bh-ds":
        return bh_datasplit(problem, q, seed)
    raise SpecError(f"unknown method {method!r}; expected one of {METHODS}")


ROW_FIELDS = ("replicate", "method", "design_kind", "design_param", "fdp", "power", "selected_count",
              "replicate_seed", "covers_support", "error")


@dataclass
class ExperimentTable:
    """Per-replicate rows plus per-method means of FDP and power."""

    rows: list[dict]
    summary: dict
    design: DesignSpec
    truth: TruthSpec
    q: float
    master_seed: int
    methods: tuple[str, ...] = field(default_factory=tuple)


def replicate_problem(design: DesignSpec, truth: TruthSpec, seed: int):
    """Design, coefficients and response for one replicate seed."""
    dspec = DesignSpec(design.kind, design.n, design.p, design.param,
                       _streams.derive_seed(seed, _streams.DESIGN), design.path)
    X = generate_design(dspec)
    tspec = TruthSpec(truth.p1, truth.amplitude_sd, truth.noise_sd,
                      _streams.derive_seed(seed, _streams.TRUTH))
    beta, build = generate_truth(tspec, X.shape[1])
    problem = RegressionProblem(X, build(X))
    return standardize(problem), beta


def run_experiment(design: DesignSpec, truth: TruthSpec, methods, replicates: int, q: float,
                   master_seed: int, threads=None, known_sigma: bool = True,
                   lasso_options: LassoOptions | None = None) -> ExperimentTable:
    """Replicated simulation of several selection methods on shared data.

    Each replicate draws its own design, coefficients and noise from a seed
    derived from ``master_seed``; every method sees the same data.  With
    ``known_sigma`` the true noise level is passed to methods that use one.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise SpecError(f"unknown method {m!r}; expected one of {METHODS}")
    sigma = truth.noise_sd if known_sigma else None

    def one(r):
        seed = _streams.derive_seed(master_seed, _streams.REPLICATE, r)
        problem, beta = replicate_problem(design, truth, seed)
        support = np.nonzero(beta)[0]
        rows = []
        for mi, method in enumerate(methods):
            row = {"replicate": r, "method": method, "design_kind": design.kind,
                   "design_param": float(design.param), "replicate_seed": seed}
            try:
                report = run_method(method, problem, q, _streams.derive_seed(seed, _streams.METHOD, mi),
                                    sigma, lasso_options)
                res = evaluate(report, support)
                row.update(fdp=res.fdp, power=res.power, selected_count=res.selected_count,
                           covers_support=res.covers_support, error=None)
            except GaussianMirrorError as exc:
                row.update(fdp=None, power=None, selected_count=None, covers_support=None,
                           error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
        return rows

    rows = [row for chunk in _streams.parallel_map(one, range(replicates), threads) for row in chunk]
    summary = {}
    for method in methods:
        ok = [r for r in rows if r["method"] == method and r["error"] is None]
        failed = replicates - len(ok)
        if failed > MAX_FAILURE_RATE * replicates:
            raise ReplicateFailureError(f"{method}: {failed} of {replicates} replicates failed")
        if failed:
            warnings.warn(f"{method}: {failed} of {replicates} replicates failed")
        summary[method] = {
            "fdr": float(np.mean([r["fdp"] for r in ok])),
            "power": float(np.mean([r["power"] for r in ok])),
            "replicates": len(ok),
            "failures": failed,
        }
    return ExperimentTable(rows, summary, design, truth, q, master_seed, methods)

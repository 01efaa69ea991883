"""Gaussian mirrors after Lasso selection (the high-dimensional case).

The Lasso picks an active set S with signs s.  Conditional on that event
the mirror coefficients of each active feature are truncated normals; the
mirror statistic maps both through their truncated CDFs back to a normal
scale before contrasting them.

The Lasso event is written for ``(1/2)||y - Xb||^2 + lam' ||b||_1``; with the
package objective ``||y - Xb||^2 + lam ||b||_1`` that is ``lam' = lam / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _streams
from .errors import DegeneratePerturbationError, GeometryError, InconsistentEventError, SingularDesignError
from .lasso import LassoFit, cross_validate_lambda, lasso_fit, theoretical_lambda
from .linalg import QRFactor, RegressionProblem, thin_qr
from .ols import DEGENERATE_TOL, MAX_REDRAWS
from .selection import SelectionReport, select_threshold
from .truncnorm import normal_score

EVENT_TOL = 1e-6
ZERO_A_RTOL = 1e-10


@dataclass(frozen=True)
class SelectionEvent:
    """Polyhedron ``{A0 y <= b0, A1 y <= b1}`` of responses giving (S, s)."""

    active_set: np.ndarray
    signs: np.ndarray
    A0: np.ndarray
    b0: np.ndarray
    A1: np.ndarray
    b1: np.ndarray
    penalty: float
    qr: QRFactor = field(repr=False)
    pinv: np.ndarray = field(repr=False)
    inv_gram: np.ndarray = field(repr=False)

    def slack(self, y) -> tuple[np.ndarray, np.ndarray]:
        return self.b0 - self.A0 @ y, self.b1 - self.A1 @ y

    def contains(self, y, tol: float = 0.0) -> bool:
        s0, s1 = self.slack(y)
        return bool(np.all(s0 >= -tol) and np.all(s1 >= -tol))


@dataclass(frozen=True)
class MirrorGeometry:
    """Mirror directions for one active feature and the response split.

    ``beta_plus = psi1' y``, ``beta_minus = psi2' y`` and
    ``residual = (I - P_psi) y`` for the response the geometry was built on.
    """

    psi1: np.ndarray
    psi2: np.ndarray
    alpha: float
    a0: np.ndarray
    a1: np.ndarray
    residual: np.ndarray
    beta_plus: float = float("nan")
    beta_minus: float = float("nan")
    feature: int = -1
    c: float = float("nan")

    def with_response(self, y) -> "MirrorGeometry":
        y = np.asarray(y, dtype=float)
        bp, bm = float(self.psi1 @ y), float(self.psi2 @ y)
        # psi1 and psi2 are orthogonal with equal squared norm alpha
        r = y - (self.psi1 * bp + self.psi2 * bm) / self.alpha
        return replace(self, residual=r, beta_plus=bp, beta_minus=bm)


@dataclass(frozen=True)
class TruncationBox:
    sum_interval: tuple[float, float]
    diff_interval: tuple[float, float]
    slack0: float
    slack1: float

    def contains(self, total: float, diff: float, tol: float = 0.0) -> bool:
        lo1, hi1 = self.sum_interval
        lo0, hi0 = self.diff_interval
        return (lo1 - tol <= total <= hi1 + tol and lo0 - tol <= diff <= hi0 + tol
                and self.slack0 > -tol and self.slack1 > -tol)


def build_selection_event(problem: RegressionProblem, fit: LassoFit) -> SelectionEvent:
    """Inactive (A0, b0) and sign (A1, b1) constraints for the fitted (S, s)."""
    X, y = problem.X, problem.y
    S = np.asarray(fit.active_set, dtype=int)
    s = np.asarray(fit.signs, dtype=float)
    if S.size == 0:
        raise ValueError("selection event needs a nonempty active set")
    lam = 0.5 * fit.penalty
    XS = X[:, S]
    qr = thin_qr(XS)
    inactive = np.setdiff1d(np.arange(X.shape[1]), S)
    XN = X[:, inactive]
    W = XN.T - (XN.T @ qr.Q) @ qr.Q.T
    pinv = qr.pinv_rows(np.arange(S.size))
    G = qr.inverse_gram()
    v = XN.T @ (pinv.T @ s)
    A0 = np.vstack([W, -W]) / lam
    b0 = np.concatenate([1.0 - v, 1.0 + v])
    A1 = -s[:, None] * pinv
    b1 = -lam * s * (G @ s)
    event = SelectionEvent(S, s.astype(int), A0, b0, A1, b1, float(fit.penalty), qr, pinv, G)
    s0, s1 = event.slack(y)
    worst = min(s0.min(initial=np.inf), s1.min())
    if worst < -EVENT_TOL:
        raise InconsistentEventError(
            f"fitted response violates its own selection event by {-worst:.3g}; "
            "check that the penalty uses the ||y - Xb||^2 + lam||b||_1 convention")
    return event


def compute_cj_post(problem: RegressionProblem, event: SelectionEvent, j: int, z_j):
    """Scale for active position ``j`` and the perturbation projected off X_S."""
    X = problem.X
    S = event.active_set
    z_tilde = event.qr.project_out(np.asarray(z_j, dtype=float))
    x_j = X[:, S[j]]
    others = X[:, np.delete(S, j)]
    if others.shape[1]:
        sub = thin_qr(others)
        num = float(np.sum(sub.project_out(x_j) ** 2))
        den = float(np.sum(sub.project_out(z_tilde) ** 2))
    else:
        num = float(x_j @ x_j)
        den = float(z_tilde @ z_tilde)
    if den < DEGENERATE_TOL:
        raise DegeneratePerturbationError(
            f"perturbation for feature {int(S[j])} lies in the selected span", feature=int(S[j]))
    return math.sqrt(num / den), z_tilde


def _geometry_parts(event, psi1, psi2, y, feature, c):
    alpha = float(psi1 @ psi1)
    a0 = event.A0 @ (psi1 - psi2) / 2.0
    a1 = event.A1 @ (psi1 + psi2) / 2.0
    geo = MirrorGeometry(psi1, psi2, alpha, a0, a1, np.zeros(0), feature=feature, c=c)
    return geo.with_response(y)


def mirror_geometry(problem: RegressionProblem, event: SelectionEvent, j: int, c_j: float,
                    z_tilde) -> MirrorGeometry:
    """psi rows from the pseudo-inverse of ``(x_j + c z, x_j - c z, X_{S without j})``."""
    X = problem.X
    S = event.active_set
    x_j = X[:, S[j]]
    design = np.column_stack([x_j + c_j * z_tilde, x_j - c_j * z_tilde, X[:, np.delete(S, j)]])
    try:
        rows = thin_qr(design).pinv_rows([0, 1])
    except SingularDesignError as exc:
        exc.feature = int(S[j])
        raise
    return _geometry_parts(event, rows[0], rows[1], problem.y, int(S[j]), c_j)


def _fast_geometry(problem, event, j, z_tilde):
    """Same geometry without refactorizing: z_tilde is orthogonal to X_S.

    The sum direction psi1 + psi2 is row j of pinv(X_S); the difference
    direction is ``z_tilde / (c ||z_tilde||^2)`` with ``c^2 = 1 / (G_jj ||z_tilde||^2)``.
    """
    zz = float(z_tilde @ z_tilde)
    if zz < DEGENERATE_TOL:
        raise DegeneratePerturbationError("degenerate perturbation", feature=int(event.active_set[j]))
    gjj = float(event.inv_gram[j, j])
    c = math.sqrt(1.0 / (gjj * zz))
    u = event.pinv[j]
    w = z_tilde / (c * zz)
    return _geometry_parts(event, 0.5 * (u + w), 0.5 * (u - w), problem.y,
                           int(event.active_set[j]), c)


def _interval(a, b, Ar, alpha):
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    zero = np.abs(a) <= ZERO_A_RTOL * scale
    gap = b - Ar
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = alpha * gap / a
    neg = (a < 0) & ~zero
    pos = (a > 0) & ~zero
    lo = float(ratio[neg].max()) if neg.any() else -math.inf
    hi = float(ratio[pos].min()) if pos.any() else math.inf
    slack = float(gap[zero].min()) if zero.any() else math.inf
    return lo, hi, slack


def box_for_residual(geometry: MirrorGeometry, event: SelectionEvent, r) -> TruncationBox:
    """Truncation limits implied by the event for a given residual part ``r``.

    Along the psi directions the constraints read
    ``(a_k / alpha) * stat + (A r)_k <= b_k``.
    """
    lo0, hi0, n0 = _interval(geometry.a0, event.b0, event.A0 @ r, geometry.alpha)
    lo1, hi1, n1 = _interval(geometry.a1, event.b1, event.A1 @ r, geometry.alpha)
    return TruncationBox((lo1, hi1), (lo0, hi0), n0, n1)


def truncation_box(geometry: MirrorGeometry, event: SelectionEvent, check: bool = True) -> TruncationBox:
    """Box for the geometry's response; by default verifies the data sit inside it."""
    box = box_for_residual(geometry, event, geometry.residual)
    if not check:
        return box
    total = geometry.beta_plus + geometry.beta_minus
    diff = geometry.beta_plus - geometry.beta_minus
    if not box.contains(total, diff, EVENT_TOL) or min(box.slack0, box.slack1) < -1e-8:
        raise GeometryError(
            f"feature {geometry.feature}: observed mirror coefficients fall outside their "
            f"truncation box (sum {total:.6g} in {box.sum_interval}, "
            f"diff {diff:.6g} in {box.diff_interval})")
    return box


def mirror_statistic_post(geometry: MirrorGeometry, box: TruncationBox, sigma: float,
                          recenter=None) -> float:
    """Truncation-adjusted mirror statistic.

    Each of ``b+ + b-`` and ``b+ - b-`` (sd ``sigma * sqrt(2 alpha)``) is sent
    through its truncated CDF and back through ``Phi^{-1}``, rescaled by its
    sd, so without truncation and with zero means the plain mirror statistic
    is recovered.  ``recenter=(mean_sum, mean_diff)`` replaces the zero means
    of the two truncated CDFs.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    bp, bm = geometry.beta_plus, geometry.beta_minus
    sd = sigma * math.sqrt(2.0 * geometry.alpha)
    mu_sum, mu_diff = (0.0, 0.0) if recenter is None else recenter
    lo1, hi1 = box.sum_interval
    lo0, hi0 = box.diff_interval
    if not (lo1 < hi1 and lo0 < hi0):
        raise GeometryError(f"feature {geometry.feature}: empty truncation interval")
    t_sum = sd * normal_score(bp + bm, mu_sum, sd, lo1, hi1)
    t_diff = sd * normal_score(bp - bm, mu_diff, sd, lo0, hi0)
    return abs(t_sum) - abs(t_diff)


PENALTY_RULES = ("cv", "theory")


@dataclass
class LassoOptions:
    """Settings of the post-selection pipeline.

    ``penalty`` fixes lambda; otherwise ``penalty_rule`` picks it by
    cross-validation (``"cv"``) or as ``4 sigma sqrt(n log p)``
    (``"theory"``).  ``sigma=None`` estimates the noise level from the
    OLS refit on the active set.
    """

    penalty: float | None = None
    penalty_rule: str = "cv"
    folds: int = 5
    sigma: float | None = None
    recenter: bool = False
    engine: str = "fast"
    threads: int | str | None = None


def choose_penalty(problem: RegressionProblem, options: LassoOptions, rng_seed: int) -> float:
    if options.penalty is not None:
        if not options.penalty > 0:
            raise ValueError(f"penalty must be positive, got {options.penalty}")
        return float(options.penalty)
    if options.penalty_rule not in PENALTY_RULES:
        raise ValueError(f"unknown penalty rule {options.penalty_rule!r}; expected one of {PENALTY_RULES}")
    cv_seed = _streams.derive_seed(rng_seed, _streams.CV_FOLDS)
    if options.penalty_rule == "cv":
        return cross_validate_lambda(problem, options.folds, cv_seed, options.threads)
    sigma = options.sigma
    if sigma is None:
        lam = cross_validate_lambda(problem, options.folds, cv_seed, options.threads)
        sigma = refit_sigma(problem, lasso_fit(problem, lam).active_set)
    return theoretical_lambda(problem, sigma)


def refit_sigma(problem: RegressionProblem, active) -> float:
    """Residual sd of the OLS refit on the active set."""
    active = np.asarray(active, dtype=int)
    n = problem.n
    if active.size >= n:
        raise SingularDesignError(f"cannot estimate sigma: |S|={active.size} >= n={n}")
    XS = problem.X[:, active]
    qr = thin_qr(XS)
    r = qr.project_out(problem.y)
    return math.sqrt(float(r @ r) / (n - active.size))


def _mirror_active(problem, event, pos, rng_seed, sigma, mu_hat, engine):
    j = int(event.active_set[pos])
    n = problem.n
    for attempt in range(MAX_REDRAWS + 1):
        keys = (_streams.MIRROR, j) if attempt == 0 else (_streams.MIRROR, j, attempt)
        z = _streams.stream(rng_seed, *keys).standard_normal(n)
        try:
            if engine == "exact":
                c, zt = compute_cj_post(problem, event, pos, z)
                geo = mirror_geometry(problem, event, pos, c, zt)
            else:
                zt = event.qr.project_out(z)
                geo = _fast_geometry(problem, event, pos, zt)
        except DegeneratePerturbationError:
            continue
        box = truncation_box(geo, event)
        recenter = None
        if mu_hat is not None:
            recenter = (float((geo.psi1 + geo.psi2) @ mu_hat), float((geo.psi1 - geo.psi2) @ mu_hat))
        return mirror_statistic_post(geo, box, sigma, recenter)
    raise DegeneratePerturbationError(f"feature {j}: perturbation degenerate after redraws", feature=j)


def run_gm_lasso(problem: RegressionProblem, q: float, rng_seed: int,
                 options: LassoOptions | None = None) -> SelectionReport:
    """Lasso screening, post-selection mirrors on the active set, FDP cutoff."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"target FDR must lie in (0, 1), got {q}")
    opts = options or LassoOptions()
    n, p = problem.X.shape
    lam = choose_penalty(problem, opts, rng_seed)
    fit = lasso_fit(problem, lam)
    M = np.full(p, np.nan)
    diagnostics = {"active_size": int(fit.active_set.size)}
    if fit.active_set.size == 0:
        diagnostics["message"] = "lasso selected no features"
        return SelectionReport(M, math.inf, [], 0.0, q, rng_seed, "gm-lasso", opts.sigma, float(lam),
                               [], diagnostics)
    sigma = opts.sigma if opts.sigma is not None else refit_sigma(problem, fit.active_set)
    diagnostics["sigma_estimated"] = opts.sigma is None
    diagnostics["lambda_theoretical"] = theoretical_lambda(problem, sigma)
    event = build_selection_event(problem, fit)
    mu_hat = problem.X @ fit.coefficients if opts.recenter else None

    def one(pos):
        return _mirror_active(problem, event, pos, rng_seed, sigma, mu_hat, opts.engine)

    values = _streams.parallel_map(one, range(fit.active_set.size), opts.threads)
    M[fit.active_set] = values
    tau, selected, fdp = select_threshold(M, q)
    return SelectionReport(M, tau, selected, fdp, q, rng_seed, "gm-lasso", float(sigma), float(lam),
                           [int(j) for j in fit.active_set], diagnostics)

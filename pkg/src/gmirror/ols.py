"""Gaussian mirrors for ordinary least squares (the p < n case)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _streams
from .errors import DegeneratePerturbationError, SingularDesignError
from .linalg import RegressionProblem, least_squares, thin_qr
from .selection import SelectionReport, select_threshold

MAX_REDRAWS = 8
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class MirrorProfile:
    feature_index: int
    z: np.ndarray
    c: float
    beta_plus: float
    beta_minus: float
    statistic: float


def mirror_statistic(beta_plus: float, beta_minus: float) -> float:
    """``|b+ + b-| - |b+ - b-|``."""
    return abs(beta_plus + beta_minus) - abs(beta_plus - beta_minus)


def compute_cj_ols(x_j, z_j, X_minus_j) -> float:
    """Scale making the two mirror coefficients uncorrelated.

    ``sqrt(x'(I - P)x / z'(I - P)z)`` with ``P`` the projection onto the
    columns of ``X_minus_j``.
    """
    x_j = np.asarray(x_j, dtype=float)
    z_j = np.asarray(z_j, dtype=float)
    X_minus_j = np.asarray(X_minus_j, dtype=float).reshape(x_j.size, -1)
    qr = thin_qr(X_minus_j)
    num = float(np.sum(qr.project_out(x_j) ** 2))
    den = float(np.sum(qr.project_out(z_j) ** 2))
    if den < DEGENERATE_TOL:
        raise DegeneratePerturbationError(
            f"perturbation lies in the span of the other columns (residual norm^2 {den:.3g})")
    return math.sqrt(num / den)


def _draw(seed, j, attempt, n):
    if attempt == 0:
        return _streams.stream(seed, _streams.MIRROR, j).standard_normal(n)
    return _streams.stream(seed, _streams.MIRROR, j, attempt).standard_normal(n)


def mirror_one_feature(problem: RegressionProblem, j: int, rng_seed: int) -> MirrorProfile:
    """Build the j-th mirror design and fit it by least squares."""
    X, y = problem.X, problem.y
    n, p = X.shape
    if p >= n:
        raise SingularDesignError(f"OLS mirrors need p < n (p={p}, n={n})", deficient=p + 1 - n)
    x_j = X[:, j]
    X_minus = np.delete(X, j, axis=1)
    for attempt in range(MAX_REDRAWS + 1):
        z = _draw(rng_seed, j, attempt, n)
        try:
            c = compute_cj_ols(x_j, z, X_minus)
        except DegeneratePerturbationError:
            continue
        except SingularDesignError as exc:
            exc.feature = j
            raise
        design = np.column_stack([x_j + c * z, x_j - c * z, X_minus])
        try:
            coef = least_squares(design, y)
        except SingularDesignError as exc:
            exc.feature = j
            raise
        bp, bm = float(coef[0]), float(coef[1])
        return MirrorProfile(j, z, c, bp, bm, mirror_statistic(bp, bm))
    raise DegeneratePerturbationError(
        f"feature {j}: perturbation degenerate after {MAX_REDRAWS} redraws", feature=j)


def _batch_profiles(X, y, qr, beta, resid, inv_diag, js, seed):
    """Mirror coefficients for features ``js`` from one factorization of X.

    Regressing y on (X, z_j) gives the same fit as the mirror design:
    the coefficient on x_j is b+ + b-, the one on z_j is c_j (b+ - b-).
    """
    n = X.shape[0]
    js = np.asarray(js)
    Z = np.column_stack([_draw(seed, int(j), 0, n) for j in js])
    QtZ = qr.Q.T @ Z
    Zt = Z - qr.Q @ QtZ
    res_sq = np.sum(Zt ** 2, axis=0)
    # (X^+ z_j)_j : row j of the pseudo-inverse against column z_j
    W = qr.pinv_rows(js)
    w = np.einsum("ki,ik->k", W, Z)
    den = res_sq + w ** 2 / inv_diag[js]
    num = 1.0 / inv_diag[js]
    delta = (Z.T @ resid) / res_sq
    gamma = beta[js] - delta * w
    out = []
    for k, j in enumerate(js):
        if not (den[k] >= DEGENERATE_TOL and res_sq[k] >= DEGENERATE_TOL):
            out.append(None)
            continue
        c = math.sqrt(num[k] / den[k])
        diff = delta[k] / c
        bp = 0.5 * (gamma[k] + diff)
        bm = 0.5 * (gamma[k] - diff)
        out.append(MirrorProfile(int(j), Z[:, k].copy(), c, float(bp), float(bm),
                                 mirror_statistic(float(bp), float(bm))))
    return out


def mirror_profiles(problem: RegressionProblem, rng_seed: int, threads=None,
                    engine: str = "batched", block: int = 64) -> list[MirrorProfile]:
    """Mirror profiles for every feature.

    ``engine="exact"`` refits the (n, p+1) mirror design per feature;
    ``"batched"`` reuses one QR of X and is algebraically identical.
    """
    X, y = problem.X, problem.y
    n, p = X.shape
    if p >= n:
        raise SingularDesignError(f"OLS mirrors need p < n (p={p}, n={n})", deficient=p + 1 - n)
    if engine == "exact":
        return _streams.parallel_map(lambda j: mirror_one_feature(problem, j, rng_seed),
                                     range(p), threads)
    if engine != "batched":
        raise ValueError(f"unknown engine {engine!r}")
    qr = thin_qr(X)
    beta = qr.solve(y)
    resid = y - X @ beta
    inv_diag = np.diag(qr.inverse_gram()).copy()
    blocks = [list(range(s, min(s + block, p))) for s in range(0, p, block)]
    parts = _streams.parallel_map(
        lambda js: _batch_profiles(X, y, qr, beta, resid, inv_diag, js, rng_seed), blocks, threads)
    profiles = [prof for part in parts for prof in part]
    for j, prof in enumerate(profiles):
        if prof is None:
            profiles[j] = mirror_one_feature(problem, j, rng_seed)
    return profiles


def run_gm_ols(problem: RegressionProblem, q: float, rng_seed: int, threads=None,
               engine: str = "batched") -> SelectionReport:
    """Mirror statistics for all features, then the FDP-controlled cutoff."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"target FDR must lie in (0, 1), got {q}")
    profiles = mirror_profiles(problem, rng_seed, threads, engine)
    M = np.array([prof.statistic for prof in profiles])
    tau, selected, fdp = select_threshold(M, q)
    return SelectionReport(
        statistics=M, threshold=tau, selected=selected, fdp_estimate=fdp, target_fdr=q,
        seed=rng_seed, method="gm-ols",
    )

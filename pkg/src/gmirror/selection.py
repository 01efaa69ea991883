"""FDP estimate from mirror statistics and the data-driven cutoff."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SelectionReport:
    """Outcome of one selection run.

    ``statistics`` has one entry per feature; ``nan`` marks a feature that
    received no statistic (outside the Lasso active set).  ``threshold`` is
    ``inf`` when no cutoff meets the target.
    """

    statistics: np.ndarray
    threshold: float
    selected: list[int]
    fdp_estimate: float
    target_fdr: float
    seed: int | None = None
    method: str = "gm-ols"
    sigma: float | None = None
    penalty: float | None = None
    active_set: list[int] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return int(np.asarray(self.statistics).size)


def fdp_hat(M, t: float) -> float:
    """``#{M <= -t} / max(#{M >= t}, 1)``; ``nan`` entries are ignored."""
    M = np.asarray(M, dtype=float)
    M = M[~np.isnan(M)]
    neg = int(np.sum(M <= -t))
    pos = int(np.sum(M >= t))
    return neg / max(pos, 1)


def select_threshold(M, q: float):
    """Smallest ``t > 0`` with ``fdp_hat(M, t) <= q``.

    The estimate is constant on each interval ``(a_i, a_{i+1}]`` between
    consecutive distinct ``|M_j|``, so scanning those values is exact.
    Returns ``(threshold, selected, fdp)``; ``(inf, [], 0.0)`` when no
    candidate qualifies.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"target FDR must lie in (0, 1), got {q}")
    M = np.asarray(M, dtype=float)
    valid = ~np.isnan(M)
    vals = M[valid]
    cand = np.unique(np.abs(vals))
    cand = cand[cand > 0]
    if cand.size == 0:
        return math.inf, [], 0.0
    srt = np.sort(vals)
    # #{M >= t} and #{M <= -t} for every candidate at once
    pos = vals.size - np.searchsorted(srt, cand, side="left")
    neg = np.searchsorted(srt, -cand, side="right")
    fdp = neg / np.maximum(pos, 1)
    ok = np.nonzero(fdp <= q)[0]
    if ok.size == 0:
        return math.inf, [], 0.0
    k = ok[0]
    tau = float(cand[k])
    selected = [int(j) for j in np.nonzero(valid & (M >= tau))[0]]
    return tau, selected, float(fdp[k])

"""Feature statistics, selection threshold, q-values, and FDP estimate.

The coefficient-difference statistic W_j = |beta_j| - |beta_{j+p}| compares
each covariate against its knockoff copy. Selection uses the conservative
threshold (the "+1" numerator offset is always on):

    T = min { t : (1 + #{j : W_j <= -t}) / (#{j : W_j >= t} or 1) <= q }

with t ranging over the magnitudes of the nonzero statistics. Zero statistics
are never selected and never counted at any t > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive_lasso import FitResult
from .errors import InvalidQ


@dataclass(frozen=True)
class FeatureStats:
    """Coefficient-difference statistics, one per original covariate."""

    w: np.ndarray

    @property
    def p(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class SelectionResult:
    """Threshold, per-covariate q-values, selected set, and FDP estimate.

    ``threshold`` is +inf when no candidate threshold reaches the target
    level (empty selection). ``selected`` holds 0-based indices. A covariate
    with w <= 0 can never be selected and carries q-value +inf.
    """

    threshold: float
    q_values: np.ndarray
    selected: tuple[int, ...]
    fdp_estimate: float


def lcd_stats(fit: FitResult, p: int) -> FeatureStats:
    """W_j = |beta_j| - |beta_{j+p}| from a fit over [X, X~] (M = 1)."""
    beta = fit.beta if hasattr(fit, "beta") else np.asarray(fit, dtype=np.float64)
    if beta.shape[0] != 2 * p:
        raise ValueError(f"need 2p = {2 * p} coefficients, got {beta.shape[0]}")
    return FeatureStats(w=np.abs(beta[:p]) - np.abs(beta[p:]))


def fdp_at(w, t: float) -> float:
    """Conservative FDP estimate (1 + #{W <= -t}) / (#{W >= t} or 1)."""
    if t <= 0:
        raise ValueError("threshold t must be positive")
    w = np.asarray(w.w if hasattr(w, "w") else w, dtype=np.float64)
    num = 1 + int(np.count_nonzero(w <= -t))
    den = max(int(np.count_nonzero(w >= t)), 1)
    return num / den


def knockoff_threshold(w, q: float) -> SelectionResult:
    """Apply the selection rule at target FDR level ``q``.

    q-values: for w_i > 0, the smallest estimated FDP over candidate
    thresholds t <= w_i; +inf for w_i <= 0, so that membership in the
    selected set at any level q is equivalent to q_value <= q.
    """
    if not (0.0 < q < 1.0):
        raise InvalidQ(f"q must be in (0, 1), got {q}")
    w = np.asarray(w.w if hasattr(w, "w") else w, dtype=np.float64)
    candidates = np.unique(np.abs(w[w != 0.0]))

    fdp_hats = np.array([fdp_at(w, t) for t in candidates])
    feasible = np.flatnonzero(fdp_hats <= q)
    if feasible.size:
        threshold = float(candidates[feasible[0]])
    else:
        threshold = np.inf

    # Running minimum of the FDP estimate over thresholds up to each w_i.
    q_values = np.full(w.shape[0], np.inf)
    if candidates.size:
        running_min = np.minimum.accumulate(fdp_hats)
        pos = w > 0.0
        idx = np.searchsorted(candidates, w[pos], side="right") - 1
        q_values[pos] = running_min[idx]

    selected = tuple(int(j) for j in np.flatnonzero(w >= threshold))
    fdp_estimate = fdp_at(w, threshold) if np.isfinite(threshold) else 0.0
    return SelectionResult(
        threshold=threshold,
        q_values=q_values,
        selected=selected,
        fdp_estimate=fdp_estimate,
    )


def write_selection(path, snp_ids, stats: FeatureStats, result: SelectionResult):
    """Serialize a selection to TSV: ``snp  w  q_value  selected``."""
    sel = set(result.selected)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snp\tw\tq_value\tselected\n")
        for j, (s, wj) in enumerate(zip(snp_ids, stats.w)):
            qv = result.q_values[j]
            qcell = repr(float(qv)) if np.isfinite(qv) else "inf"
            fh.write(f"{s}\t{float(wj)!r}\t{qcell}\t{int(j in sel)}\n")

"""Chi-square weight calibration and the regression composite estimator.

Calibration finds the weights closest to the starting weights in the
chi-square sense, ``sum (w* - w)^2 / w``, subject to linear control totals.
The minimizer is ``w* = w * (1 + A' lambda)`` with multipliers solving

    (A diag(w) A') lambda = targets - A w,

a small symmetric system handled by a rank-revealing (SVD) solve so that
redundant-but-consistent controls are harmless and inconsistent ones raise.

The regression composite estimator re-calibrates the base weights every
month so that (i) auxiliary variables hit their known totals and (ii) a
*proxy* variable hits last month's composite total.  The proxy blends, with a mixing parameter
``alpha``, each individual's current and previous status: ``alpha = 0``,
carries yesterday's value (the level-oriented variant), ``alpha = 1``
carries the change-adjusted current value (the change-oriented variant).
Entering individuals, who have no previous interview, receive yesterday's
composite mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import RotationDesign, SampleAssignment
from .estimators import WeightSet, as_codes, base_weights
from .population import N_STATUS, Population, one_hot

__all__ = [
    "CalibrationError",
    "calibrate_weights",
    "regression_composite",
    "RegressionCompositeResult",
]

#: Relative singular-value cutoff for dropping redundant controls.
CONSTRAINT_RCOND = 1e-10


class CalibrationError(ValueError):
    """Raised when the control system is infeasible after dropping
    redundant constraints."""

    def __init__(self, message: str, month: int | None = None):
        super().__init__(message)
        self.month = month


def calibrate_weights(weights: np.ndarray, controls: np.ndarray,
                      targets: np.ndarray,
                      rcond: float = CONSTRAINT_RCOND) -> np.ndarray:
    """Minimally adjust ``weights`` so that ``controls @ w* = targets``.

    Parameters
    ----------
    weights : (n,) positive starting weights.
    controls : (q, n) control variable values per unit.
    targets : (q,) required weighted totals.

    Returns
    -------
    (n,) calibrated weights (may be negative; no box constraints).
    """
    w = np.asarray(weights, dtype=float)
    a = np.atleast_2d(np.asarray(controls, dtype=float))
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    if a.shape != (t.size, w.size):
        raise ValueError(f"controls shape {a.shape} does not match "
                         f"{t.size} targets over {w.size} units")
    gap = t - a @ w
    gram = (a * w) @ a.T
    # Rank-revealing solve: drop directions below the cutoff, then verify
    # the dropped part of the system was consistent.
    u, s, vt = np.linalg.svd(gram)
    keep = s > rcond * (s[0] if s.size else 0.0)
    lam = vt[keep].T @ ((u[:, keep].T @ gap) / s[keep])
    residual = gram @ lam - gap
    scale = max(np.abs(t).max(initial=0.0), np.abs(a @ w).max(initial=0.0), 1.0)
    if np.abs(residual).max() > 1e-8 * scale:
        raise CalibrationError("control system is infeasible")
    return w * (1.0 + a.T @ lam)


@dataclass(frozen=True)
class RegressionCompositeResult:
    """Composite totals plus the calibrated weights that produced them.

    ``members[m-1]`` lists the month-``m`` sample in group-major order and
    ``weights[m-1]`` the calibrated weights aligned with it.
    """

    alpha: float
    totals: np.ndarray            # (M, 3) weighted status totals
    z_totals: np.ndarray          # (M, 3) composite totals of the proxy source
    members: np.ndarray           # (M, n_sample) 1-based ids
    weights: np.ndarray           # (M, n_sample)
    negative_weight_counts: np.ndarray  # (M,) int

    def weight_set(self, size: int) -> WeightSet:
        return WeightSet(size=size, members=self.members, values=self.weights)


def regression_composite(alpha: float, y, pop_or_aux, design: RotationDesign,
                         assignment: SampleAssignment,
                         x_targets=None, z=None,
                         w: WeightSet | None = None) -> RegressionCompositeResult:
    """Run the regression composite recursion for one draw.

    Parameters
    ----------
    alpha : float in [0, 1]
        Proxy mixing parameter (0 level-oriented, 1 change-oriented).
    y : (M, N) codes or (M, N, 3) one-hot
        Observed statuses (the estimation variable).
    pop_or_aux : Population or (N, p) array
        Time-constant auxiliary variables; a Population supplies its two
        binary covariates and their true totals.
    x_targets : (p,) optional
        Control totals for the auxiliary variables; defaults to the
        population totals when a Population is given.
    z : optional (M, N) codes or (M, N, 3) one-hot
        Proxy source variable; defaults to ``y``.
    w : optional WeightSet
        Starting weights; defaults to the inverse-probability weights.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    codes = as_codes(y)
    z_values = one_hot(as_codes(z) if z is not None else codes).astype(float)
    if isinstance(pop_or_aux, Population):
        aux = pop_or_aux.aux.astype(float)
        if x_targets is None:
            x_targets = pop_or_aux.aux_totals.astype(float)
    else:
        aux = np.asarray(pop_or_aux, dtype=float)
        if x_targets is None:
            raise ValueError("x_targets is required when passing a raw array")
    x_targets = np.asarray(x_targets, dtype=float)
    if w is None:
        w = base_weights(design, assignment)

    months = design.months
    n_sample = w.members.shape[1]
    totals = np.empty((months, N_STATUS))
    z_totals = np.empty((months, N_STATUS))
    weights = np.empty((months, n_sample))
    negatives = np.zeros(months, dtype=np.int64)

    members = w.members
    first = members[0]
    weights[0] = w.values[0]
    totals[0] = weights[0] @ one_hot(codes[0, first - 1]).astype(float)
    z_totals[0] = weights[0] @ z_values[0, first - 1]

    for m in range(1, months):
        cur, prev = members[m], members[m - 1]
        base = w.values[m]
        in_prev = np.isin(cur, prev)
        tau = base.sum() / base[in_prev].sum()

        z_cur = z_values[m, cur - 1]
        proxy = np.empty_like(z_cur)
        z_prev_matched = z_values[m - 1, cur[in_prev] - 1]
        proxy[in_prev] = (
            alpha * ((z_prev_matched - z_cur[in_prev]) / tau + z_cur[in_prev])
            + (1.0 - alpha) * z_prev_matched
        )
        carry_mean = z_totals[m - 1] / weights[m - 1].sum()
        proxy[~in_prev] = alpha * z_cur[~in_prev] + (1.0 - alpha) * carry_mean

        controls = np.vstack([proxy.T, aux[cur - 1].T])
        target = np.concatenate([z_totals[m - 1], x_targets])
        try:
            weights[m] = calibrate_weights(base, controls, target)
        except CalibrationError as exc:
            raise CalibrationError(f"month {m + 1}: {exc}", month=m + 1) from None
        negatives[m] = int((weights[m] < 0).sum())
        totals[m] = weights[m] @ one_hot(codes[m, cur - 1]).astype(float)
        z_totals[m] = weights[m] @ z_cur

    return RegressionCompositeResult(
        alpha=alpha, totals=totals, z_totals=z_totals,
        members=members.copy(), weights=weights,
        negative_weight_counts=negatives,
    )

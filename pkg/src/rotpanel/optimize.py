"""Coefficient selection for the composite estimators.

The summed linearized rate variances (level, change, and their sum) of a
composite estimator are polynomial in its four free coefficients
``(a1, k1, a2, k2)``; their coefficients come from the covariance of the
month-in-sample estimates.  :class:`AkObjective` evaluates these polynomials
directly through the closed-form weighting, so the same code serves the
exact covariance and any estimated covariance.

Minimization uses Nelder-Mead from a fixed production starting point plus
seeded random restarts; the production-style coarse grid search and the
mixing-parameter grid for the regression composite are exhaustive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .calibration import CalibrationError
from .enumeration import Enumeration
from .estimators import (
    AkCoefficients,
    MeasurementError,
    blue_weights,
    group_roles,
)
from .evaluation import EstimatorSpec, rate_jacobians
from .population import unemployment_rate

__all__ = [
    "AkObjective",
    "OptimizationResult",
    "CPS_START",
    "optimal_ak",
    "census_grid_ak",
    "nelder_mead",
    "best_alpha",
    "empirical_best",
]

#: Production coefficient point (a1, k1, a2, k2), also the optimizer start.
CPS_START = (0.3, 0.4, 0.4, 0.7)

OBJECTIVE_KINDS = ("level", "change", "compromise")

# Basis over the 8 rotation groups: entering, continuing, and
# previously-continuing indicator vectors span every weighting the
# composite recursion can produce.
_cont_b, _prev_b, _ent_b = group_roles()
_BASIS = np.zeros((3, 8))
_BASIS[0, np.array(_ent_b) - 1] = 1.0
_BASIS[1, np.array(_cont_b) - 1] = 1.0
_BASIS[2, np.array(_prev_b) - 1] = 1.0


@dataclass
class OptimizationResult:
    """Winner of a search plus enough context to audit it."""

    params: np.ndarray
    value: float
    n_evaluations: int
    converged: bool
    table: tuple[np.ndarray, np.ndarray] | None = None   # (points, values)
    trace: list = field(default_factory=list)
    excluded: list = field(default_factory=list)


class AkObjective:
    """Summed linearized rate variance of the composite estimator.

    Precomputes, from a covariance of the vectorized month-in-sample
    estimates, the small Gram matrices that make a single evaluation at any
    ``(a1, k1, a2, k2)`` a few dense month-by-month products.
    """

    def __init__(self, sigma: np.ndarray, true_totals: np.ndarray,
                 kind: str = "compromise"):
        if kind not in OBJECTIVE_KINDS:
            raise ValueError(f"kind must be one of {OBJECTIVE_KINDS}")
        self.kind = kind
        totals = np.asarray(true_totals, dtype=float)
        self.months = totals.shape[0]
        months = self.months
        j1, _ = rate_jacobians(totals)
        self._j = j1[:, :2]                                  # statuses 1, 2
        sig = np.asarray(sigma, dtype=float)
        expected = months * 24
        if sig.shape != (expected, expected):
            raise ValueError(f"sigma must be ({expected}, {expected})")
        # Contract the group axes with the basis: psi[e, f] has row/column
        # index (month, basis vector) flattened C-style to 3M.
        sn = sig.reshape(3, 8, months, 3, 8, months)
        psi = np.einsum("bg,egmfhn,ch->ebmfcn", _BASIS, sn[:2, :, :, :2], _BASIS,
                        optimize=True)
        self._psi = [
            [np.ascontiguousarray(
                psi[e, :, :, f, :, :].transpose(1, 0, 3, 2).reshape(3 * months,
                                                                    3 * months))
             for f in range(2)]
            for e in range(2)
        ]
        self.n_evaluations = 0

    def _gamma(self, a: float, k: float) -> np.ndarray:
        """(M, M, 3) basis coefficients of the closed-form weighting for one
        status: entry (m, m', beta)."""
        months = self.months
        alpha1 = (1.0 - k) / 8.0 + a
        alpha2 = (1.0 - k) / 8.0 + k / 6.0 - a / 3.0
        gamma = np.zeros((months, months, 3))
        idx = np.arange(months)
        gamma[0, 0] = (0.125, 0.125, 0.0)
        if months == 1:
            return gamma
        gamma[idx[1:], idx[1:], 0] = alpha1
        gamma[idx[1:], idx[1:], 1] = alpha2
        # Past months decay geometrically in k.
        m_i, mp_i = np.tril_indices(months, k=-1)
        powers = np.power(k, (m_i - mp_i).astype(float))
        head = mp_i == 0
        gamma[m_i, mp_i, 0] = powers * np.where(head, 0.125, alpha1)
        gamma[m_i, mp_i, 1] = powers * np.where(head, 0.125, alpha2)
        gamma[m_i, mp_i, 2] = powers * (-1.0 / 6.0)
        return gamma

    def _transfer(self, coeffs: tuple[float, float], psi: np.ndarray) -> np.ndarray:
        """Rows ``z[m] = gamma_m @ psi`` computed by the geometric recursion
        of the weighting's past coefficients (O(M^2) instead of a full
        matrix product)."""
        a, k = coeffs
        months = self.months
        alpha1 = (1.0 - k) / 8.0 + a
        alpha2 = (1.0 - k) / 8.0 + k / 6.0 - a / 3.0
        z = np.empty((months, psi.shape[1]))
        z[0] = 0.125 * (psi[0] + psi[1])
        for m in range(1, months):
            z[m] = (k * z[m - 1] - (k / 6.0) * psi[3 * (m - 1) + 2]
                    + alpha1 * psi[3 * m] + alpha2 * psi[3 * m + 1])
        return z

    def components(self, params) -> tuple[float, float]:
        """(level, change) sums at ``(a1, k1, a2, k2)``.

        Only the tridiagonal part of the month-by-month quadratic form is
        needed: the diagonal feeds the level sum and the first
        off-diagonals feed the change sum.
        """
        a1, k1, a2, k2 = (float(v) for v in params)
        months = self.months
        pairs = [(a1, k1), (a2, k2)]
        g = [self._gamma(a, k).reshape(months, -1) for a, k in pairs]
        level = 0.0
        change = 0.0
        for e in range(2):
            je = self._j[:, e]
            for f in range(2):
                jf = self._j[:, f]
                z = self._transfer(pairs[e], self._psi[e][f])
                diag = np.einsum("mx,mx->m", z, g[f])
                level += float(np.sum(je * diag * jf))
                if months > 1:
                    sub = np.einsum("mx,mx->m", z[1:], g[f][:-1])
                    sup = np.einsum("mx,mx->m", z[:-1], g[f][1:])
                    w_diag = je * jf * diag
                    change += float(np.sum(
                        w_diag[1:] + w_diag[:-1]
                        - je[1:] * jf[:-1] * sub
                        - je[:-1] * jf[1:] * sup
                    ))
        self.n_evaluations += 1
        return level, change

    def __call__(self, params) -> float:
        level, change = self.components(params)
        if self.kind == "level":
            return level
        if self.kind == "change":
            return change
        return level + change

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.array([self(p) for p in points])


def nelder_mead(fn, starts, xatol: float = 1e-9, fatol: float = 1e-12,
                maxfev: int = 100_000) -> OptimizationResult:
    """Run Nelder-Mead from several starts and keep the best end point."""
    best = None
    total_fev = 0
    converged = False
    for x0 in starts:
        res = minimize(fn, np.asarray(x0, dtype=float), method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": fatol,
                                "maxfev": maxfev})
        total_fev += res.nfev
        converged = converged or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    value = float(fn(best.x))
    return OptimizationResult(params=np.asarray(best.x), value=value,
                              n_evaluations=total_fev + 1, converged=converged)


def _starting_points(seed: int, restarts: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    starts = [np.asarray(CPS_START)]
    starts.extend(rng.uniform(-1.0, 1.0, size=4) for _ in range(restarts))
    return starts


def optimal_ak(sigma: np.ndarray, true_totals: np.ndarray,
               kind: str = "compromise", seed: int = 0,
               restarts: int = 4) -> OptimizationResult:
    """Minimize the chosen summed variance over ``(a1, k1, a2, k2)``.

    Searches all of R^4 (optimal coefficients can be negative); starts at
    the production point plus ``restarts`` seeded random points.
    """
    objective = AkObjective(sigma, true_totals, kind)
    result = nelder_mead(objective, _starting_points(seed, restarts))
    result.n_evaluations = objective.n_evaluations
    return result


def census_grid_ak(sigma: np.ndarray, true_totals: np.ndarray,
                   kind: str = "compromise",
                   grid_values: np.ndarray | None = None) -> OptimizationResult:
    """Exhaustive production-style coarse grid over the four coefficients."""
    if grid_values is None:
        grid_values = np.round(np.linspace(0.1, 1.0, 10), 10)
    objective = AkObjective(sigma, true_totals, kind)
    pts = np.stack(np.meshgrid(*([grid_values] * 4), indexing="ij"),
                   axis=-1).reshape(-1, 4)
    values = objective.evaluate_many(pts)
    best = int(values.argmin())
    return OptimizationResult(params=pts[best], value=float(values[best]),
                              n_evaluations=pts.shape[0], converged=True,
                              table=(pts, values))


def rc_objective_values(enum: Enumeration, alpha: float,
                        error: MeasurementError | None = None
                        ) -> tuple[float, float]:
    """(level, change) exact summed rate MSE of the regression composite."""
    totals, _ = enum.rc_all(alpha, error)
    truth = enum.true_totals()
    true_rate = unemployment_rate(truth)
    rates = totals[:, :, 1] / (totals[:, :, 0] + totals[:, :, 1])
    level = float(((rates - true_rate) ** 2).mean(axis=0).sum())
    diffs = rates[:, 1:] - rates[:, :-1]
    true_diff = true_rate[1:] - true_rate[:-1]
    change = float(((diffs - true_diff) ** 2).mean(axis=0).sum())
    return level, change


def best_alpha(enum: Enumeration, kind: str = "compromise",
               grid: np.ndarray | None = None,
               error: MeasurementError | None = None) -> OptimizationResult:
    """Exhaustive mixing-parameter search for the regression composite.

    The objective is the exact summed rate MSE (level, change, or their
    sum) over the enumerated design.  Grid points whose calibration fails
    are excluded and reported.
    """
    if kind not in OBJECTIVE_KINDS:
        raise ValueError(f"kind must be one of {OBJECTIVE_KINDS}")
    if grid is None:
        grid = np.round(np.linspace(0.0, 1.0, 21), 10)
    grid = np.asarray(grid, dtype=float)
    values = np.full(grid.size, np.nan)
    excluded = []
    for i, alpha in enumerate(grid):
        try:
            level, change = rc_objective_values(enum, float(alpha), error)
        except CalibrationError as exc:
            excluded.append((float(alpha), str(exc)))
            continue
        values[i] = {"level": level, "change": change,
                     "compromise": level + change}[kind]
    if np.all(np.isnan(values)):
        raise CalibrationError("calibration failed at every grid point")
    best = int(np.nanargmin(values))
    return OptimizationResult(params=grid[best: best + 1],
                              value=float(values[best]),
                              n_evaluations=int(np.isfinite(values).sum()),
                              converged=True, table=(grid, values),
                              excluded=excluded)


def empirical_best(variant: str, sigma_hat: np.ndarray,
                   true_totals: np.ndarray, kind: str = "compromise",
                   seed: int = 0, name: str | None = None) -> EstimatorSpec:
    """Plug an estimated covariance into the optimal constructions.

    ``variant`` selects the estimator family: ``"ak"`` re-optimizes the
    composite coefficients under ``sigma_hat``; ``"blue"`` builds the
    generalized least-squares weighting from it.
    """
    months = np.asarray(true_totals).shape[0]
    if variant == "ak":
        res = optimal_ak(sigma_hat, true_totals, kind, seed=seed)
        return EstimatorSpec(name=name or "empirical_ak", kind="ak",
                             coeffs=AkCoefficients.from_params(res.params))
    if variant == "blue":
        return EstimatorSpec(name=name or "empirical_blue", kind="linear",
                             weights=blue_weights(sigma_hat, months))
    raise ValueError(f"unknown variant {variant!r}")

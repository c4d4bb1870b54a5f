"""Design-based moments, covariance estimation, and comparison tables.

Because the design has a small, fully enumerable sample space, means,
biases, variances and mean squared errors here are *exact* expectations
under the design (uniform over draws), not Monte-Carlo estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayMatrix
from .design import RotationDesign, SampleAssignment
from .enumeration import Enumeration
from .estimators import AkCoefficients, MeasurementError, as_codes
from .population import N_STATUS, unemployment_rate

__all__ = [
    "EstimatorSpec",
    "MomentReport",
    "exact_moments",
    "exact_sigma",
    "estimate_sigma",
    "rate_jacobians",
    "linearized_variance",
    "LinearizedVariance",
    "exact_linear_oracle",
    "OracleResult",
    "relative_mse_table",
    "QuantileTable",
    "QUANTILE_PROBS",
]

QUANTILE_PROBS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class EstimatorSpec:
    """A named, evaluate-anywhere description of one estimator."""

    name: str
    kind: str                                # direct | mis_group | ak | linear | rc
    coeffs: AkCoefficients | None = None
    weights: ArrayMatrix | None = None
    alpha: float | None = None
    group: int | None = None

    def values(self, enum: Enumeration,
               error: MeasurementError | None = None) -> np.ndarray:
        """(draws, M, 3) estimates on every draw of the enumeration."""
        if self.kind == "direct":
            return enum.direct_all(error)
        if self.kind == "mis_group":
            return enum.mis_all(error)[:, :, self.group - 1, :]
        if self.kind == "ak":
            return enum.ak_all(self.coeffs, error)
        if self.kind == "linear":
            return enum.linear_all(self.weights, error)
        if self.kind == "rc":
            totals, _ = enum.rc_all(self.alpha, error)
            return totals
        raise ValueError(f"unknown estimator kind {self.kind!r}")


@dataclass(frozen=True)
class MomentReport:
    """Exact design moments of one estimator against the true totals.

    Totals moments are (M, 3); rate moments are per month (M,); change
    moments cover months 2..M (M-1,).  All satisfy mse = variance + bias^2
    up to rounding because mse is computed directly against the truth.
    """

    name: str
    totals_mean: np.ndarray
    totals_bias: np.ndarray
    totals_variance: np.ndarray
    totals_mse: np.ndarray
    rate_mean: np.ndarray
    rate_bias: np.ndarray
    rate_variance: np.ndarray
    rate_mse: np.ndarray
    change_mean: np.ndarray
    change_bias: np.ndarray
    change_variance: np.ndarray
    change_mse: np.ndarray

    @classmethod
    def from_values(cls, name: str, values: np.ndarray,
                    true_totals: np.ndarray) -> "MomentReport":
        values = np.asarray(values, dtype=float)
        truth = np.asarray(true_totals, dtype=float)
        months = truth.shape[0]
        if values.shape[1:] != (months, N_STATUS):
            raise ValueError("values must be (draws, M, 3)")

        def moments(v, t):
            mean = v.mean(axis=0)
            bias = mean - t
            var = ((v - mean) ** 2).mean(axis=0)
            mse = ((v - t) ** 2).mean(axis=0)
            return mean, bias, var, mse

        t_mean, t_bias, t_var, t_mse = moments(values, truth)
        rates = values[:, :, 1] / (values[:, :, 0] + values[:, :, 1])
        true_rate = unemployment_rate(truth)
        r_mean, r_bias, r_var, r_mse = moments(rates, true_rate)
        changes = rates[:, 1:] - rates[:, :-1]
        true_change = true_rate[1:] - true_rate[:-1]
        c_mean, c_bias, c_var, c_mse = moments(changes, true_change)
        return cls(name, t_mean, t_bias, t_var, t_mse,
                   r_mean, r_bias, r_var, r_mse,
                   c_mean, c_bias, c_var, c_mse)


def exact_moments(enum: Enumeration, spec: EstimatorSpec,
                  error: MeasurementError | None = None) -> MomentReport:
    """Exact design moments of ``spec`` over the full sample space."""
    return MomentReport.from_values(
        spec.name, spec.values(enum, error), enum.true_totals()
    )


def exact_sigma(enum: Enumeration,
                error: MeasurementError | None = None) -> np.ndarray:
    """Exact covariance of the vectorized month-in-sample estimates."""
    return enum.exact_sigma(error)


def estimate_sigma(observed, design: RotationDesign,
                   assignment: SampleAssignment) -> np.ndarray:
    """Covariance estimate built from one realized sample's microdata.

    Household-level cross-month covariances are computed over the
    households interviewed in both months; a same-cluster block is scaled
    like a cluster sample of ``group_households`` households, a
    different-cluster block like two non-overlapping simple random samples
    (a small negative covariance).  Month pairs whose samples share fewer
    than two households contribute zero blocks.
    """
    codes = as_codes(observed)
    if assignment.design != design:
        raise ValueError("assignment was built under a different design")
    months = design.months
    h_total, hsize = design.households, design.household_size
    n_month = design.n_groups * design.group_households
    order = months * 8 * N_STATUS

    hh_totals = np.zeros((months, h_total, N_STATUS))
    eye = np.eye(N_STATUS)
    for m in range(months):
        per_ind = eye[codes[m].astype(np.int64)]
        hh_totals[m] = per_ind.reshape(h_total, hsize, N_STATUS).sum(axis=1)

    lags = np.asarray(design.lags)
    same_scale = h_total ** 2 * (1.0 - n_month / h_total) / (n_month / 8.0)
    cross_scale = -float(h_total)
    sigma = np.zeros((order, order))

    def rows(m, g):
        return (m - 1) + months * (g - 1) + 8 * months * np.arange(N_STATUS)

    for m in range(1, months + 1):
        ells_m = m + lags
        for mp in range(m, months + 1):
            ells_mp = mp + lags
            common = np.intersect1d(ells_m, ells_mp)
            if common.size == 0:
                continue
            hh_idx = np.concatenate([
                assignment.group_households(m, int(np.where(ells_m == ell)[0][0] + 1))
                for ell in common
            ]) - 1
            if hh_idx.size < 2:
                continue
            a = hh_totals[m - 1, hh_idx]
            b = hh_totals[mp - 1, hh_idx]
            a = a - a.mean(axis=0)
            b = b - b.mean(axis=0)
            s2 = a.T @ b / (hh_idx.size - 1)
            for g in range(1, 9):
                for gp in range(1, 9):
                    val = (same_scale if m + lags[g - 1] == mp + lags[gp - 1]
                           else cross_scale) * s2
                    r_idx, c_idx = rows(m, g), rows(mp, gp)
                    sigma[np.ix_(r_idx, c_idx)] = val
                    sigma[np.ix_(c_idx, r_idx)] = val.T
    return (sigma + sigma.T) / 2.0


def rate_jacobians(totals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the rate and of the month-to-month rate change.

    Returns ``(j1, j2)``: ``j1[m]`` is the gradient of ``x2 / (x1 + x2)``
    at the month-``m`` totals; ``j2[m-1]`` stacks the gradients of
    ``rate_m - rate_{m-1}`` with respect to ``(totals_m, totals_{m-1})``.
    """
    t = np.asarray(totals, dtype=float)
    labor = t[:, 0] + t[:, 1]
    if np.any(labor <= 0):
        bad = int(np.nonzero(labor <= 0)[0][0])
        raise ValueError(f"month {bad + 1}: labor force is zero")
    j1 = np.zeros_like(t)
    j1[:, 0] = -t[:, 1] / labor ** 2
    j1[:, 1] = t[:, 0] / labor ** 2
    j2 = np.concatenate([j1[1:], -j1[:-1]], axis=1)
    return j1, j2


@dataclass(frozen=True)
class LinearizedVariance:
    """Linearized variances of rate levels and changes plus their sums."""

    level_series: np.ndarray     # (M,)
    change_series: np.ndarray    # (M-1,)

    @property
    def level(self) -> float:
        return float(self.level_series.sum())

    @property
    def change(self) -> float:
        return float(self.change_series.sum())

    @property
    def compromise(self) -> float:
        return self.level + self.change


def linearized_variance(weights: ArrayMatrix, sigma: np.ndarray,
                        true_totals: np.ndarray) -> LinearizedVariance:
    """Delta-method rate variances of a linear estimator of the totals."""
    months = true_totals.shape[0]
    if weights.row_dims != (months, N_STATUS):
        raise ValueError("weights must map onto (M, 3) totals")
    j1, _ = rate_jacobians(true_totals)
    cov = weights.data @ np.asarray(sigma, dtype=float) @ weights.data.T
    cov = cov.reshape(N_STATUS, months, N_STATUS, months)
    gram = np.einsum("me,emfn,nf->mn", j1, cov, j1)
    level_series = np.diag(gram).copy()
    change_series = (level_series[1:] + level_series[:-1]
                     - 2.0 * np.diagonal(gram, offset=-1))
    return LinearizedVariance(level_series, change_series)


@dataclass(frozen=True)
class OracleResult:
    """Outcome of the exact linear-weights construction."""

    exact: bool
    rank: int
    weights: ArrayMatrix | None
    residual: float


def exact_linear_oracle(enum: Enumeration,
                        error: MeasurementError | None = None,
                        tol: float = 1e-8) -> OracleResult:
    """Try to build linear weights that reproduce the true totals on every
    draw.

    Solvability needs the all-ones vector in the column space of the
    realization matrix (guaranteed when its rank equals the number of
    draws); the verdict is decided by the least-squares residual and the
    rank is reported alongside.
    """
    y = enum.realization_matrix(error)
    ones = np.ones(y.shape[0])
    sol, _, rank, _ = np.linalg.lstsq(y, ones, rcond=None)
    residual = float(np.abs(y @ sol - ones).max())
    if residual > tol:
        return OracleResult(False, int(rank), None, residual)
    months = enum.design.months
    t_vec = enum.true_totals().ravel(order="F")
    w = ArrayMatrix((months, N_STATUS), (months, 8, N_STATUS),
                    np.outer(t_vec, sol))
    return OracleResult(True, int(rank), w, residual)


@dataclass(frozen=True)
class QuantileTable:
    """Quantiles and mean, over months, of per-month relative MSE."""

    target: str                   # "level" or "change"
    baseline: str
    estimators: tuple[str, ...]
    quantiles: np.ndarray         # (n_estimators, 5) at 0/25/50/75/100%
    means: np.ndarray             # (n_estimators,)
    excluded_months: tuple[int, ...] = field(default_factory=tuple)

    def row(self, name: str) -> tuple[np.ndarray, float]:
        i = self.estimators.index(name)
        return self.quantiles[i], float(self.means[i])


def relative_mse_table(reports, baseline: str = "direct",
                       target: str = "level") -> QuantileTable:
    """Tabulate per-month MSE ratios against a baseline estimator.

    ``target`` selects the rate-level or rate-change MSE series.  Months
    where the baseline MSE is zero are excluded and reported.  Quantiles
    use the inclusive order-statistic convention (no interpolation).
    """
    if target not in ("level", "change"):
        raise ValueError("target must be 'level' or 'change'")
    by_name = {rep.name: rep for rep in reports}
    if baseline not in by_name:
        raise ValueError(f"baseline {baseline!r} not among the reports")
    attr = "rate_mse" if target == "level" else "change_mse"
    base = getattr(by_name[baseline], attr)
    keep = base > 0
    excluded = tuple(int(m + 1) for m in np.nonzero(~keep)[0])
    names, quants, means = [], [], []
    for rep in reports:
        ratio = getattr(rep, attr)[keep] / base[keep]
        names.append(rep.name)
        quants.append(np.quantile(ratio, QUANTILE_PROBS, method="inverted_cdf"))
        means.append(ratio.mean())
    return QuantileTable(target=target, baseline=baseline,
                         estimators=tuple(names),
                         quantiles=np.asarray(quants),
                         means=np.asarray(means),
                         excluded_months=excluded)

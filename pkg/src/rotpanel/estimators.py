"""Point estimators of monthly status totals.

All estimators consume the observed status array (codes or one-hot), a
weight set whose month-``m`` support is the month-``m`` sample, and the
rotation-group structure of one draw.  Outputs are (M, 3) total estimates
in the fixed status order employed / unemployed / not in the labor force.

The composite recursion used here blends, with per-status coefficients
``k`` and ``a``,

    t_m = (1 - k) * direct_m
          + k * (t_{m-1} + 4/3 * matched_change_m)
          + a * (incoming_m - continuing_m / 3) * 8

where ``matched_change_m`` is the weighted change summed over individuals
interviewed in both months, ``incoming_m`` the weighted total over the two
entering rotation groups and ``continuing_m`` the weighted total over the
six continuing ones.  The 4/3 and 1/3 factors rescale the 6-group and
2-group sums against the 8-group direct estimator, which keeps every month
unbiased; with ``k = a = 0`` the recursion collapses to the direct
estimator.  The same estimator is available in closed form as a linear
weighting of all month-in-sample estimates (:func:`ak_linear_weights`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrays import DEFAULT_RCOND, ArrayMatrix, pinv_symmetric
from .design import RotationDesign, SampleAssignment, household_individuals
from .population import N_STATUS, EMPLOYED, UNEMPLOYED, one_hot

__all__ = [
    "WeightSet",
    "AkCoefficients",
    "BailarModel",
    "MeasurementError",
    "base_weights",
    "direct_estimator",
    "mis_estimator",
    "ak_recursive",
    "ak_linear_weights",
    "apply_linear",
    "design_matrices",
    "blue",
    "blue_weights",
    "blue_bailar",
    "blue_bailar_weights",
    "inject_measurement_error",
    "measurement_flips",
    "as_codes",
    "group_roles",
]

_DEFAULT_LAGS = (0, 1, 2, 3, 12, 13, 14, 15)


def group_roles(lags=_DEFAULT_LAGS):
    """Entering/continuing group labels implied by the lag vector.

    Group ``g`` (cluster ``m + lag_g``) was interviewed last month exactly
    when ``lag_g + 1`` is itself a lag; its label then was the position of
    ``lag_g + 1``.  For the 4-8-4 lags the entering groups are (4, 8) and
    the continuing ones (1, 2, 3, 5, 6, 7), labeled (2, 3, 4, 6, 7, 8) a
    month earlier.
    """
    continuing, prev_labels, entering = [], [], []
    for g, lag in enumerate(lags, start=1):
        if lag + 1 in lags:
            continuing.append(g)
            prev_labels.append(lags.index(lag + 1) + 1)
        else:
            entering.append(g)
    return tuple(continuing), tuple(prev_labels), tuple(entering)


_CONTINUING, _PREV_CONTINUING, _ENTERING = group_roles()


def as_codes(y: np.ndarray) -> np.ndarray:
    """Normalize a status array to (M, N) int codes (accepts one-hot)."""
    y = np.asarray(y)
    if y.ndim == 3:
        if y.shape[-1] != N_STATUS:
            raise ValueError(f"one-hot axis must have size {N_STATUS}")
        return np.argmax(y, axis=-1).astype(np.int8)
    if y.ndim != 2:
        raise ValueError("status array must be (M, N) codes or (M, N, 3) one-hot")
    return y


@dataclass(frozen=True)
class WeightSet:
    """Per-month weights supported on the month's sample.

    ``members`` holds 1-based individual ids in group-major sample order
    (rotation group 1 first, each group in its systematic household order);
    ``values`` is aligned with it.  Individuals outside ``members[m]`` have
    weight zero in month ``m``.
    """

    size: int
    members: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.members.shape != self.values.shape:
            raise ValueError("members and values must have the same shape")

    @property
    def months(self) -> int:
        return self.members.shape[0]

    def month_total(self, m: int) -> float:
        return float(self.values[m - 1].sum())

    def dense(self) -> np.ndarray:
        """(M, N) dense weight matrix; zero off-sample."""
        out = np.zeros((self.months, self.size))
        rows = np.repeat(np.arange(self.months), self.members.shape[1])
        out[rows, (self.members - 1).ravel()] = self.values.ravel()
        return out


def sample_members(assignment: SampleAssignment) -> np.ndarray:
    """(M, n_sample) member ids in group-major order for every month."""
    design = assignment.design
    flat_hh = assignment.households.reshape(design.months, -1)
    return household_individuals(flat_hh.ravel(), design.household_size).reshape(
        design.months, -1
    )


def base_weights(design: RotationDesign, assignment: SampleAssignment) -> WeightSet:
    """Inverse inclusion-probability weights: every sampled individual gets
    ``N / n_sample`` (125 under the default geometry)."""
    members = sample_members(assignment)
    values = np.full(members.shape, design.base_weight)
    return WeightSet(size=design.population_size, members=members, values=values)


def _weighted_status_totals(codes_row, w_row) -> np.ndarray:
    return np.bincount(codes_row, weights=w_row, minlength=N_STATUS)


def direct_estimator(y, w: WeightSet) -> np.ndarray:
    """Survey-weighted totals using all rotation groups: (M, 3)."""
    codes = as_codes(y)
    if codes.shape[0] < w.months:
        raise ValueError("status array has fewer months than the weights")
    out = np.empty((w.months, N_STATUS))
    for m in range(w.months):
        out[m] = _weighted_status_totals(codes[m, w.members[m] - 1], w.values[m])
    return out


def mis_estimator(y, w: WeightSet, assignment: SampleAssignment) -> np.ndarray:
    """Month-in-sample estimates: (M, 8, 3), entry (m, g) is 8 times the
    weighted total over rotation group ``g`` alone."""
    codes = as_codes(y)
    design = assignment.design
    per_group = design.group_households * design.household_size
    n_groups = design.n_groups
    if w.members.shape[1] != n_groups * per_group:
        raise ValueError("weight set does not match the design's sample size")
    out = np.empty((w.months, n_groups, N_STATUS))
    for m in range(w.months):
        codes_m = codes[m, w.members[m] - 1]
        for g in range(n_groups):
            sl = slice(g * per_group, (g + 1) * per_group)
            out[m, g] = n_groups * _weighted_status_totals(codes_m[sl], w.values[m, sl])
    return out


# ---------------------------------------------------------------------------
# Composite (AK-type) estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AkCoefficients:
    """Per-status composite coefficients; values may lie outside [0, 1]."""

    a: tuple[float, float, float]
    k: tuple[float, float, float]

    @classmethod
    def cps(cls) -> "AkCoefficients":
        """The production coefficients for the first two statuses; the third
        status is left at the direct estimator."""
        return cls(a=(0.3, 0.4, 0.0), k=(0.4, 0.7, 0.0))

    @classmethod
    def from_params(cls, params) -> "AkCoefficients":
        """Build from an (a1, k1, a2, k2) vector, third status direct."""
        a1, k1, a2, k2 = (float(v) for v in params)
        return cls(a=(a1, a2, 0.0), k=(k1, k2, 0.0))


def ak_recursive(y, w: WeightSet, assignment: SampleAssignment,
                 coeffs: AkCoefficients) -> np.ndarray:
    """Evaluate the composite recursion month by month on the microdata."""
    codes = as_codes(y)
    a = np.asarray(coeffs.a, dtype=float)
    k = np.asarray(coeffs.k, dtype=float)
    direct = direct_estimator(codes, w)
    out = np.empty_like(direct)
    out[0] = direct[0]
    for m in range(1, w.months):
        cur, prev = w.members[m], w.members[m - 1]
        common, icur, iprev = np.intersect1d(cur, prev, return_indices=True)
        entering = np.setdiff1d(cur, prev)
        codes_cur = codes[m, common - 1]
        codes_prev = codes[m - 1, common - 1]
        continuing = _weighted_status_totals(codes_cur, w.values[m, icur])
        matched_prev = _weighted_status_totals(codes_prev, w.values[m - 1, iprev])
        w_ent = w.values[m][np.isin(cur, entering)]
        incoming = _weighted_status_totals(codes[m, entering - 1], w_ent)
        change = continuing - matched_prev
        contrast = 8.0 * (incoming - continuing / 3.0)
        out[m] = ((1.0 - k) * direct[m]
                  + k * (out[m - 1] + (4.0 / 3.0) * change)
                  + a * contrast)
    return out


def ak_coefficient_array(coeffs: AkCoefficients, months: int) -> np.ndarray:
    """(M, M', 8, 3) per-status scalars of the closed-form weighting.

    ``[m, m', g, e]`` multiplies the month-``m'`` group-``g`` estimate inside
    the month-``m`` composite for status ``e``; zero for ``m' > m``.
    """
    a = np.asarray(coeffs.a, dtype=float)
    k = np.asarray(coeffs.k, dtype=float)
    c = np.zeros((months, months, 8, N_STATUS))
    c[0, 0, :, :] = 1.0 / 8.0
    ent = [g - 1 for g in _ENTERING]
    cont = [g - 1 for g in _CONTINUING]
    prev_cont = [g - 1 for g in _PREV_CONTINUING]
    n_cont = float(len(cont))
    for m in range(1, months):
        c[m, :m] = c[m - 1, :m] * k
        c[m, m - 1, prev_cont] -= k / n_cont
        c[m, m, ent] = (1.0 - k) / 8.0 + a
        c[m, m, cont] = (1.0 - k) / 8.0 + k / n_cont - a / 3.0
    return c


def ak_linear_weights(coeffs: AkCoefficients, months: int) -> ArrayMatrix:
    """Closed-form weighting of all month-in-sample estimates equivalent to
    :func:`ak_recursive`; rows (M, 3), columns (M, 8, 3)."""
    c = ak_coefficient_array(coeffs, months)
    w = np.zeros((N_STATUS, months, N_STATUS, 8, months))
    for e in range(N_STATUS):
        w[e, :, e, :, :] = c[:, :, :, e].transpose(0, 2, 1)
    return ArrayMatrix(
        (months, N_STATUS), (months, 8, N_STATUS),
        w.reshape(N_STATUS * months, N_STATUS * 8 * months),
    )


def apply_linear(weights: ArrayMatrix, mis: np.ndarray) -> np.ndarray:
    """Apply a linear weighting to an (M, 8, 3) month-in-sample array."""
    return weights.apply(mis)


# ---------------------------------------------------------------------------
# Best linear estimation
# ---------------------------------------------------------------------------

def design_matrices(months: int) -> tuple[ArrayMatrix, ArrayMatrix]:
    """The unbiasedness design matrix X and the group-bias design matrix X'.

    X maps (month, status) totals to their expected (month, group, status)
    estimates; X' carries one additive bias column per (group < 8, status),
    with group 8 absorbing minus the sum so the per-status biases sum to
    zero.
    """
    eye_m = np.eye(months)
    x = np.kron(np.eye(N_STATUS), np.kron(np.ones((8, 1)), eye_m))
    b = np.vstack([np.eye(7), -np.ones((1, 7))])
    xp = np.kron(np.eye(N_STATUS), np.kron(b, np.ones((months, 1))))
    return (
        ArrayMatrix((months, 8, N_STATUS), (months, N_STATUS), x),
        ArrayMatrix((months, 8, N_STATUS), (7, N_STATUS), xp),
    )


def _check_sigma(sigma: np.ndarray, months: int) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    order = months * 8 * N_STATUS
    if sigma.shape != (order, order):
        raise ValueError(f"sigma must be ({order}, {order}), got {sigma.shape}")
    scale = np.max(np.abs(sigma), initial=1.0)
    if np.max(np.abs(sigma - sigma.T)) > 1e-8 * scale:
        raise ValueError("sigma is not symmetric")
    return (sigma + sigma.T) / 2.0


def _group_average_rows(mat: np.ndarray, months: int) -> np.ndarray:
    """Average the (month, group, status) row index over groups, giving a
    (month, status) row index: implements X+ applied from the left."""
    resh = mat.reshape(N_STATUS, 8, months, -1)
    return resh.mean(axis=1).reshape(N_STATUS * months, -1)


def blue_weights(sigma: np.ndarray, months: int,
                 rcond: float = DEFAULT_RCOND) -> ArrayMatrix:
    """Weights of the minimum-variance unbiased linear combination of all
    month-in-sample estimates, for a given estimate covariance.

    Implements the generalized least-squares solution for a possibly
    singular covariance: with P the projector onto the design column space
    and Q = I - P, the weighting is  X+ (I - sigma (Q sigma Q)+).
    """
    sigma = _check_sigma(sigma, months)
    order = sigma.shape[0]
    # Q sigma Q computed structurally: P averages over the group axis.
    def project(mat):
        resh = mat.reshape(N_STATUS, 8, months, order)
        return np.broadcast_to(
            resh.mean(axis=1, keepdims=True), resh.shape
        ).reshape(order, order)

    p_sigma = project(sigma)
    s = sigma - p_sigma - p_sigma.T + project(p_sigma.T)
    s_pinv = pinv_symmetric(s, rcond)
    core = np.eye(order) - sigma @ s_pinv
    return ArrayMatrix((months, N_STATUS), (months, 8, N_STATUS),
                       _group_average_rows(core, months))


def blue(mis: np.ndarray, sigma: np.ndarray,
         rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Best linear unbiased totals from one (M, 8, 3) estimate array."""
    mis = np.asarray(mis, dtype=float)
    return blue_weights(sigma, mis.shape[0], rcond).apply(mis)


def blue_bailar_weights(sigma: np.ndarray, months: int,
                        rcond: float = DEFAULT_RCOND) -> ArrayMatrix:
    """Best linear unbiased weights under the additive rotation-group bias
    model: the design matrix is augmented with the bias columns X' and the
    totals block of the solution is returned."""
    sigma = _check_sigma(sigma, months)
    order = sigma.shape[0]
    x, xp = design_matrices(months)
    x_star = np.hstack([x.data, xp.data])
    x_star_pinv = np.linalg.pinv(x_star, rcond=rcond)
    p_star = x_star @ x_star_pinv
    q = np.eye(order) - p_star
    s = q @ sigma @ q
    s_pinv = pinv_symmetric(s, rcond)
    core = p_star @ (np.eye(order) - sigma @ s_pinv)
    full = x_star_pinv @ core
    return ArrayMatrix((months, N_STATUS), (months, 8, N_STATUS),
                       full[: N_STATUS * months])


def blue_bailar(mis: np.ndarray, sigma: np.ndarray,
                rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Bias-protected best linear unbiased totals for one estimate array."""
    mis = np.asarray(mis, dtype=float)
    return blue_bailar_weights(sigma, mis.shape[0], rcond).apply(mis)


@dataclass(frozen=True)
class BailarModel:
    """Additive rotation-group biases with per-status linear constraints.

    ``bias[g-1, e-1]`` shifts every month-in-sample (g, e) estimate;
    ``constraints[e]`` is a linear form in the 8 group biases that must
    vanish (all-ones by default, i.e. biases sum to zero per status).
    """

    bias: np.ndarray
    constraints: tuple[np.ndarray, ...] = field(
        default_factory=lambda: tuple(np.ones(8) for _ in range(N_STATUS))
    )

    def __post_init__(self):
        if self.bias.shape != (8, N_STATUS):
            raise ValueError("bias must be (8, 3)")
        for e, form in enumerate(self.constraints):
            val = float(np.dot(form, self.bias[:, e]))
            if abs(val) > 1e-9 * max(1.0, np.abs(self.bias).max()):
                raise ValueError(f"status {e + 1}: bias violates its constraint")

    def mis_bias(self, months: int) -> np.ndarray:
        """(M, 8, 3) additive shift applied to month-in-sample estimates."""
        return np.broadcast_to(self.bias, (months, 8, N_STATUS)).copy()


# ---------------------------------------------------------------------------
# Measurement error
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementError:
    """Deterministic misreporting confined to rotation group 1.

    ``employed_to_unemployed`` flips ``round(fraction * n_employed)`` of the
    group's employed members (lowest ids first); ``unemployed_to_employed``
    flips at most ``cap`` unemployed members (lowest ids first).
    """

    mode: str
    fraction: float = 0.2
    cap: int = 2

    def __post_init__(self):
        if self.mode not in ("employed_to_unemployed", "unemployed_to_employed"):
            raise ValueError(f"unknown measurement-error mode {self.mode!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")


def measurement_flips(member_ids: np.ndarray, codes: np.ndarray,
                      error: MeasurementError) -> tuple[np.ndarray, int]:
    """Ids to flip within one rotation group and their new status code."""
    order = np.argsort(member_ids, kind="stable")
    ids, codes = member_ids[order], codes[order]
    if error.mode == "employed_to_unemployed":
        pool = ids[codes == EMPLOYED]
        n = int(np.floor(error.fraction * pool.size + 0.5))
        return pool[:n], UNEMPLOYED
    pool = ids[codes == UNEMPLOYED]
    return pool[: min(error.cap, pool.size)], EMPLOYED


def inject_measurement_error(y, design: RotationDesign,
                             assignment: SampleAssignment,
                             error: MeasurementError) -> np.ndarray:
    """Return the observed status codes after misreporting in group 1.

    Only members of rotation group 1 (their first interview) are touched;
    every other entry equals the input.
    """
    observed = as_codes(y).copy()
    for m in range(1, design.months + 1):
        members = assignment.group_individuals(m, 1)
        flips, new_code = measurement_flips(
            members, observed[m - 1, members - 1], error
        )
        observed[m - 1, flips - 1] = new_code
    return observed

"""Exact evaluation of estimators over the entire sample space.

Under the systematic cluster rule every cluster is a residue class of
households modulo the number of draws, so the group totals behind every
month-in-sample estimate, for *all* draws at once, can be read out of a
(months, draws, 3) table of residue-class totals.  Full enumeration of the
design then reduces to array indexing, and nonlinear estimators (the
regression composite) run batched across draws month by month.

Member vectors produced here list each group's individuals in ascending id
order, which coincides with the deterministic "lowest ids first"
misreporting rule.
"""

from __future__ import annotations

import numpy as np

from .arrays import ArrayMatrix
from .calibration import CONSTRAINT_RCOND, CalibrationError
from .design import RotationDesign
from .estimators import AkCoefficients, MeasurementError, group_roles
from .population import EMPLOYED, N_STATUS, UNEMPLOYED, Population, one_hot

__all__ = ["Enumeration"]

_cont, _prev, _ent = group_roles()
_CONT0 = np.array(_cont) - 1                # continuing groups, 0-based
_PREV0 = np.array(_prev) - 1                # their labels a month earlier
_ENT0 = np.array(_ent) - 1                  # entering groups, 0-based


class Enumeration:
    """Precomputed tables for one population under one rotation design."""

    def __init__(self, population: Population, design: RotationDesign):
        if population.size != design.population_size:
            raise ValueError("population size does not match the design")
        if population.months < design.months:
            raise ValueError("population has fewer months than the design")
        self.population = population
        self.design = design
        m, draws = design.months, design.draws
        hsize = design.household_size
        blocks = design.households // draws

        statuses = population.statuses[:m]
        # Residue-class totals: class_totals[m, o, e] counts individuals of
        # class o (households with (id-1) % draws == o) in status e.
        eye = np.eye(N_STATUS, dtype=np.int64)
        per_ind = eye[statuses.astype(np.int64)]            # (M, N, 3)
        self.class_totals = (
            per_ind.reshape(m, blocks, draws, hsize, N_STATUS)
            .sum(axis=(1, 3))
            .astype(float)
        )
        # offsets[r-1, m-1, g-1]: residue class of group g in month m.
        r_idx = np.arange(draws)[:, None, None]
        m_idx = np.arange(m)[None, :, None]
        lags = np.asarray(design.lags)[None, None, :]
        self.offsets = (r_idx + m_idx + lags) % draws
        # Ascending member ids (0-based) per residue class.
        cls = np.arange(draws)[:, None]
        hh0 = cls + draws * np.arange(blocks)[None, :]      # 0-based households
        self.class_members = (
            hh0[:, :, None] * hsize + np.arange(hsize)[None, None, :]
        ).reshape(draws, blocks * hsize)
        self._mis_cache: dict = {}
        self._flip_cache: dict = {}

    # -- observed-data tables ------------------------------------------------

    def _flip_deltas(self, error: MeasurementError):
        """Per (month, class): count-level effect of group-1 misreporting and
        the patched member codes of that class."""
        key = error
        if key in self._flip_cache:
            return self._flip_cache[key]
        m, draws = self.design.months, self.design.draws
        statuses = self.population.statuses
        members = self.class_members                      # (draws, 100)
        deltas = np.zeros((m, draws, N_STATUS))
        patched = np.empty((m, draws, members.shape[1]), dtype=np.int8)
        for mm in range(m):
            codes = statuses[mm][members]                 # ascending id order
            if error.mode == "employed_to_unemployed":
                mask = codes == EMPLOYED
                counts = mask.sum(axis=1)
                n_flip = np.floor(error.fraction * counts + 0.5).astype(np.int64)
                src, dst = EMPLOYED, UNEMPLOYED
            else:
                mask = codes == UNEMPLOYED
                counts = mask.sum(axis=1)
                n_flip = np.minimum(error.cap, counts)
                src, dst = UNEMPLOYED, EMPLOYED
            flip = mask & (np.cumsum(mask, axis=1) <= n_flip[:, None])
            out = codes.copy()
            out[flip] = dst
            patched[mm] = out
            deltas[mm, :, src] = -n_flip
            deltas[mm, :, dst] = n_flip
        result = (deltas, patched)
        self._flip_cache[key] = result
        return result

    def mis_all(self, error: MeasurementError | None = None) -> np.ndarray:
        """(draws, M, 8, 3) month-in-sample estimates for every draw."""
        if error in self._mis_cache:
            return self._mis_cache[error]
        scale = 8.0 * self.design.base_weight
        m_idx = np.arange(self.design.months)[None, :, None]
        mis = scale * self.class_totals[m_idx, self.offsets]
        if error is not None:
            deltas, _ = self._flip_deltas(error)
            mis[:, :, 0, :] += scale * deltas[
                np.arange(self.design.months)[None, :], self.offsets[:, :, 0]
            ]
        mis.setflags(write=False)
        self._mis_cache[error] = mis
        return mis

    def direct_all(self, error: MeasurementError | None = None) -> np.ndarray:
        """(draws, M, 3) direct estimates for every draw."""
        return self.mis_all(error).mean(axis=2)

    def realization_matrix(self, error: MeasurementError | None = None) -> np.ndarray:
        """(draws, 24M) matrix whose rows are the vectorized estimate arrays."""
        mis = self.mis_all(error)
        return mis.transpose(0, 3, 2, 1).reshape(self.design.draws, -1)

    def exact_sigma(self, error: MeasurementError | None = None) -> np.ndarray:
        """Exact covariance of the vectorized estimates under the design."""
        y = self.realization_matrix(error)
        centered = y - y.mean(axis=0)
        sigma = centered.T @ centered / self.design.draws
        return (sigma + sigma.T) / 2.0

    def true_totals(self) -> np.ndarray:
        """(M, 3) population counts (identical for every draw)."""
        return self.class_totals.sum(axis=1)

    # -- estimator sweeps ----------------------------------------------------

    def linear_all(self, weights: ArrayMatrix,
                   error: MeasurementError | None = None) -> np.ndarray:
        """Values of a linear weighting on every draw: shape
        ``(draws,) + row_dims``."""
        months = self.design.months
        if weights.col_dims != (months, 8, N_STATUS):
            raise ValueError("weights do not match the design's estimate layout")
        flat = self.realization_matrix(error) @ weights.data.T
        rows = weights.row_dims
        # Per-draw vectors are first-axis-fastest; undo that ordering.
        out = flat.reshape((self.design.draws,) + rows[::-1])
        return out.transpose((0,) + tuple(range(len(rows), 0, -1)))

    def ak_all(self, coeffs: AkCoefficients,
               error: MeasurementError | None = None) -> np.ndarray:
        """(draws, M, 3) composite-recursion values on every draw."""
        mis = self.mis_all(error)
        a = np.asarray(coeffs.a)
        k = np.asarray(coeffs.k)
        direct = mis.mean(axis=2)
        cont = mis[:, :, _CONT0, :].sum(axis=2)     # 8 * continuing total
        prev = mis[:, :, _PREV0, :].sum(axis=2)     # 8 * matched total, lagged
        ent = mis[:, :, _ENT0, :].sum(axis=2)       # 8 * incoming total
        out = np.empty_like(direct)
        out[:, 0] = direct[:, 0]
        for m in range(1, self.design.months):
            change = (cont[:, m] - prev[:, m - 1]) / 8.0
            contrast = ent[:, m] - cont[:, m] / 3.0
            out[:, m] = ((1.0 - k) * direct[:, m]
                         + k * (out[:, m - 1] + (4.0 / 3.0) * change)
                         + a * contrast)
        return out

    def rc_all(self, alpha: float, error: MeasurementError | None = None,
               rcond: float = CONSTRAINT_RCOND):
        """Regression composite on every draw.

        Returns ``(totals, negative_counts)`` with shapes (draws, M, 3) and
        (draws, M).  Raises :class:`CalibrationError` (month attached) when
        some draw's control system is infeasible.
        """
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        design = self.design
        months, draws = design.months, design.draws
        statuses = self.population.statuses
        aux = self.population.aux.astype(float)
        x_targets = self.population.aux_totals.astype(float)
        base_w = design.base_weight
        per_group = design.group_households * design.household_size
        n_sample = design.n_groups * per_group
        span = np.arange(per_group)
        block = lambda g: g * per_group + span
        cont_cur = np.concatenate([block(g) for g in _CONT0])
        cont_prev = np.concatenate([block(g) for g in _PREV0])
        ent = np.concatenate([block(g) for g in _ENT0])
        tau = float(n_sample) / cont_cur.size

        patched = None
        if error is not None:
            _, patched = self._flip_deltas(error)

        def month_codes(m):
            """(draws, n_sample) observed codes plus 0-based member ids, in
            group-major ascending-id order."""
            mem = self.class_members[self.offsets[:, m, :]]      # (R, 8, n)
            codes = statuses[m][mem]
            if patched is not None:
                codes[:, 0, :] = patched[m][self.offsets[:, m, 0]]
            return codes.reshape(draws, n_sample), mem.reshape(draws, n_sample)

        totals = np.empty((draws, months, N_STATUS))
        negatives = np.zeros((draws, months), dtype=np.int64)
        eye = np.eye(N_STATUS)

        codes, members = month_codes(0)
        z_prev = eye[codes]
        totals[:, 0] = base_w * z_prev.sum(axis=1)
        z_totals = totals[:, 0].copy()
        sum_w_prev = np.full(draws, base_w * n_sample)

        for m in range(1, months):
            codes, members = month_codes(m)
            y_cur = eye[codes]
            z_cur = y_cur
            proxy = np.empty_like(z_cur)
            proxy[:, cont_cur] = (
                alpha * ((z_prev[:, cont_prev] - z_cur[:, cont_cur]) / tau
                         + z_cur[:, cont_cur])
                + (1.0 - alpha) * z_prev[:, cont_prev]
            )
            carry = z_totals / sum_w_prev[:, None]
            proxy[:, ent] = alpha * z_cur[:, ent] + (1.0 - alpha) * carry[:, None, :]

            controls = np.concatenate(
                [proxy.transpose(0, 2, 1), aux[members].transpose(0, 2, 1)],
                axis=1,
            )                                                    # (R, q, n)
            target = np.concatenate(
                [z_totals, np.broadcast_to(x_targets, (draws, x_targets.size))],
                axis=1,
            )
            gap = target - base_w * controls.sum(axis=2)
            gram = base_w * np.einsum("rqn,rpn->rqp", controls, controls)
            u, s, vt = np.linalg.svd(gram)
            keep = s > rcond * s[:, :1]
            coef = np.where(keep, np.einsum("rqp,rq->rp", u, gap) /
                            np.where(keep, s, 1.0), 0.0)
            lam = np.einsum("rpq,rp->rq", vt, coef)
            resid = np.einsum("rqp,rp->rq", gram, lam) - gap
            scale = np.maximum(np.abs(target).max(), 1.0)
            if np.abs(resid).max() > 1e-8 * scale:
                bad = int(np.abs(resid).max(axis=1).argmax())
                raise CalibrationError(
                    f"month {m + 1}: control system infeasible (draw {bad + 1})",
                    month=m + 1,
                )
            w_star = base_w * (1.0 + np.einsum("rqn,rq->rn", controls, lam))
            negatives[:, m] = (w_star < 0).sum(axis=1)
            totals[:, m] = np.einsum("rn,rne->re", w_star, y_cur)
            z_totals = np.einsum("rn,rne->re", w_star, z_cur)
            sum_w_prev = w_star.sum(axis=1)
            z_prev = z_cur

        return totals, negatives

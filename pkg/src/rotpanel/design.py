"""The 4-8-4 rotating panel design over a closed household universe.

Households are grouped into clusters of ``n`` (default 20) by a systematic
rule: cluster ``ell`` of draw ``r`` contains households

    rem((r - 1 + ell - 1) + (H / n) * (j - 1), H) + 1,   j = 1 .. n.

A month-``m`` sample is the union of 8 rotation groups, where group ``g``
is cluster ``m + lag_g`` with lags ``(0, 1, 2, 3, 12, 13, 14, 15)``: a
cluster is interviewed for 4 consecutive months, rests 8, then returns for
4 more.  The month-in-sample index ``g`` counts how many times the group
has been in sample up to the current month.  Because the cluster rule is a
pure shift in ``r``, there are exactly ``H / n`` (default 1000)
equiprobable longitudinal samples, so the full sample space is enumerable.

Everything in the public API is 1-based: draws ``r``, months ``m``, groups
``g``, cluster indices ``ell``, household and individual ids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RotationDesign",
    "SampleAssignment",
    "cluster",
    "assignment",
    "enumerate_assignments",
    "cps_month_mapping",
    "rotation_chart_rows",
]


@dataclass(frozen=True)
class RotationDesign:
    """Geometry of the rotating design.

    ``households`` is the universe size H, ``group_households`` the cluster
    size n, so there are ``households / group_households`` possible draws.
    """

    households: int = 20_000
    group_households: int = 20
    months: int = 85
    household_size: int = 5
    lags: tuple[int, ...] = (0, 1, 2, 3, 12, 13, 14, 15)

    def __post_init__(self):
        if self.households % self.group_households != 0:
            raise ValueError("household count must be a multiple of the group size")
        if list(self.lags) != sorted(set(self.lags)):
            raise ValueError("lags must be strictly increasing")
        if self.months + self.lags[-1] > self.draws:
            # Cluster indices must stay within one period of the systematic
            # rule, otherwise distinct clusters could share households.
            raise ValueError("too many months for the cluster period")

    @property
    def draws(self) -> int:
        """Number of equiprobable longitudinal samples."""
        return self.households // self.group_households

    @property
    def n_groups(self) -> int:
        return len(self.lags)

    @property
    def population_size(self) -> int:
        return self.households * self.household_size

    @property
    def month_sample_size(self) -> int:
        """Individuals interviewed in any month."""
        return self.n_groups * self.group_households * self.household_size

    @property
    def base_weight(self) -> float:
        """Reciprocal of the per-month inclusion probability."""
        return self.population_size / self.month_sample_size

    def cluster_offset(self, ell: int, r: int) -> int:
        """Residue class (0-based) shared by all households of the cluster."""
        return (r - 1 + ell - 1) % self.draws

    def offsets(self, r: int) -> np.ndarray:
        """(M, 8) cluster offsets for every month and group of draw ``r``."""
        months = np.arange(1, self.months + 1)[:, None]
        return (r - 1 + months + np.asarray(self.lags) - 1) % self.draws


def cluster(design: RotationDesign, ell: int, r: int) -> np.ndarray:
    """Household ids of cluster ``ell`` under draw ``r`` (1-based, in the
    systematic j-order)."""
    if not 1 <= r <= design.draws:
        raise ValueError(f"draw index r={r} outside 1..{design.draws}")
    if not 1 <= ell <= design.months + design.lags[-1]:
        raise ValueError(
            f"cluster index ell={ell} outside 1..{design.months + design.lags[-1]}"
        )
    j = np.arange(design.group_households, dtype=np.int64)
    step = design.households // design.group_households
    return (r - 1 + ell - 1 + step * j) % design.households + 1


@dataclass(frozen=True)
class SampleAssignment:
    """All rotation groups of one draw: ``households[m-1, g-1]`` is the
    (j-ordered) household vector of group ``g`` in month ``m``."""

    design: RotationDesign
    r: int
    households: np.ndarray = field(repr=False)

    def group_households(self, m: int, g: int) -> np.ndarray:
        return self.households[m - 1, g - 1]

    def month_households(self, m: int) -> np.ndarray:
        """Distinct households interviewed in month ``m`` (sorted)."""
        return np.unique(self.households[m - 1])

    def group_individuals(self, m: int, g: int) -> np.ndarray:
        return household_individuals(self.group_households(m, g),
                                     self.design.household_size)

    def month_individuals(self, m: int) -> np.ndarray:
        return household_individuals(self.month_households(m),
                                     self.design.household_size)


def household_individuals(hh_ids: np.ndarray, household_size: int) -> np.ndarray:
    """Expand 1-based household ids to their members' 1-based ids."""
    base = (np.asarray(hh_ids, dtype=np.int64)[:, None] - 1) * household_size
    return (base + np.arange(1, household_size + 1)).ravel()


def assignment(design: RotationDesign, r: int) -> SampleAssignment:
    """Materialize the full rotation chart of draw ``r``."""
    if not 1 <= r <= design.draws:
        raise ValueError(f"draw index r={r} outside 1..{design.draws}")
    hh = np.empty((design.months, design.n_groups, design.group_households),
                  dtype=np.int64)
    for m, g in itertools.product(range(design.months), range(design.n_groups)):
        hh[m, g] = cluster(design, m + 1 + design.lags[g], r)
    hh.setflags(write=False)
    return SampleAssignment(design=design, r=r, households=hh)


def enumerate_assignments(design: RotationDesign) -> list[SampleAssignment]:
    """One assignment per draw, each carrying probability ``1/draws``."""
    return [assignment(design, r) for r in range(1, design.draws + 1)]


def cps_month_mapping(m: int) -> list[tuple[int, int]]:
    """The eight (sample designation, rotation group) pairs composing
    month ``m`` of the production rotation scheme.

    ``m`` is an abstract month counter within the scheme's numbering (the
    designation sequence starts at 85); only used for cross-validation
    against the published rotation chart, not by the simulation design.
    """
    if m < 1:
        raise ValueError("month index must be >= 1")
    out = []
    for jp in range(1, 9):
        cycle = (m + jp - 2) // 8
        j = m + jp - 1 - 8 * cycle
        ell = (85 if jp <= 4 else 86) + cycle
        out.append((ell, j))
    return out


def rotation_chart_rows(design: RotationDesign, r: int):
    """Yield audit rows (r, m, g, ell, household ids) for one draw."""
    for m in range(1, design.months + 1):
        for g in range(1, design.n_groups + 1):
            ell = m + design.lags[g - 1]
            yield r, m, g, ell, cluster(design, ell, r)

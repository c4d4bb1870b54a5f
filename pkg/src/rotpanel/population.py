"""Synthetic populations with exactly controlled monthly status counts.

A population holds a status time series for ``N = 100,000`` individuals
grouped into ``H = 20,000`` five-person households (household ``i`` is the
contiguous block of individuals ``5*(i-1)+1 .. 5*i``).  Each month every
individual is in exactly one of three states, in this fixed axis order:

    1. employed
    2. unemployed
    3. not in the labor force

The unemployment rate of a count vector ``x`` is ``x2 / (x1 + x2)``.

Monthly counts are pinned to integer targets derived from an input series of
(unemployment rate, labor-force participation rate) pairs; between months,
only the minimum number of individuals needed to hit the next month's counts
change status.  Three variants control *who* moves:

    1. the lowest-index holders of the shrinking status (fully persistent
       elsewhere),
    2. a random draw tilted toward low indices (weight ``exp(-5*k/N)``),
    3. a uniform random draw among holders of the shrinking status.

All randomness flows through one seed, so a (variant, seed, targets) triple
reproduces the population bit for bit.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "Population",
    "EMPLOYED",
    "UNEMPLOYED",
    "NOT_IN_LABOR_FORCE",
    "generate_population",
    "population_totals",
    "unemployment_rate",
    "target_counts",
    "one_hot",
    "default_rate_targets",
    "load_rate_targets",
    "save_population",
    "load_population",
    "export_population_csv",
    "import_population_csv",
]

# Internal 0-based status codes; the public status axis is 1-based and
# ordered employed / unemployed / not in the labor force.
EMPLOYED = 0
UNEMPLOYED = 1
NOT_IN_LABOR_FORCE = 2
N_STATUS = 3

_CACHE_MAGIC = b"ROTPOP01"


@dataclass(frozen=True)
class Population:
    """Immutable synthetic population.

    Attributes
    ----------
    statuses : (M, N) int8
        Status code of every individual for every month (0 employed,
        1 unemployed, 2 not in the labor force).
    aux : (N, 2) uint8
        Two time-constant binary calibration covariates per individual.
    rate_target, labor_force_target : (M,) float
        The input series the counts were derived from.
    variant : int
        Mover-selection rule used (1, 2, or 3).
    seed : int
        Seed the generation was keyed on.
    """

    statuses: np.ndarray
    aux: np.ndarray
    rate_target: np.ndarray
    labor_force_target: np.ndarray
    variant: int
    seed: int
    household_size: int = 5

    def __post_init__(self):
        if self.statuses.ndim != 2:
            raise ValueError("statuses must be (months, individuals)")
        if self.size % self.household_size != 0:
            raise ValueError("population size must be a whole number of households")
        self.statuses.setflags(write=False)
        self.aux.setflags(write=False)

    @property
    def months(self) -> int:
        return self.statuses.shape[0]

    @property
    def size(self) -> int:
        return self.statuses.shape[1]

    @property
    def n_households(self) -> int:
        return self.size // self.household_size

    @property
    def aux_totals(self) -> np.ndarray:
        """Population totals of the two calibration covariates."""
        return self.aux.sum(axis=0, dtype=np.int64)

    def household_members(self, i: int) -> np.ndarray:
        """1-based individual ids of household ``i`` (1-based)."""
        lo = self.household_size * (i - 1) + 1
        return np.arange(lo, lo + self.household_size, dtype=np.int64)


def one_hot(statuses: np.ndarray) -> np.ndarray:
    """Expand an int status-code array to a trailing one-hot axis of size 3."""
    statuses = np.asarray(statuses)
    out = np.zeros(statuses.shape + (N_STATUS,), dtype=np.uint8)
    np.put_along_axis(out, statuses[..., None].astype(np.int64), 1, axis=-1)
    return out


def target_counts(rate_target, labor_force_target, size: int) -> np.ndarray:
    """Integer (M, 3) monthly status counts implied by the rate series.

    The labor force is ``round(N * lf_rate)``, the unemployed count is
    ``round(LF * u_rate)``, employed is the remainder of the labor force and
    everyone else is out of the labor force.
    """
    rate = np.asarray(rate_target, dtype=float)
    lf_rate = np.asarray(labor_force_target, dtype=float)
    if rate.shape != lf_rate.shape or rate.ndim != 1:
        raise ValueError("rate and labor-force series must be 1-D and equally long")
    for m in range(rate.size):
        if not (0.0 <= rate[m] <= 1.0 and 0.0 < lf_rate[m] <= 1.0):
            raise ValueError(
                f"month {m + 1}: infeasible targets "
                f"(rate={rate[m]}, labor_force={lf_rate[m]})"
            )
    lf = np.rint(size * lf_rate).astype(np.int64)
    unemployed = np.rint(lf * rate).astype(np.int64)
    employed = lf - unemployed
    counts = np.stack([employed, unemployed, size - lf], axis=1)
    bad = np.nonzero(counts.min(axis=1) < 0)[0]
    if bad.size:
        raise ValueError(f"month {bad[0] + 1}: infeasible targets (negative count)")
    return counts


def _minimal_flows(current: np.ndarray, target: np.ndarray) -> list[tuple[int, int, int]]:
    """Minimal (source, destination, count) moves turning ``current`` into
    ``target``; total movement equals half the L1 distance."""
    surplus = np.maximum(current - target, 0)
    deficit = np.maximum(target - current, 0)
    flows = []
    for a in range(N_STATUS):
        for b in range(N_STATUS):
            if surplus[a] == 0:
                break
            take = min(surplus[a], deficit[b])
            if take > 0:
                flows.append((a, b, int(take)))
                surplus[a] -= take
                deficit[b] -= take
    return flows


def _pick_movers(holders: np.ndarray, count: int, variant: int, size: int,
                 rng: np.random.Generator) -> np.ndarray:
    if count > holders.size:
        raise ValueError("required movers exceed available holders")
    if variant == 1:
        return holders[:count]
    if variant == 2:
        weights = np.exp(-5.0 * (holders + 1) / size)
        weights = weights / weights.sum()
        return rng.choice(holders, size=count, replace=False, p=weights)
    return rng.choice(holders, size=count, replace=False)


def generate_population(variant: int, rate_target, labor_force_target,
                        seed: int, size: int = 100_000,
                        household_size: int = 5) -> Population:
    """Generate a population whose monthly counts hit the targets exactly.

    Parameters
    ----------
    variant : {1, 2, 3}
        Mover-selection rule, see the module docstring.
    rate_target, labor_force_target : (M,) array-like
        Unemployment-rate and labor-force participation series in [0, 1].
    seed : int
        Seeds both the month-1 assignment and the mover draws.
    """
    if variant not in (1, 2, 3):
        raise ValueError(f"variant must be 1, 2 or 3, got {variant}")
    counts = target_counts(rate_target, labor_force_target, size)
    months = counts.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(variant)]))

    statuses = np.empty((months, size), dtype=np.int8)
    first = np.repeat(np.arange(N_STATUS, dtype=np.int8), counts[0])
    statuses[0] = rng.permutation(first)

    for m in range(1, months):
        cur = statuses[m - 1].copy()
        for src, dst, cnt in _minimal_flows(counts[m - 1].copy(), counts[m]):
            holders = np.nonzero(cur == src)[0]
            try:
                movers = _pick_movers(holders, cnt, variant, size, rng)
            except ValueError as exc:
                raise ValueError(f"month {m + 1}: {exc}") from None
            cur[movers] = dst
        statuses[m] = cur

    aux = np.stack(
        [rng.random(size) < 0.5, rng.random(size) < 0.25], axis=1
    ).astype(np.uint8)
    return Population(
        statuses=statuses,
        aux=aux,
        rate_target=np.asarray(rate_target, dtype=float).copy(),
        labor_force_target=np.asarray(labor_force_target, dtype=float).copy(),
        variant=variant,
        seed=int(seed),
        household_size=household_size,
    )


def population_totals(pop: Population) -> np.ndarray:
    """Exact (M, 3) counts of individuals by month and status."""
    m, n = pop.statuses.shape
    offsets = np.arange(m, dtype=np.int64)[:, None] * N_STATUS
    flat = (pop.statuses.astype(np.int64) + offsets).ravel()
    return np.bincount(flat, minlength=m * N_STATUS).reshape(m, N_STATUS)


def unemployment_rate(totals) -> np.ndarray:
    """Per-month rate ``x2 / (x1 + x2)`` of an (M, 3) totals array."""
    totals = np.asarray(totals, dtype=float)
    labor_force = totals[..., 0] + totals[..., 1]
    bad = np.nonzero(labor_force <= 0)[0]
    if bad.size:
        raise ValueError(f"month {bad[0] + 1}: labor force is zero")
    return totals[..., 1] / labor_force


# ---------------------------------------------------------------------------
# Target series and population I/O
# ---------------------------------------------------------------------------

def load_rate_targets(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a target CSV with columns month, unemployment_rate,
    labor_force_rate (month must run 1..M in order)."""
    rates, lfs = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"month", "unemployment_rate", "labor_force_rate"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"target file {path} must have columns {sorted(required)}")
        for i, row in enumerate(reader):
            if int(row["month"]) != i + 1:
                raise ValueError(f"target file {path}: month column must run 1..M")
            rates.append(float(row["unemployment_rate"]))
            lfs.append(float(row["labor_force_rate"]))
    return np.asarray(rates), np.asarray(lfs)


def default_rate_targets(months: int = 85) -> tuple[np.ndarray, np.ndarray]:
    """The packaged 85-month synthetic target series (optionally truncated)."""
    ref = resources.files("rotpanel.data").joinpath("default_targets.csv")
    with resources.as_file(ref) as path:
        rate, lf = load_rate_targets(path)
    if months > rate.size:
        raise ValueError(f"default target series has {rate.size} months, need {months}")
    return rate[:months], lf[:months]


def save_population(pop: Population, path) -> None:
    """Write the compact binary cache.

    Layout: 8-byte magic ``ROTPOP01``; little-endian u32 fields months, size,
    household_size, variant; u64 seed; months*size status bytes in row-major
    (month-major) order; size aux bytes (bit 0 = covariate 1, bit 1 =
    covariate 2); months f64 unemployment-rate targets; months f64
    labor-force targets.
    """
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<IIIIQ", pop.months, pop.size,
                             pop.household_size, pop.variant, pop.seed))
        fh.write(pop.statuses.astype(np.uint8).tobytes())
        fh.write((pop.aux[:, 0] | (pop.aux[:, 1] << 1)).astype(np.uint8).tobytes())
        fh.write(pop.rate_target.astype("<f8").tobytes())
        fh.write(pop.labor_force_target.astype("<f8").tobytes())


def load_population(path) -> Population:
    """Read a cache written by :func:`save_population`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CACHE_MAGIC:
            raise ValueError(f"{path} is not a population cache")
        months, size, household_size, variant, seed = struct.unpack(
            "<IIIIQ", fh.read(24)
        )
        statuses = np.frombuffer(fh.read(months * size), dtype=np.uint8)
        statuses = statuses.reshape(months, size).astype(np.int8)
        packed = np.frombuffer(fh.read(size), dtype=np.uint8)
        aux = np.stack([packed & 1, (packed >> 1) & 1], axis=1).astype(np.uint8)
        rate = np.frombuffer(fh.read(8 * months), dtype="<f8").copy()
        lf = np.frombuffer(fh.read(8 * months), dtype="<f8").copy()
    return Population(statuses=statuses, aux=aux, rate_target=rate,
                      labor_force_target=lf, variant=variant, seed=seed,
                      household_size=household_size)


def export_population_csv(pop: Population, path) -> None:
    """Write (month, individual, status) rows, all 1-based."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "individual", "status"])
        for m in range(pop.months):
            row = pop.statuses[m]
            for k in range(pop.size):
                writer.writerow([m + 1, k + 1, int(row[k]) + 1])


def import_population_csv(path, household_size: int = 5, seed: int = 0) -> Population:
    """Read a CSV written by :func:`export_population_csv`.

    The CSV carries statuses only; covariates and target series are
    reconstructed (covariates reseeded from ``seed``, targets recomputed
    from the realized counts).
    """
    months = 0
    size = 0
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            m, k, s = int(row["month"]), int(row["individual"]), int(row["status"])
            months = max(months, m)
            size = max(size, k)
            entries.append((m - 1, k - 1, s - 1))
    statuses = np.zeros((months, size), dtype=np.int8)
    for m, k, s in entries:
        statuses[m, k] = s
    rng = np.random.default_rng(seed)
    aux = np.stack([rng.random(size) < 0.5, rng.random(size) < 0.25], axis=1)
    totals = np.zeros((months, N_STATUS), dtype=np.int64)
    for m in range(months):
        totals[m] = np.bincount(statuses[m], minlength=N_STATUS)
    rate = unemployment_rate(totals)
    lf = (totals[:, 0] + totals[:, 1]) / size
    return Population(statuses=statuses, aux=aux.astype(np.uint8),
                      rate_target=rate, labor_force_target=lf,
                      variant=0, seed=seed, household_size=household_size)

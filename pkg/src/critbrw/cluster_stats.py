"""Clustering of the critical field: surviving origins, gaps, empty cells, profiles.

At time T each initial site keeps descendants independently with probability
1 / (1 + beta T), so the surviving origins form a Bernoulli field.  In d = 1
the gaps between them are geometric; in d = 2 the window is cut into cells of
side sqrt(t beta ln t) and the number of empty cells is compared with

    mu_t = (4 L^2 / (t a^2)) exp(-a^2 / beta),   a^2 = beta ln t.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CellLargerThanWindow, TooFewSurvivors
from .goodness import geometric_chisquare
from .lattice_kernel import heat_kernel
from .mc_simulator import FieldSnapshot, window_sites
from .rng import numpy_generator


@dataclass(frozen=True)
class FromSimulation:
    snapshot: FieldSnapshot


@dataclass(frozen=True)
class BernoulliExact:
    dim: int
    window_radius: int
    beta: float
    t: float
    seed: int = 0
    stream_id: int = 0

    @property
    def p(self):
        return 1.0 / (1.0 + self.beta * self.t)


@dataclass
class OriginField:
    dim: int
    window_radius: int
    survivors: np.ndarray  # (k, dim), lexicographic order
    source: object

    def __len__(self):
        return len(self.survivors)

    @property
    def n_sites(self):
        return (2 * self.window_radius + 1) ** self.dim


def surviving_origins(source):
    """Origins whose subpopulation is alive at the horizon."""
    if isinstance(source, FieldSnapshot):
        source = FromSimulation(source)
    if isinstance(source, FromSimulation):
        snap = source.snapshot
        snap.raise_if_capped()
        L = int(snap.meta.get("window", np.abs(snap.origins).max()))
        surv = snap.origins[snap.origin_counts > 0]
        order = np.lexsort(surv.T[::-1]) if len(surv) else np.arange(0)
        return OriginField(snap.dim, L, surv[order], source)
    if isinstance(source, BernoulliExact):
        L, d = source.window_radius, source.dim
        side = 2 * L + 1
        rng = numpy_generator(source.seed, source.stream_id)
        hit = np.flatnonzero(rng.random(side ** d) < source.p)
        coords = np.stack(np.unravel_index(hit, (side,) * d), axis=1).astype(np.int64) - L
        return OriginField(d, L, coords, source)
    raise TypeError(f"unsupported source {source!r}")


# -- d = 1 gaps -----------------------------------------------------------------------

@dataclass(frozen=True)
class GapStatistics:
    gaps: np.ndarray
    mean: float
    stderr: float
    p_value: float
    chi_square: float
    reference_p: float

    def histogram_rows(self):
        values, counts = np.unique(self.gaps, return_counts=True)
        return [(int(v), int(c)) for v, c in zip(values, counts)]


def gap_statistics_1d(field, p=None):
    """Consecutive distances between survivors, tested against Geometric(p).

    ``p`` defaults to the survival probability of the Bernoulli source.
    """
    if field.dim != 1:
        raise ValueError("gap statistics need a one-dimensional field")
    if len(field) < 2:
        raise TooFewSurvivors(f"{len(field)} survivors; need at least 2")
    if p is None:
        p = _survival_p(field)
    gaps = np.diff(field.survivors[:, 0])
    gof = geometric_chisquare(gaps, p)
    sd = gaps.std(ddof=1) if len(gaps) > 1 else float("nan")
    return GapStatistics(gaps, float(gaps.mean()), float(sd / math.sqrt(len(gaps))),
                         gof.p_value, gof.statistic, p)


def _survival_p(field):
    src = field.source
    if isinstance(src, BernoulliExact):
        return src.p
    meta = src.snapshot.meta
    return 1.0 / (1.0 + meta["beta"] * src.snapshot.time)


# -- d = 2 empty cells ----------------------------------------------------------------

@dataclass(frozen=True)
class LogRule:
    """Side round(sqrt(t beta ln t))."""


@dataclass(frozen=True)
class Explicit:
    side: int


@dataclass
class CellCensus:
    cell_side: int
    total_cells: int
    empty_cells: int
    predicted_mean: float
    exact_mean: float
    asymptotic_mean: float
    occupied: np.ndarray  # (cells_per_axis, cells_per_axis) bool

    def rows(self):
        n = self.occupied.shape[0]
        for i in range(n):
            for j in range(n):
                yield (i, j, int(self.occupied[i, j]))


def log_cell_side(t, beta):
    if t < 3:
        raise ValueError("the cell rule needs t >= 3")
    return max(1, round(math.sqrt(t * beta * math.log(t))))


def mu_formula(L, t, beta):
    """(4 L^2 / (t a^2)) exp(-a^2 / beta) with a^2 = beta ln t."""
    a2 = beta * math.log(t)
    return 4.0 * L * L / (t * a2) * math.exp(-a2 / beta)


def empty_cell_census_2d(field, t, beta, cell_rule=LogRule()):
    """Count empty cells of a square partition of the window.

    Cells start at the lower-left corner of the window; partial cells at the
    upper edges are dropped.  Three reference means are reported:

    * ``predicted_mean``: mu_t with t a^2 replaced by side^2 for the integer
      side actually used, (4 L^2 / side^2) exp(-side^2 / (beta t));
    * ``exact_mean``: N_1 (1 - 1/(beta t + 1))^(side^2), exact for a
      Bernoulli field and the cells actually counted;
    * ``asymptotic_mean``: mu_t with a^2 = beta ln t, no rounding.
    """
    if field.dim != 2:
        raise ValueError("cell census needs a two-dimensional field")
    side = log_cell_side(t, beta) if isinstance(cell_rule, LogRule) else int(cell_rule.side)
    if side < 1:
        raise ValueError("cell side must be >= 1")
    L = field.window_radius
    width = 2 * L + 1
    per_axis = width // side
    if per_axis < 1:
        raise CellLargerThanWindow(f"cell side {side} exceeds window width {width}")
    occupied = np.zeros((per_axis, per_axis), dtype=bool)
    if len(field):
        idx = (field.survivors + L) // side
        keep = np.all(idx < per_axis, axis=1)
        occupied[idx[keep, 0], idx[keep, 1]] = True
    total = per_axis * per_axis
    q = beta * t / (beta * t + 1.0)
    exact = total * q ** (side * side)
    predicted = 4.0 * L * L / side ** 2 * math.exp(-side * side / (beta * t))
    return CellCensus(side, total, int(total - occupied.sum()), predicted, exact,
                      mu_formula(L, t, beta) if t > 1 else float("nan"), occupied)


# -- occupation profile ---------------------------------------------------------------

@dataclass
class ClusterProfile:
    offsets: np.ndarray  # (cells, dim)
    observed: np.ndarray
    stderr: np.ndarray
    predicted: np.ndarray
    survivors: int
    total_mean: float
    total_stderr: float

    def half_mass_radius(self):
        """Smallest Euclidean radius holding half of the observed mass."""
        r = np.sqrt((self.offsets.astype(float) ** 2).sum(axis=1))
        order = np.argsort(r, kind="stable")
        cum = np.cumsum(self.observed[order])
        i = int(np.searchsorted(cum, 0.5 * cum[-1]))
        return float(r[order][i])

    def rows(self):
        for off, o, p in zip(self.offsets, self.observed, self.predicted):
            yield (*(int(c) for c in off), float(o), float(p))


def cluster_profile(snapshots, jd, bp, t, radius=None):
    """Mean of n(T, x_i, x_i + r) over surviving origins x_i.

    ``predicted`` is (beta T + 1) p(T, r).  Accepts one snapshot or several.
    """
    if isinstance(snapshots, FieldSnapshot):
        snapshots = [snapshots]
    d = jd.dim
    if radius is None:
        radius = int(math.ceil(6.0 * math.sqrt(jd.kappa * t * jd.covariance.max()))) + jd.support_radius
    side = 2 * radius + 1
    cells = side ** d
    sums = np.zeros(cells)
    sq = np.zeros(cells)
    totals = []
    n_surv = 0
    for snap in snapshots:
        snap.raise_if_capped()
        alive = snap.origin_counts > 0
        n_surv += int(alive.sum())
        totals.append(snap.origin_counts[alive])
        if len(snap.positions) == 0:
            continue
        rel = snap.positions - snap.origins[snap.labels] + radius
        inside = np.all((rel >= 0) & (rel < side), axis=1)
        flat = np.ravel_multi_index(tuple(rel[inside].T), (side,) * d)
        # counts per (origin, cell) pair; only occupied pairs are materialised
        keys, n = np.unique(snap.labels[inside] * cells + flat, return_counts=True)
        cell = keys % cells
        sums += np.bincount(cell, weights=n, minlength=cells)
        sq += np.bincount(cell, weights=n.astype(float) ** 2, minlength=cells)
    if n_surv < 1:
        raise TooFewSurvivors("no surviving origin")
    mean = sums / n_surv
    if n_surv > 1:
        var = np.maximum(sq / n_surv - mean ** 2, 0.0) * n_surv / (n_surv - 1)
        se = np.sqrt(var / n_surv)
    else:
        se = np.full(cells, np.nan)
    totals = np.concatenate(totals).astype(float)
    offsets = window_sites(radius, d)
    if t == 0:
        predicted = np.all(offsets == 0, axis=1).astype(float)
    else:
        kernel = heat_kernel(jd, t, radius).values.reshape(-1)
        predicted = (bp.beta * t + 1.0) * kernel
    tse = totals.std(ddof=1) / math.sqrt(len(totals)) if len(totals) > 1 else float("nan")
    return ClusterProfile(offsets, mean, se, predicted, n_surv, float(totals.mean()), float(tse))

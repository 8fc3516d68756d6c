"""Event-driven Monte Carlo of the branching random walk.

Each pending particle is a pair (position, time of arrival).  It waits an
Exponential(kappa + 2 beta) time; if that overshoots the horizon the particle
is recorded where it stands, otherwise one event is drawn: jump with
probability kappa / (kappa + 2 beta) (offset from the jump law), split or die
with probability beta / (kappa + 2 beta) each.  Pending pairs are processed
depth first.

Randomness comes from counter-based streams (see :mod:`critbrw.rng`), one per
task, so output is a function of (config, stream ids) only.  The event loop
runs in the compiled core when it is importable and in a pure-Python mirror
otherwise; ``CRITBRW_PURE_PYTHON=1`` forces the mirror.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import _simcore_py
from .errors import EmptyConditioningSet, ParticleCapExceeded
from .gw_analytics import BranchingParams
from .lattice_kernel import JumpDistribution
from .rng import derive_stream_id

try:
    if os.environ.get("CRITBRW_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced")
    from . import _simcore as _core
except ImportError:  # pragma: no cover - exercised when the extension is absent
    _core = _simcore_py

BACKEND = _core.BACKEND
DEFAULT_CAP = 10**7
CHUNK = 4096


def get_backend(name=None):
    """Return the event-loop module: ``"cython"``, ``"python"`` or the default."""
    if name is None:
        return _core
    if name == "python":
        return _simcore_py
    if name == "cython":
        from . import _simcore
        return _simcore
    raise ValueError(f"unknown backend {name!r}")


def default_threads():
    return max(1, int(os.environ.get("CRITBRW_THREADS", "1")))


@dataclass(frozen=True)
class SimConfig:
    jd: JumpDistribution
    bp: BranchingParams
    horizon: float
    initial_window_radius: int = 0
    particle_cap: int = DEFAULT_CAP
    master_seed: int = 0

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.particle_cap < 1:
            raise ValueError("particle_cap must be >= 1")
        if not self.jd.kappa + 2 * self.bp.beta > 0:
            raise ValueError("total event rate must be positive")

    @property
    def jump_cdf(self):
        return np.cumsum(self.jd.weights)


@dataclass(frozen=True)
class ParticleState:
    position: tuple
    clock: float


@dataclass
class TaskResult:
    counts: np.ndarray
    capped: np.ndarray
    events: np.ndarray
    tally: np.ndarray | None
    positions: np.ndarray
    owners: np.ndarray


def run_tasks(cfg, origins, stream_ids, tally_radius=-1, tally_center=None,
              relative=True, want_positions=False, threads=None, backend=None):
    """Simulate one subpopulation per (origin, stream id) row.

    Work is cut into fixed-size chunks that are merged in chunk order, so the
    result does not depend on ``threads``.
    """
    core = get_backend(backend)
    origins = np.ascontiguousarray(origins, dtype=np.int64).reshape(-1, cfg.jd.dim)
    stream_ids = np.ascontiguousarray(stream_ids, dtype=np.uint64)
    n = len(origins)
    threads = default_threads() if threads is None else max(1, int(threads))
    cum = cfg.jump_cdf

    def work(a):
        return core.simulate_chunk(origins[a:a + CHUNK], stream_ids[a:a + CHUNK],
                                   int(cfg.master_seed), cfg.jd.offsets, cum,
                                   float(cfg.jd.kappa), float(cfg.bp.beta),
                                   float(cfg.horizon), int(cfg.particle_cap),
                                   tally_center, tally_radius, relative, want_positions)

    starts = list(range(0, n, CHUNK)) or [0]
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(a) for a in starts]
    owners = [p[5] + a for p, a in zip(parts, starts)]
    return TaskResult(
        counts=np.concatenate([p[0] for p in parts]),
        capped=np.concatenate([p[1] for p in parts]).astype(bool),
        events=np.concatenate([p[2] for p in parts]),
        tally=None if tally_radius < 0 else np.concatenate([p[3] for p in parts]),
        positions=np.concatenate([p[4] for p in parts]).reshape(-1, cfg.jd.dim),
        owners=np.concatenate(owners),
    )


def _origin(cfg, origin):
    if origin is None:
        return (0,) * cfg.jd.dim
    return (int(origin),) if np.isscalar(origin) else tuple(int(c) for c in origin)


def simulate_subpopulation(cfg, origin, stream_id, backend=None):
    """n_x(T) and the survivor positions of one subpopulation.

    Raises ParticleCapExceeded when the tree needs more than
    ``cfg.particle_cap`` events.
    """
    o = _origin(cfg, origin)
    res = run_tasks(cfg, [o], [stream_id], want_positions=True, threads=1, backend=backend)
    if res.capped[0]:
        raise ParticleCapExceeded(f"stream {stream_id}: more than {cfg.particle_cap} events",
                                  labels=[o])
    return int(res.counts[0]), res.positions


@dataclass
class ReplicaBatch:
    """Independent subpopulations from one origin, streams first..first+n-1."""

    cfg: SimConfig
    origin: tuple
    first_stream: int
    counts: np.ndarray
    capped: np.ndarray
    tally: np.ndarray | None = None
    tally_radius: int = -1
    events: np.ndarray | None = None

    def __len__(self):
        return len(self.counts)

    def occupancy(self, offset):
        """n(T, x, x + offset) for every replica."""
        offset = (int(offset),) if np.isscalar(offset) else tuple(int(c) for c in offset)
        R = self.tally_radius
        if self.tally is None or any(abs(c) > R for c in offset):
            raise ValueError(f"offset {offset} not tallied (tally radius {R})")
        side = 2 * R + 1
        flat = 0
        for c in offset:
            flat = flat * side + (c + R)
        return self.tally[:, flat]


def simulate_replicas(cfg, n_replicas, origin=None, first_stream=0, tally_radius=-1,
                      threads=None, backend=None):
    o = _origin(cfg, origin)
    sids = np.arange(first_stream, first_stream + n_replicas, dtype=np.uint64)
    origins = np.broadcast_to(np.array(o, dtype=np.int64), (n_replicas, cfg.jd.dim))
    res = run_tasks(cfg, origins, sids, tally_radius=tally_radius, threads=threads,
                    backend=backend)
    return ReplicaBatch(cfg, o, first_stream, res.counts, res.capped, res.tally,
                        tally_radius, res.events)


# -- full field ----------------------------------------------------------------------

def window_sites(radius, dim):
    return np.array(list(product(range(-radius, radius + 1), repeat=dim)),
                    dtype=np.int64).reshape(-1, dim)


@dataclass
class FieldSnapshot:
    """Particles at time T with the window site they descend from.

    ``labels[i]`` indexes ``origins`` for particle ``positions[i]``.
    """

    time: float
    origins: np.ndarray
    origin_counts: np.ndarray
    capped: np.ndarray
    positions: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.origins.shape[1]

    @property
    def capped_labels(self):
        return [tuple(int(c) for c in o) for o in self.origins[self.capped]]

    def raise_if_capped(self):
        if self.capped.any():
            raise ParticleCapExceeded(f"{int(self.capped.sum())} origins exceeded the event cap",
                                      labels=self.capped_labels)

    def site_counts(self):
        """(sites, counts) with n(T, y) for every occupied y."""
        if len(self.positions) == 0:
            return np.empty((0, self.dim), dtype=np.int64), np.empty(0, dtype=np.int64)
        sites, counts = np.unique(self.positions, axis=0, return_counts=True)
        return sites, counts

    def count_at(self, y):
        y = np.array((y,) if np.isscalar(y) else y, dtype=np.int64)
        return int(np.all(self.positions == y, axis=1).sum())

    def origin_site_counts(self):
        """(origin_index, position, count) triples: n(T, x, y) > 0."""
        if len(self.positions) == 0:
            return np.empty((0, 1 + self.dim), dtype=np.int64), np.empty(0, dtype=np.int64)
        keys = np.column_stack([self.labels, self.positions])
        return np.unique(keys, axis=0, return_counts=True)

    def csv_rows(self):
        keys, counts = self.origin_site_counts()
        for key, c in zip(keys, counts):
            origin = self.origins[key[0]]
            yield (*(int(v) for v in origin), *(int(v) for v in key[1:]), int(c))

    def csv_header(self):
        d = self.dim
        return ([f"origin_x{i + 1}" for i in range(d)]
                + [f"position{i + 1}" for i in range(d)] + ["count"])

    def to_json(self):
        return json.dumps({
            "time": self.time,
            "dim": self.dim,
            "meta": self.meta,
            "capped_origins": self.capped_labels,
            "particles": [
                {"origin": [int(v) for v in self.origins[lab]], "position": [int(v) for v in pos]}
                for lab, pos in zip(self.labels, self.positions)
            ],
        }, sort_keys=True)


def field_stream_ids(stream_id, n_origins):
    return np.array([derive_stream_id(stream_id, i, n_origins) for i in range(n_origins)],
                    dtype=np.uint64)


def simulate_field(cfg, stream_id, threads=None, backend=None):
    """One particle per site of [-L, L]^d at time 0, evolved to the horizon.

    Offspring may leave the window; positions are unbounded.  Origins whose
    tree hits the event cap are flagged in ``capped``, their particles dropped.
    """
    L = cfg.initial_window_radius
    if L < 1:
        raise ValueError("initial_window_radius must be >= 1")
    origins = window_sites(L, cfg.jd.dim)
    sids = field_stream_ids(stream_id, len(origins))
    res = run_tasks(cfg, origins, sids, want_positions=True, threads=threads, backend=backend)
    return FieldSnapshot(float(cfg.horizon), origins, res.counts, res.capped,
                         res.positions, res.owners,
                         {"stream_id": int(stream_id), "window": int(L), "beta": float(cfg.bp.beta),
                          "seed": int(cfg.master_seed)})


def field_occupancy(cfg, n_replicas, radius, first_stream=0, threads=None,
                    block=256, backend=None):
    """n(T, y) for |y|_inf <= radius over field replicas first..first+n-1.

    Same streams as :func:`simulate_field`, without storing particles.
    Returns ``(occupancy, capped_replicas)`` with occupancy shaped
    (n_replicas, (2 radius + 1)^d).
    """
    L = cfg.initial_window_radius
    origins = window_sites(L, cfg.jd.dim)
    n_o = len(origins)
    cells = (2 * radius + 1) ** cfg.jd.dim
    occ = np.zeros((n_replicas, cells), dtype=np.int64)
    capped = np.zeros(n_replicas, dtype=bool)
    centre = np.zeros(cfg.jd.dim, dtype=np.int64)
    for a in range(0, n_replicas, block):
        reps = np.arange(first_stream + a, first_stream + min(a + block, n_replicas))
        sids = (reps[:, None].astype(np.uint64) * np.uint64(n_o)
                + np.arange(n_o, dtype=np.uint64)[None, :]).reshape(-1)
        res = run_tasks(cfg, np.tile(origins, (len(reps), 1)), sids, tally_radius=radius,
                        tally_center=centre, relative=False, threads=threads, backend=backend)
        occ[a:a + len(reps)] = res.tally.reshape(len(reps), n_o, cells).sum(axis=1)
        capped[a:a + len(reps)] = res.capped.reshape(len(reps), n_o).any(axis=1)
    return occ, capped


# -- estimators ----------------------------------------------------------------------

@dataclass(frozen=True)
class SurvivalFraction:
    pass


@dataclass(frozen=True)
class ConditionalMeanSize:
    pass


@dataclass(frozen=True)
class ConditionalTail:
    """P{n_x(T) / (beta T + 1) > s | n_x(T) > 0}."""
    s: float


@dataclass(frozen=True)
class OccupancyAt:
    """E n(T, x, x + y) over all replicas (y relative to the origin)."""
    y: tuple


@dataclass(frozen=True)
class ConditionalOccupancy:
    """E[n(T, x, x + y) | n_x(T) = level]."""
    y: tuple
    level: int


@dataclass(frozen=True)
class SurvivalOccupancy:
    """E[n(T, x, x + y) | n_x(T) > 0]."""
    y: tuple


@dataclass(frozen=True)
class ConditionalFactorialMoment:
    """E[n(n - 1) | n_x(T) = level] with n = n(T, x, x + y)."""
    y: tuple
    level: int


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    count: int
    excluded: int = 0


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise EmptyConditioningSet("no replica satisfied the condition")
    if n < 2:
        return Estimate(float(values.mean()), float("nan"), n)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(n)), n)


def _snapshot_arrays(snapshots, offset):
    counts, occ, capped = [], [], []
    for snap in snapshots:
        counts.append(snap.origin_counts)
        capped.append(snap.capped)
        if offset is not None:
            target = snap.origins[snap.labels] + np.asarray(offset, dtype=np.int64)
            hit = np.all(snap.positions == target, axis=1)
            occ.append(np.bincount(snap.labels[hit], minlength=len(snap.origins)))
    return (np.concatenate(counts), np.concatenate(capped),
            np.concatenate(occ) if offset is not None else None)


def estimate_statistics(source, query):
    """Sample mean, standard error and retained count for ``query``.

    ``source`` is a ReplicaBatch or a sequence of FieldSnapshots (every origin
    of every snapshot counts as one subpopulation replica).  Capped replicas
    are excluded and reported in ``Estimate.excluded``.
    """
    offset = getattr(query, "y", None)
    if offset is not None:
        offset = (int(offset),) if np.isscalar(offset) else tuple(int(c) for c in offset)
    if isinstance(source, ReplicaBatch):
        counts, capped = source.counts, source.capped
        occ = source.occupancy(offset) if offset is not None else None
        cfg = source.cfg
    else:
        snaps = list(source)
        counts, capped, occ = _snapshot_arrays(snaps, offset)
        cfg = None
    if len(counts) < 2:
        raise ValueError("need at least 2 replicas")
    keep = ~capped
    excluded = int(capped.sum())
    counts = counts[keep]
    if occ is not None:
        occ = occ[keep]

    if isinstance(query, SurvivalFraction):
        vals = counts > 0
    elif isinstance(query, ConditionalMeanSize):
        vals = counts[counts > 0]
    elif isinstance(query, ConditionalTail):
        if cfg is None:
            horizon = snaps[0].time
            beta = snaps[0].meta.get("beta")
        else:
            horizon, beta = cfg.horizon, cfg.bp.beta
        vals = counts[counts > 0] / (beta * horizon + 1.0) > query.s
    elif isinstance(query, OccupancyAt):
        vals = occ
    elif isinstance(query, ConditionalOccupancy):
        vals = occ[counts == query.level]
    elif isinstance(query, SurvivalOccupancy):
        vals = occ[counts > 0]
    elif isinstance(query, ConditionalFactorialMoment):
        o = occ[counts == query.level].astype(float)
        vals = o * (o - 1.0)
    else:
        raise TypeError(f"unknown query {query!r}")
    est = _mean_se(vals)
    return Estimate(est.value, est.stderr, est.count, excluded)

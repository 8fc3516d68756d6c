# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop for branching random walk subpopulations.

Mirror of ``_simcore_py.simulate_chunk``; both must produce identical output
for identical input, draw for draw.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log
from libc.stdint cimport int64_t, uint64_t, int8_t
from libc.stdlib cimport free, malloc, realloc

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t STREAM_MULT = 0xD1B54A32D192ED03ULL
cdef double TO_UNIT = 1.0 / 9007199254740992.0

BACKEND = "cython"


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t* counter) noexcept nogil:
    counter[0] += 1
    return <double>(_mix64(key + counter[0] * GOLDEN) >> 11) * TO_UNIT


cdef struct Buffers:
    int64_t* stack_pos
    double* stack_time
    int64_t stack_cap
    int64_t* out_pos
    int64_t* out_owner
    int64_t out_len
    int64_t out_cap


cdef int _grow_stack(Buffers* b, int d) noexcept nogil:
    cdef int64_t new_cap = b.stack_cap * 2
    cdef int64_t* p = <int64_t*> realloc(b.stack_pos, new_cap * d * sizeof(int64_t))
    if p == NULL:
        return -1
    b.stack_pos = p
    cdef double* q = <double*> realloc(b.stack_time, new_cap * sizeof(double))
    if q == NULL:
        return -1
    b.stack_time = q
    b.stack_cap = new_cap
    return 0


cdef int _grow_out(Buffers* b, int d) noexcept nogil:
    cdef int64_t new_cap = b.out_cap * 2
    cdef int64_t* p = <int64_t*> realloc(b.out_pos, new_cap * d * sizeof(int64_t))
    if p == NULL:
        return -1
    b.out_pos = p
    cdef int64_t* q = <int64_t*> realloc(b.out_owner, new_cap * sizeof(int64_t))
    if q == NULL:
        return -1
    b.out_owner = q
    b.out_cap = new_cap
    return 0


cdef int _run_task(
    int64_t task,
    const int64_t[:, ::1] origins,
    uint64_t key,
    const int64_t[:, ::1] offsets,
    const double[::1] cum,
    double kappa, double beta, double horizon, int64_t cap,
    const int64_t[::1] tally_center, int64_t radius, bint relative,
    bint want_positions,
    int64_t[::1] counts, int8_t[::1] status, int64_t[::1] events,
    int64_t[:, ::1] tally,
    Buffers* b,
    int d, int K,
) noexcept nogil:
    cdef uint64_t counter = 0
    cdef double rate = kappa + 2.0 * beta
    cdef double split_edge = kappa + beta
    cdef int64_t top = 0, nev = 0, found = 0
    cdef int64_t out_start = b.out_len
    cdef int64_t x[16]
    cdef double t, u, v, w
    cdef int i, j
    cdef int64_t side = 2 * radius + 1, flat, rel
    cdef bint inside

    for i in range(d):
        b.stack_pos[i] = origins[task, i]
    b.stack_time[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        for i in range(d):
            x[i] = b.stack_pos[top * d + i]
        t = b.stack_time[top]
        while True:
            u = _uniform(key, &counter)
            t = t - log(1.0 - u) / rate
            if t > horizon:
                found += 1
                if radius >= 0:
                    flat = 0
                    inside = True
                    for i in range(d):
                        rel = x[i] - tally_center[i]
                        if relative:
                            rel = rel - origins[task, i]
                        if rel < -radius or rel > radius:
                            inside = False
                            break
                        flat = flat * side + (rel + radius)
                    if inside:
                        tally[task, flat] += 1
                if want_positions:
                    if b.out_len == b.out_cap:
                        if _grow_out(b, d) != 0:
                            return -1
                    for i in range(d):
                        b.out_pos[b.out_len * d + i] = x[i]
                    b.out_owner[b.out_len] = task
                    b.out_len += 1
                break
            nev += 1
            if nev > cap:
                # flagged, never truncated: drop everything this task produced
                status[task] = 1
                counts[task] = 0
                events[task] = nev
                b.out_len = out_start
                if radius >= 0:
                    for j in range(tally.shape[1]):
                        tally[task, j] = 0
                return 0
            v = _uniform(key, &counter) * rate
            if v < kappa:
                w = _uniform(key, &counter)
                j = 0
                while j < K - 1 and not (w < cum[j]):
                    j += 1
                for i in range(d):
                    x[i] += offsets[j, i]
            elif v < split_edge:
                if top == b.stack_cap:
                    if _grow_stack(b, d) != 0:
                        return -1
                for i in range(d):
                    b.stack_pos[top * d + i] = x[i]
                b.stack_time[top] = t
                top += 1
            else:
                break
    counts[task] = found
    events[task] = nev
    return 0


def simulate_chunk(origins, stream_ids, seed, offsets, cum, double kappa,
                   double beta, double horizon, cap, tally_center=None,
                   tally_radius=-1, tally_relative=True, want_positions=False):
    """Simulate one subpopulation per task.

    Returns ``(counts, status, events, tally, positions, owners)``; ``tally`` is
    ``None`` when ``tally_radius < 0`` and ``positions``/``owners`` are empty
    unless ``want_positions``.
    """
    cdef const int64_t[:, ::1] org = np.ascontiguousarray(origins, dtype=np.int64)
    cdef const uint64_t[::1] sids = np.ascontiguousarray(stream_ids, dtype=np.uint64)
    cdef const int64_t[:, ::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[::1] cw = np.ascontiguousarray(cum, dtype=np.float64)
    cdef int64_t n = org.shape[0]
    cdef int d = org.shape[1]
    cdef int K = offs.shape[0]
    if d > 16:
        raise ValueError("dimension above 16 not supported by the compiled core")
    if offs.shape[1] != d:
        raise ValueError("offsets and origins disagree on dimension")
    cdef int64_t radius = tally_radius
    cdef bint relative = tally_relative
    cdef bint want = want_positions
    cdef int64_t c_cap = cap
    cdef uint64_t c_seed = seed
    if tally_center is None:
        tally_center = np.zeros(d, dtype=np.int64)
    cdef const int64_t[::1] tc = np.ascontiguousarray(tally_center, dtype=np.int64)

    counts_arr = np.zeros(n, dtype=np.int64)
    status_arr = np.zeros(n, dtype=np.int8)
    events_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t ncell = (2 * radius + 1) ** d if radius >= 0 else 1
    tally_arr = np.zeros((n, ncell), dtype=np.int64)
    cdef int64_t[::1] counts_v = counts_arr
    cdef int8_t[::1] status_v = status_arr
    cdef int64_t[::1] events_v = events_arr
    cdef int64_t[:, ::1] tally_v = tally_arr

    cdef Buffers b
    b.stack_cap = 64
    b.stack_pos = <int64_t*> malloc(b.stack_cap * d * sizeof(int64_t))
    b.stack_time = <double*> malloc(b.stack_cap * sizeof(double))
    b.out_cap = 64
    b.out_len = 0
    b.out_pos = <int64_t*> malloc(b.out_cap * d * sizeof(int64_t))
    b.out_owner = <int64_t*> malloc(b.out_cap * sizeof(int64_t))
    if b.stack_pos == NULL or b.stack_time == NULL or b.out_pos == NULL or b.out_owner == NULL:
        free(b.stack_pos); free(b.stack_time); free(b.out_pos); free(b.out_owner)
        raise MemoryError()

    cdef uint64_t mseed = _mix64(c_seed)
    cdef int64_t task
    cdef int rc = 0
    try:
        with nogil:
            for task in range(n):
                rc = _run_task(task, org, _mix64(mseed + (sids[task] + 1) * STREAM_MULT),
                               offs, cw, kappa, beta, horizon, c_cap, tc, radius,
                               relative, want, counts_v, status_v, events_v, tally_v,
                               &b, d, K)
                if rc != 0:
                    break
        if rc != 0:
            raise MemoryError("particle stack allocation failed")
        positions = np.empty((b.out_len, d), dtype=np.int64)
        owners = np.empty(b.out_len, dtype=np.int64)
        if b.out_len:
            positions[:] = np.asarray(<int64_t[:b.out_len * d]> b.out_pos).reshape(b.out_len, d)
            owners[:] = np.asarray(<int64_t[:b.out_len]> b.out_owner)
    finally:
        free(b.stack_pos); free(b.stack_time); free(b.out_pos); free(b.out_owner)
    return (counts_arr, status_arr, events_arr,
            tally_arr if radius >= 0 else None, positions, owners)

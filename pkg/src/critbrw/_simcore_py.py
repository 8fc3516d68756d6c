"""Pure-Python event loop, used when the compiled core is unavailable.

Draw-for-draw identical to ``_simcore.pyx``; see ``rng`` for the stream
construction.  Roughly two orders of magnitude slower.
"""

import math

import numpy as np

from .rng import GOLDEN, MASK64, _TO_UNIT, mix64, stream_key

BACKEND = "python"


def _run_task(origin, key, offsets, cum, kappa, beta, horizon, cap,
              tally_center, radius, relative, want_positions, tally_row, out):
    d = len(origin)
    K = len(cum)
    rate = kappa + 2.0 * beta
    split_edge = kappa + beta
    side = 2 * radius + 1
    counter = 0
    found = 0
    nev = 0
    out_start = len(out)
    stack = [(tuple(origin), 0.0)]
    while stack:
        pos, t = stack.pop()
        x = list(pos)
        while True:
            counter += 1
            u = (mix64((key + counter * GOLDEN) & MASK64) >> 11) * _TO_UNIT
            t = t - math.log(1.0 - u) / rate
            if t > horizon:
                found += 1
                if radius >= 0:
                    flat = 0
                    for i in range(d):
                        rel = x[i] - tally_center[i]
                        if relative:
                            rel -= origin[i]
                        if rel < -radius or rel > radius:
                            break
                        flat = flat * side + (rel + radius)
                    else:
                        tally_row[flat] += 1
                if want_positions:
                    out.append(tuple(x))
                break
            nev += 1
            if nev > cap:
                del out[out_start:]
                if radius >= 0:
                    tally_row[:] = 0
                return 0, 1, nev
            counter += 1
            v = (mix64((key + counter * GOLDEN) & MASK64) >> 11) * _TO_UNIT * rate
            if v < kappa:
                counter += 1
                w = (mix64((key + counter * GOLDEN) & MASK64) >> 11) * _TO_UNIT
                j = 0
                while j < K - 1 and not (w < cum[j]):
                    j += 1
                off = offsets[j]
                for i in range(d):
                    x[i] += off[i]
            elif v < split_edge:
                stack.append((tuple(x), t))
            else:
                break
    return found, 0, nev


def simulate_chunk(origins, stream_ids, seed, offsets, cum, kappa, beta,
                   horizon, cap, tally_center=None, tally_radius=-1,
                   tally_relative=True, want_positions=False):
    origins = np.ascontiguousarray(origins, dtype=np.int64)
    n, d = origins.shape
    offs = [tuple(int(c) for c in row) for row in np.asarray(offsets, dtype=np.int64)]
    cw = [float(c) for c in cum]
    if tally_center is None:
        tally_center = np.zeros(d, dtype=np.int64)
    tc = [int(c) for c in tally_center]
    radius = int(tally_radius)
    kappa, beta, horizon, cap = float(kappa), float(beta), float(horizon), int(cap)

    counts = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int8)
    events = np.zeros(n, dtype=np.int64)
    ncell = (2 * radius + 1) ** d if radius >= 0 else 1
    tally = np.zeros((n, ncell), dtype=np.int64)
    positions = []
    owners = []
    for task in range(n):
        origin = [int(c) for c in origins[task]]
        key = stream_key(int(seed), int(stream_ids[task]))
        before = len(positions)
        found, st, nev = _run_task(origin, key, offs, cw, kappa, beta, horizon, cap,
                                   tc, radius, bool(tally_relative),
                                   bool(want_positions), tally[task], positions)
        counts[task], status[task], events[task] = found, st, nev
        owners.extend([task] * (len(positions) - before))
    pos_arr = np.array(positions, dtype=np.int64).reshape(len(positions), d)
    return (counts, status, events, tally if radius >= 0 else None,
            pos_arr, np.array(owners, dtype=np.int64))

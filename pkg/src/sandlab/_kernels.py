"""Compiled inner loops for toppling dynamics.

Everything here works on raw arrays; the object-level API lives in
:mod:`sandlab.engine`.  Label codes are fixed as 0 = s, 1 = r, 2 = l
(see :mod:`sandlab.lattice`).

Order conventions.  Quenched stabilization uses an event-driven stack with
bulk topplings (a site holding h particles topples floor(h/2) times at
once); the abelian property makes the final state and odometer independent
of this choice.  Annealed stabilization consumes one fresh random label per
toppling, so the schedule is part of the model definition: we fix repeated
left-to-right sweeps, toppling each site that is unstable when the sweep
reaches it exactly once per sweep.  On the complete graph the schedule is
uniform choice among currently active sites.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_UNLIMITED = np.int64(2**62)


# --- quenched 1D stabilization (event-driven, bulk topplings) ---


@njit(cache=True)
def stabilize_1d_quenched(h, odo, labels, wrapped, budget):
    """Stabilize in place; return (stable, topplings, lost_left, lost_right).

    ``budget`` caps the number of topplings performed by this call (bulk
    topplings count with their multiplicity); pass a negative value for no
    cap.  ``odo`` accumulates per-site toppling counts.
    """
    m = h.shape[0]
    cap = budget if budget >= 0 else _UNLIMITED
    stack = np.empty(m, dtype=np.int64)
    in_stack = np.zeros(m, dtype=np.bool_)
    sp = 0
    for x in range(m):
        if h[x] >= 2:
            stack[sp] = x
            sp += 1
            in_stack[x] = True
    topplings = np.int64(0)
    lost_left = np.int64(0)
    lost_right = np.int64(0)
    while sp > 0:
        sp -= 1
        x = stack[sp]
        in_stack[x] = False
        if h[x] < 2:
            continue
        k = h[x] >> 1
        if topplings + k > cap:
            k = cap - topplings
            if k <= 0:
                return False, topplings, lost_left, lost_right
        lab = labels[x]
        h[x] -= 2 * k
        odo[x] += k
        topplings += k
        # Destinations of the 2k shed particles.
        if lab == 0:  # s: k to each side
            left_amt = k
            right_amt = k
        elif lab == 1:  # r: 2k to the right
            left_amt = 0
            right_amt = 2 * k
        else:  # l: 2k to the left
            left_amt = 2 * k
            right_amt = 0
        if left_amt > 0:
            if x > 0:
                xl = x - 1
                h[xl] += left_amt
                if h[xl] >= 2 and not in_stack[xl]:
                    stack[sp] = xl
                    sp += 1
                    in_stack[xl] = True
            elif wrapped:
                xl = m - 1
                h[xl] += left_amt
                if h[xl] >= 2 and not in_stack[xl]:
                    stack[sp] = xl
                    sp += 1
                    in_stack[xl] = True
            else:
                lost_left += left_amt
        if right_amt > 0:
            if x < m - 1:
                xr = x + 1
                h[xr] += right_amt
                if h[xr] >= 2 and not in_stack[xr]:
                    stack[sp] = xr
                    sp += 1
                    in_stack[xr] = True
            elif wrapped:
                xr = 0
                h[xr] += right_amt
                if h[xr] >= 2 and not in_stack[xr]:
                    stack[sp] = xr
                    sp += 1
                    in_stack[xr] = True
            else:
                lost_right += right_amt
        if h[x] >= 2 and not in_stack[x]:
            stack[sp] = x
            sp += 1
            in_stack[x] = True
    return True, topplings, lost_left, lost_right


# --- annealed 1D stabilization (left-to-right sweeps, one label per toppling) ---


@njit(cache=True)
def _draw_label():
    """Fresh annealed label: s w.p. 1/2, l w.p. 1/4, r w.p. 1/4."""
    u = np.random.random()
    if u < 0.5:
        return 0
    elif u < 0.75:
        return 2
    return 1


@njit(cache=True)
def _sweep_topple_at(h, odo, x, m, wrapped):
    """One annealed toppling at x; returns (lost_left, lost_right)."""
    lab = _draw_label()
    h[x] -= 2
    odo[x] += 1
    ll = np.int64(0)
    lr = np.int64(0)
    if lab == 0:
        la, ra = 1, 1
    elif lab == 1:
        la, ra = 0, 2
    else:
        la, ra = 2, 0
    if la > 0:
        if x > 0:
            h[x - 1] += la
        elif wrapped:
            h[m - 1] += la
        else:
            ll += la
    if ra > 0:
        if x < m - 1:
            h[x + 1] += ra
        elif wrapped:
            h[0] += ra
        else:
            lr += ra
    return ll, lr


@njit(cache=True)
def stabilize_1d_annealed(h, odo, wrapped, budget, seed):
    """Annealed counterpart of stabilize_1d_quenched; seeds its own label
    stream.  Returns (stable, topplings, lost_left, lost_right)."""
    np.random.seed(seed)
    m = h.shape[0]
    cap = budget if budget >= 0 else _UNLIMITED
    topplings = np.int64(0)
    lost_left = np.int64(0)
    lost_right = np.int64(0)
    while True:
        toppled_any = False
        for x in range(m):
            if h[x] >= 2:
                if topplings >= cap:
                    return False, topplings, lost_left, lost_right
                ll, lr = _sweep_topple_at(h, odo, x, m, wrapped)
                lost_left += ll
                lost_right += lr
                topplings += 1
                toppled_any = True
        if not toppled_any:
            return True, topplings, lost_left, lost_right


@njit(cache=True)
def _settle_annealed_window(h, odo, lo, hi, m, cap, topplings):
    """Sweep-stabilize an open line assuming every unstable site lies in
    [lo, hi].

    The window grows as topplings push particles outward, so each pass
    only walks the active region; the toppling and label-draw sequence is
    identical to a full left-to-right sweep because sites outside the
    window are stable no-ops.  Returns
    (stable, topplings, lost_left, lost_right, new_lo, new_hi).
    """
    lost_left = np.int64(0)
    lost_right = np.int64(0)
    while True:
        toppled_any = False
        x = lo
        while x <= hi:
            if h[x] >= 2:
                if topplings >= cap:
                    return False, topplings, lost_left, lost_right, lo, hi
                ll, lr = _sweep_topple_at(h, odo, x, m, False)
                lost_left += ll
                lost_right += lr
                topplings += 1
                toppled_any = True
                if x == lo and lo > 0 and h[lo - 1] >= 2:
                    lo -= 1
                if x == hi and hi < m - 1 and h[hi + 1] >= 2:
                    hi += 1
            x += 1
        if not toppled_any:
            return True, topplings, lost_left, lost_right, lo, hi


# --- driven loops on the interval ---


@njit(cache=True)
def drive_1d_quenched(h, odo, labels, add_sites, burn, occ_out, occ_stride, safety):
    """Add particles at add_sites one at a time, stabilizing after each.

    Occupied-site counts are accumulated over the additions with index
    >= burn (the stable configurations here are 0/1-valued, so the count
    equals the particle total, tracked incrementally).  Every occ_stride-th
    addition also records the instantaneous count into occ_out when
    occ_stride > 0.  Returns (occ_sum, samples, total, aborted_at); an
    addition whose cascade exceeds ``safety`` topplings aborts with its
    index, which signals a non-stabilizing environment.
    """
    m = h.shape[0]
    total = np.int64(0)
    for x in range(m):
        total += h[x]
    occ_sum = np.int64(0)
    samples = np.int64(0)
    rec = 0
    for i in range(add_sites.shape[0]):
        a = add_sites[i]
        h[a] += 1
        total += 1
        stable, _, ll, lr = stabilize_1d_quenched(h, odo, labels, False, safety)
        if not stable:
            return occ_sum, samples, total, i
        total -= ll + lr
        if i >= burn:
            occ_sum += total
            samples += 1
        if occ_stride > 0 and (i + 1) % occ_stride == 0 and rec < occ_out.shape[0]:
            occ_out[rec] = total
            rec += 1
    return occ_sum, samples, total, np.int64(-1)


@njit(cache=True)
def drive_1d_annealed(h, odo, add_sites, burn, occ_out, occ_stride, safety, seed):
    """Annealed version of drive_1d_quenched (interval only)."""
    np.random.seed(seed)
    m = h.shape[0]
    total = np.int64(0)
    for x in range(m):
        total += h[x]
    occ_sum = np.int64(0)
    samples = np.int64(0)
    rec = 0
    for i in range(add_sites.shape[0]):
        a = add_sites[i]
        h[a] += 1
        total += 1
        stable, _, ll, lr, _, _ = _settle_annealed_window(
            h, odo, a, a, m, safety, np.int64(0)
        )
        if not stable:
            return occ_sum, samples, total, i
        total -= ll + lr
        if i >= burn:
            occ_sum += total
            samples += 1
        if occ_stride > 0 and (i + 1) % occ_stride == 0 and rec < occ_out.shape[0]:
            occ_out[rec] = total
            rec += 1
    return occ_sum, samples, total, np.int64(-1)


# --- complete graph with symmetric resettling ---


@njit(cache=True)
def stabilize_complete(h, odo, budget, seed, g_out, g_stride):
    """Stabilize on the complete graph with self-loops.

    One toppling removes two particles from a uniformly chosen active site
    and lands each on an independently uniform site.  ``g_out`` (when
    g_stride > 0) records the odd-height site count every g_stride
    topplings.  Returns (stable, topplings, odd_sites, recorded).
    """
    np.random.seed(seed)
    n = h.shape[0]
    cap = budget if budget >= 0 else _UNLIMITED
    active = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    na = 0
    g = np.int64(0)
    for x in range(n):
        if h[x] >= 2:
            active[na] = x
            pos[x] = na
            na += 1
        if h[x] % 2 == 1:
            g += 1
    topplings = np.int64(0)
    rec = 0
    while na > 0:
        if topplings >= cap:
            return False, topplings, g, rec
        i = np.random.randint(0, na)
        x = active[i]
        h[x] -= 2
        odo[x] += 1
        if h[x] < 2:
            na -= 1
            last = active[na]
            active[i] = last
            pos[last] = i
            pos[x] = -1
        for _ in range(2):
            u = np.random.randint(0, n)
            if h[u] % 2 == 0:
                g += 1
            else:
                g -= 1
            h[u] += 1
            if h[u] == 2 and pos[u] < 0:
                active[na] = u
                pos[u] = na
                na += 1
        topplings += 1
        if g_stride > 0 and topplings % g_stride == 0 and rec < g_out.shape[0]:
            g_out[rec] = g
            rec += 1
    return True, topplings, g, rec


@njit(cache=True)
def drive_complete_sink(h, target_moves, burn, seed, safety, max_additions):
    """Driven complete graph with site 0 acting as a sink.

    Particles are added at uniform non-sink sites; anything landing on the
    sink disappears.  Every parity flip of a non-sink site (the addition
    itself, and each toppled particle that misses the sink) is one move of
    the no-stopping urn walk.  After ``burn`` additions the odd-height
    count g is accumulated after each move until exactly ``target_moves``
    moves are recorded (a fixed window, so that the window end does not
    condition on the trajectory), and separately at the stable snapshot
    after each recorded addition.  Returns
    (move_g_sum, moves, snap_g_sum, snapshots, aborted_at).
    """
    np.random.seed(seed)
    n = h.shape[0]
    h[0] = 0
    active = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    na = 0
    g = np.int64(0)
    for x in range(1, n):
        if h[x] >= 2:
            active[na] = x
            pos[x] = na
            na += 1
        if h[x] % 2 == 1:
            g += 1
    move_g_sum = np.int64(0)
    moves = np.int64(0)
    snap_g_sum = np.int64(0)
    snapshots = np.int64(0)
    for i in range(max_additions):
        if moves >= target_moves:
            break
        record = i >= burn
        a = 1 + np.random.randint(0, n - 1)
        if h[a] % 2 == 0:
            g += 1
        else:
            g -= 1
        h[a] += 1
        if record and moves < target_moves:
            move_g_sum += g
            moves += 1
        if h[a] == 2 and pos[a] < 0:
            active[na] = a
            pos[a] = na
            na += 1
        topplings = np.int64(0)
        while na > 0:
            if topplings >= safety:
                return move_g_sum, moves, snap_g_sum, snapshots, i
            j = np.random.randint(0, na)
            x = active[j]
            h[x] -= 2
            if h[x] < 2:
                na -= 1
                last = active[na]
                active[j] = last
                pos[last] = j
                pos[x] = -1
            for _ in range(2):
                u = np.random.randint(0, n)
                if u == 0:
                    continue  # swallowed by the sink
                if h[u] % 2 == 0:
                    g += 1
                else:
                    g -= 1
                h[u] += 1
                if record and moves < target_moves:
                    move_g_sum += g
                    moves += 1
                if h[u] == 2 and pos[u] < 0:
                    active[na] = u
                    pos[u] = na
                    na += 1
            topplings += 1
        if record and moves <= target_moves:
            snap_g_sum += g
            snapshots += 1
    return move_g_sum, moves, snap_g_sum, snapshots, np.int64(-1)

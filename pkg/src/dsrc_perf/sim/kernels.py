"""Event-skipping slot kernels for the broadcast channel.

Time is an integer slot index.  Between two transmissions the channel is idle
and every waiting vehicle's countdown is deterministic, so the kernels jump
straight from one event (packet generation or transmission start) to the
next instead of stepping every slot.

Two interchangeable implementations of the same loop live here:

* ``simulate_numba``  - scalar loops compiled with numba ``@njit``;
* ``simulate_numpy``  - the same loop in Python with the O(N) per-event work
  vectorised in numpy.

Set ``DSRC_PERF_NO_NUMBA=1`` to force the numpy path (it is also used when
numba cannot be imported).  Both consume identical pre-drawn random arrays,
so their outputs are bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

DOT11P = 0
SPCDC = 1

DELIVERED = 0
COLLIDED = 1
DROPPED = 2
IN_FLIGHT = 3
NOT_GENERATED = -1

NEVER = np.iinfo(np.int64).max // 4

# stale contenders discounted per sensed collision (pairwise collisions)
COLLISION_CREDIT = 2

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def use_numba() -> bool:
    return HAVE_NUMBA and os.environ.get("DSRC_PERF_NO_NUMBA", "") not in ("1", "true", "yes")


@njit(cache=True)
def simulate_numba(
    policy, phase, frac, period, end_slot, slots_per_tx, difs_slots,
    cw_draws, omega, pkts_per_epoch, spcdc_c, initial_busy_end, oracle,
    tx_slot, outcome,
):
    n, n_pk = tx_slot.shape
    has_pkt = np.zeros(n, np.bool_)
    sense = np.zeros(n, np.bool_)
    cur = np.zeros(n, np.int64)
    next_j = np.zeros(n, np.int64)
    target = np.full(n, NEVER, np.int64)
    counter = np.zeros(n, np.int64)
    is_tx = np.zeros(n, np.bool_)
    tl_phase = np.full((n, n) if policy == SPCDC else (1, 1), -1, np.int64)
    last_rx = np.full((n, n) if policy == SPCDC else (1, 1), -1, np.int64)

    # sensed collisions: each bystander discounts COLLISION_CREDIT stale
    # contenders for one generation period (FIFO, expiries are monotone)
    max_coll = n * n_pk + 1 if policy == SPCDC else 1
    coll_exp = np.zeros(max_coll, np.int64)
    coll_first = np.zeros(max_coll, np.int64)
    coll_k = np.zeros(max_coll, np.int64)
    members = np.zeros(max_coll * 2 + n, np.int64)
    self_part = np.zeros(n, np.int64)
    credit = 0
    c_head = 0
    c_tail = 0
    m_tail = 0
    coll_pending = False

    busy_end = initial_busy_end
    on_air = 0
    rx_owner = -1
    rx_gen = -1
    n_events = 0

    while True:
        g_min = NEVER
        gi = -1
        for i in range(n):
            if next_j[i] < n_pk:
                g = phase[i] + next_j[i] * period
                if g < end_slot and g < g_min:
                    g_min = g
                    gi = i
        t_min = NEVER
        for i in range(n):
            if has_pkt[i] and target[i] < t_min:
                t_min = target[i]
        if g_min >= end_slot and t_min >= end_slot:
            break
        n_events += 1
        t_evt = min(g_min, t_min)

        if rx_owner >= 0 and t_evt >= busy_end:
            ph = rx_gen % period
            for r in range(n):
                if r != rx_owner:
                    tl_phase[r, rx_owner] = ph
                    last_rx[r, rx_owner] = rx_gen
            rx_owner = -1
        if coll_pending and t_evt >= busy_end:
            credit += COLLISION_CREDIT
            for q in range(coll_k[c_tail - 1]):
                self_part[members[coll_first[c_tail - 1] + q]] += COLLISION_CREDIT
            coll_pending = False
        while c_head < c_tail and coll_exp[c_head] <= t_evt:
            credit -= COLLISION_CREDIT
            for q in range(coll_k[c_head]):
                self_part[members[coll_first[c_head] + q]] -= COLLISION_CREDIT
            c_head += 1

        if g_min <= t_min:
            i = gi
            g = g_min
            if has_pkt[i]:
                outcome[i, cur[i]] = DROPPED
            j = next_j[i]
            cur[i] = j
            next_j[i] = j + 1
            has_pkt[i] = True
            outcome[i, j] = IN_FLIGHT
            busy = g < busy_end
            if policy == DOT11P:
                if busy:
                    sense[i] = False
                    counter[i] = cw_draws[i, j]
                    target[i] = busy_end + difs_slots + counter[i]
                else:
                    sense[i] = True
                    target[i] = g + difs_slots
            else:
                c = 0
                if oracle:
                    for v in range(n):
                        if v == i:
                            continue
                        if has_pkt[v]:
                            c += 1
                        elif next_j[v] < n_pk and phase[v] + next_j[v] * period == g:
                            c += 1
                    if busy:
                        c += on_air
                else:
                    for v in range(n):
                        ph = tl_phase[i, v]
                        if v == i or ph < 0:
                            continue
                        lg = g - (g - ph) % period
                        if lg >= 0 and lg > last_rx[i, v]:
                            c += 1
                    c = max(c - (credit - self_part[i]), 0)
                b = spcdc_c * (c + 1) + omega[i, j // pkts_per_epoch]
                if b < 0:
                    b = 0
                if busy:
                    target[i] = busy_end + max(b - 1, 0)
                else:
                    target[i] = g + b
        else:
            t = t_min
            # slot-synchronised backoff transmitters pre-empt immediate
            # (DIFS-only) access; among immediate ones the earliest arrival wins
            k_backoff = 0
            first = -1
            for i in range(n):
                if has_pkt[i] and target[i] == t:
                    if sense[i]:
                        if first < 0 or frac[i] < frac[first]:
                            first = i
                    else:
                        k_backoff += 1
            k = 0
            owner = -1
            for i in range(n):
                is_tx[i] = has_pkt[i] and target[i] == t and (
                    (not sense[i]) if k_backoff > 0 else i == first
                )
                if is_tx[i]:
                    k += 1
                    owner = i
            new_end = t + slots_per_tx
            for i in range(n):
                if not has_pkt[i]:
                    continue
                if is_tx[i]:
                    tx_slot[i, cur[i]] = t
                    outcome[i, cur[i]] = COLLIDED if k > 1 else DELIVERED
                    has_pkt[i] = False
                    target[i] = NEVER
                elif policy == DOT11P:
                    if sense[i]:
                        sense[i] = False
                        counter[i] = cw_draws[i, cur[i]]
                    else:
                        counter[i] = min(counter[i], target[i] - t)
                    target[i] = new_end + difs_slots + counter[i]
                else:
                    target[i] = new_end + max(target[i] - t - 1, 0)
            busy_end = new_end
            on_air = k
            if k == 1 and policy == SPCDC:
                rx_owner = owner
                rx_gen = phase[owner] + cur[owner] * period
            elif k > 1 and policy == SPCDC:
                coll_exp[c_tail] = t + period
                coll_first[c_tail] = m_tail
                coll_k[c_tail] = k
                for i in range(n):
                    if is_tx[i]:
                        members[m_tail] = i
                        m_tail += 1
                c_tail += 1
                coll_pending = True
    return n_events


def simulate_numpy(
    policy, phase, frac, period, end_slot, slots_per_tx, difs_slots,
    cw_draws, omega, pkts_per_epoch, spcdc_c, initial_busy_end, oracle,
    tx_slot, outcome,
):
    n, n_pk = tx_slot.shape
    idx = np.arange(n)
    has_pkt = np.zeros(n, bool)
    sense = np.zeros(n, bool)
    cur = np.zeros(n, np.int64)
    next_j = np.zeros(n, np.int64)
    target = np.full(n, NEVER, np.int64)
    counter = np.zeros(n, np.int64)
    spcdc = policy == SPCDC
    if spcdc:
        tl_phase = np.full((n, n), -1, np.int64)
        last_rx = np.full((n, n), -1, np.int64)

    credit = 0
    self_part = np.zeros(n, np.int64)
    collisions = []  # (expiry, participant ids), oldest first
    c_head = 0
    coll_pending = False

    busy_end = int(initial_busy_end)
    on_air = 0
    rx_owner = -1
    rx_gen = -1
    n_events = 0

    next_gen = np.where(next_j < n_pk, phase + next_j * period, NEVER)
    next_gen[next_gen >= end_slot] = NEVER

    while True:
        gi = int(np.argmin(next_gen))
        g_min = int(next_gen[gi])
        t_min = int(target.min())
        if g_min >= end_slot and t_min >= end_slot:
            break
        n_events += 1
        t_evt = min(g_min, t_min)

        if rx_owner >= 0 and t_evt >= busy_end:
            others = idx != rx_owner
            tl_phase[others, rx_owner] = rx_gen % period
            last_rx[others, rx_owner] = rx_gen
            rx_owner = -1
        if coll_pending and t_evt >= busy_end:
            credit += COLLISION_CREDIT
            self_part[collisions[-1][1]] += COLLISION_CREDIT
            coll_pending = False
        while c_head < len(collisions) and collisions[c_head][0] <= t_evt:
            credit -= COLLISION_CREDIT
            self_part[collisions[c_head][1]] -= COLLISION_CREDIT
            c_head += 1

        if g_min <= t_min:
            i, g = gi, g_min
            if has_pkt[i]:
                outcome[i, cur[i]] = DROPPED
            j = int(next_j[i])
            cur[i] = j
            next_j[i] = j + 1
            nxt = phase[i] + (j + 1) * period
            next_gen[i] = nxt if (j + 1 < n_pk and nxt < end_slot) else NEVER
            has_pkt[i] = True
            outcome[i, j] = IN_FLIGHT
            busy = g < busy_end
            if not spcdc:
                if busy:
                    sense[i] = False
                    counter[i] = cw_draws[i, j]
                    target[i] = busy_end + difs_slots + counter[i]
                else:
                    sense[i] = True
                    target[i] = g + difs_slots
            else:
                if oracle:
                    mask = has_pkt | (next_gen == g)
                    mask[i] = False
                    c = int(mask.sum()) + (on_air if busy else 0)
                else:
                    ph = tl_phase[i]
                    known = ph >= 0
                    known[i] = False
                    lg = g - np.mod(g - ph, period)
                    c = int(np.count_nonzero(known & (lg >= 0) & (lg > last_rx[i])))
                    c = max(c - (credit - int(self_part[i])), 0)
                b = max(spcdc_c * (c + 1) + int(omega[i, j // pkts_per_epoch]), 0)
                target[i] = busy_end + max(b - 1, 0) if busy else g + b
        else:
            t = t_min
            tx = target == t
            backoff_tx = tx & ~sense
            if backoff_tx.any():
                tx = backoff_tx
            else:
                cand = np.flatnonzero(tx)
                tx = np.zeros(n, bool)
                tx[cand[np.argmin(frac[cand])]] = True
            k = int(tx.sum())
            new_end = t + slots_per_tx
            tx_ids = np.flatnonzero(tx)
            tx_slot[tx_ids, cur[tx_ids]] = t
            outcome[tx_ids, cur[tx_ids]] = COLLIDED if k > 1 else DELIVERED
            has_pkt[tx] = False
            target[tx] = NEVER
            sense[tx] = False
            wait = has_pkt
            if not spcdc:
                fresh = wait & sense
                counter[fresh] = cw_draws[fresh, cur[fresh]]
                backing = wait & ~sense
                counter[backing] = np.minimum(counter[backing], target[backing] - t)
                sense[wait] = False
                target[wait] = new_end + difs_slots + counter[wait]
            else:
                target[wait] = new_end + np.maximum(target[wait] - t - 1, 0)
            busy_end = new_end
            on_air = k
            if k == 1 and spcdc:
                rx_owner = int(tx_ids[0])
                rx_gen = int(phase[rx_owner] + cur[rx_owner] * period)
            elif k > 1 and spcdc:
                collisions.append((t + period, tx_ids))
                coll_pending = True
    return n_events


def simulate(*args):
    if use_numba():
        return simulate_numba(*args)
    return simulate_numpy(*args)
